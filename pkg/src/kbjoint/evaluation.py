"""Filtered ranking evaluation with out-of-vocabulary handling."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .kb import DatasetSplits, Triple
from .model import ModelParams


@dataclass
class EvalReport:
    ranks: list[int]
    mr: float
    mrr: float
    h10: float

    @classmethod
    def from_ranks(cls, ranks: Sequence[int]) -> "EvalReport":
        ranks = [int(r) for r in ranks]
        if not ranks:
            return cls([], float("nan"), float("nan"), float("nan"))
        arr = np.asarray(ranks, dtype=float)
        return cls(ranks, float(arr.mean()), float((1.0 / arr).mean()), float(100.0 * (arr <= 10).mean()))


def filtered_candidates(splits: DatasetSplits, h: int, r: int, t: int) -> np.ndarray:
    """Known entities ``e`` with ``<h, r, e>`` not a fact anywhere, plus the gold ``t``."""
    splits.train.check_relation(r)
    mask = _candidate_mask(splits, h, r, t)
    cands = np.flatnonzero(mask)
    if splits.is_oov(t):
        cands = np.append(cands, t)
    return cands


def _candidate_mask(splits: DatasetSplits, h: int, r: int, t: int) -> np.ndarray:
    n = splits.n_known
    mask = np.ones(n, dtype=bool)
    known = splits.filter_index.get((h, r))
    if known:
        idx = np.fromiter((e for e in known if e < n), dtype=np.int64)
        mask[idx] = False
    if t < n:
        mask[t] = True
    return mask


def rank_gold(params: ModelParams, h: int, r: int, t: int, candidates) -> int:
    """Pessimistic rank of gold ``t``: every other candidate scoring >= it ranks above.

    A gold id outside the parameter table (OOV) is scored with the zero vector.
    """
    scores = params.V @ (params.U[h] @ params.M[r])
    g = scores[t] if t < params.n_entities else 0.0
    cands = np.asarray(candidates, dtype=np.int64)
    others = cands[cands != t]
    return 1 + int(np.count_nonzero(scores[others] >= g))


def _rank_masked(scores: np.ndarray, gold_score: float, mask: np.ndarray, gold_known: bool) -> int:
    above = int(np.count_nonzero((scores >= gold_score) & mask))
    # a known gold sits inside the mask and counts itself once
    return above if gold_known else above + 1


class _OOVResolver:
    def __init__(self, splits: DatasetSplits):
        kb = splits.train
        counts = np.zeros((kb.n_relations, kb.n_entities), dtype=np.int64)
        if len(kb.fact_array):
            np.add.at(counts, (kb.fact_array[:, 1], kb.fact_array[:, 0]), 1)
        self.counts = counts
        degree = counts.sum(axis=0)
        self.global_head = int(np.argmax(degree)) if degree.size else 0

    @lru_cache(maxsize=None)
    def head_for(self, r: int) -> int:
        row = self.counts[r]
        if row.size == 0 or row.max() == 0:
            return self.global_head
        return int(np.argmax(row))  # argmax returns the smallest id among ties


def resolve_oov(splits: DatasetSplits, h: int, r: int, t: int, _resolver=None) -> tuple[int, bool]:
    """Return ``(head to score with, gold tail is OOV)``.

    An OOV head becomes the training entity seen most often as a head of ``r``;
    an OOV gold tail is scored with the zero vector.
    """
    if splits.is_oov(h):
        resolver = _resolver or _OOVResolver(splits)
        h = resolver.head_for(r)
    return h, splits.is_oov(t)


def query_rank(splits: DatasetSplits, params: ModelParams, h: int, r: int, t: int, resolver=None) -> int:
    h_eff, gold_oov = resolve_oov(splits, h, r, t, resolver)
    proj = params.U[h_eff] @ params.M[r]
    scores = params.V @ proj
    gold_score = 0.0 if gold_oov else scores[t]
    mask = _candidate_mask(splits, h, r, t)
    return _rank_masked(scores, gold_score, mask, not gold_oov)


def queries_for(splits: DatasetSplits, triples: Sequence[Triple], drop_oov: bool = False) -> list[tuple[int, int, int]]:
    """Tail query ``<h, r, ?>`` and head query ``<t, r^-1, ?>`` for every triple."""
    inv = splits.train.inverse
    out = []
    for h, r, t in triples:
        if drop_oov and (splits.is_oov(h) or splits.is_oov(t)):
            continue
        out.append((h, r, t))
        out.append((t, inv(r), h))
    return out


def evaluate(
    splits: DatasetSplits,
    params: ModelParams,
    triples: Sequence[Triple],
    drop_oov: bool = False,
    threads: int = 1,
) -> EvalReport:
    queries = queries_for(splits, triples, drop_oov)
    resolver = _OOVResolver(splits)

    def run(chunk):
        return [query_rank(splits, params, h, r, t, resolver) for h, r, t in chunk]

    if threads <= 1 or len(queries) < 2:
        ranks = run(queries)
    else:
        size = -(-len(queries) // threads)
        chunks = [queries[i : i + size] for i in range(0, len(queries), size)]
        with ThreadPoolExecutor(threads) as pool:
            ranks = [x for part in pool.map(run, chunks) for x in part]
    return EvalReport.from_ranks(ranks)


def oov_fraction(splits: DatasetSplits, triples: Sequence[Triple]) -> float:
    if not triples:
        return 0.0
    n = sum(1 for h, _, t in triples if splits.is_oov(h) or splits.is_oov(t))
    return n / len(triples)
