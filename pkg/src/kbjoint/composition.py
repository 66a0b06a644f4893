"""Mining compositional constraints ``r1/r2 ~ r3`` and ranking them with a model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kb import KnowledgeBase, content_set
from .model import ModelParams, matrix_cosines


@dataclass(frozen=True)
class CompositionalConstraint:
    r1: int
    r2: int
    r3: int
    support: int
    jaccard: float


def _adjacency(kb: KnowledgeBase) -> list[sp.csr_matrix]:
    n = kb.n_entities
    facts = kb.fact_array
    mats = []
    for r in range(kb.n_relations):
        sel = facts[facts[:, 1] == r]
        data = np.ones(len(sel), dtype=np.int32)
        mats.append(sp.csr_matrix((data, (sel[:, 0], sel[:, 2])), shape=(n, n)))
    return mats


def _pair_keys(kb: KnowledgeBase, r: int) -> np.ndarray:
    n = kb.n_entities
    return np.sort(np.fromiter((h * n + t for h, t in content_set(kb, r)), dtype=np.int64))


def extract_constraints(
    kb: KnowledgeBase, min_support: int = 50, min_jaccard: float = 0.4
) -> list[CompositionalConstraint]:
    """All non-degenerate ``(r1, r2, r3)`` whose content sets overlap enough.

    Degenerate cases ``r1 == r3`` and ``r2 == r1^-1`` are dropped. Sorted by
    Jaccard, then support (both descending), then ids.
    """
    n = kb.n_entities
    adj = _adjacency(kb)
    keys = [_pair_keys(kb, r) for r in range(kb.n_relations)]
    sizes = np.array([len(k) for k in keys])
    # |A & B| / |A | B| <= min/max, so sizes must lie within a factor of the threshold
    ratio = min_jaccard if min_jaccard > 0 else 0.0
    out = []
    for r1 in range(kb.n_relations):
        if adj[r1].nnz == 0:
            continue
        for r2 in range(kb.n_relations):
            if r2 == kb.inverse(r1) or adj[r2].nnz == 0:
                continue
            prod = (adj[r1] @ adj[r2]).tocoo()
            size = prod.nnz
            if size < min_support:
                continue
            lo = max(min_support, ratio * size)
            hi = size / ratio if ratio > 0 else np.inf
            cands = np.flatnonzero((sizes >= lo) & (sizes <= hi))
            if not len(cands):
                continue
            pkeys = np.sort(prod.row.astype(np.int64) * n + prod.col)
            for r3 in cands:
                if r3 == r1:
                    continue
                inter = np.intersect1d(pkeys, keys[r3], assume_unique=True).size
                if inter < min_support:
                    continue
                jac = inter / (size + sizes[r3] - inter)
                if jac >= min_jaccard:
                    out.append(CompositionalConstraint(r1, r2, int(r3), int(inter), float(jac)))
    out.sort(key=lambda c: (-c.jaccard, -c.support, c.r1, c.r2, c.r3))
    return out


def _rank_by_cosine(M: np.ndarray, P: np.ndarray, target: int) -> int:
    cos = matrix_cosines(P, M)
    others = np.delete(cos, target)
    return 1 + int(np.count_nonzero(others >= cos[target]))


def rank_constraint(params: ModelParams, constraint: CompositionalConstraint) -> int:
    """Rank of ``M3`` among all relation matrices by cosine with ``M1 M2`` (ties pessimistic)."""
    P = params.M[constraint.r1] @ params.M[constraint.r2]
    return _rank_by_cosine(params.M, P, constraint.r3)


def constraint_ranks(params: ModelParams, constraints, mode: str = "model", rng=None) -> list[int]:
    if not constraints:
        raise ValueError("no constraints to evaluate")
    if mode not in ("model", "random_m2"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "random_m2" and rng is None:
        raise ValueError("random_m2 needs an rng")
    ranks = []
    for c in constraints:
        r2 = c.r2 if mode == "model" else int(rng.integers(params.n_relations))
        P = params.M[c.r1] @ params.M[r2]
        ranks.append(_rank_by_cosine(params.M, P, c.r3))
    return ranks


def constraint_eval(params: ModelParams, constraints, mode: str = "model", rng=None) -> tuple[float, float]:
    """``(MR, MRR)`` over ``constraints``; ``random_m2`` swaps in a uniformly random ``M2``."""
    ranks = np.asarray(constraint_ranks(params, constraints, mode, rng), dtype=float)
    return float(ranks.mean()), float((1.0 / ranks).mean())
