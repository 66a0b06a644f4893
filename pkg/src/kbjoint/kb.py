"""Triple files, vocabularies with inverse relations, and fact indexes."""

from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

INVERSE_MARKER = "**-1**"


class ParseError(ValueError):
    """A line of a triple file could not be parsed."""

    def __init__(self, lineno: int, line: str, source: str = "<input>"):
        self.lineno = lineno
        self.line = line
        self.source = source
        super().__init__(f"{source}:{lineno}: expected 3 tab-separated fields, got {line!r}")


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class PathSample(NamedTuple):
    head: int
    relations: tuple[int, ...]
    tail: int


def parse_triples(source) -> list[tuple[str, str, str]]:
    """Read ``head<TAB>relation<TAB>tail`` lines.

    ``source`` is a path or an open text stream. Blank lines are skipped.
    """
    if isinstance(source, (str, os.PathLike)):
        name = os.fspath(source)
        with open(source, encoding="utf-8") as fh:
            return _parse_lines(fh, name)
    return _parse_lines(source, getattr(source, "name", "<input>"))


def _parse_lines(lines: Iterable[str], name: str) -> list[tuple[str, str, str]]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(lineno, line, name)
        out.append((fields[0], fields[1], fields[2]))
    return out


def parse_triples_text(text: str) -> list[tuple[str, str, str]]:
    return _parse_lines(io.StringIO(text), "<string>")


class KnowledgeBase:
    """Immutable fact store closed under relation inversion.

    Relation ids ``0 .. n_base-1`` are the input relations, and id ``r + n_base``
    is the inverse of ``r``. Entity and relation ids follow first appearance.
    """

    def __init__(self, entities: list[str], base_relations: list[str], facts: Iterable[Triple]):
        self.entities = list(entities)
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.n_base = len(base_relations)
        self.relations = list(base_relations) + [r + INVERSE_MARKER for r in base_relations]
        self.relation_index = {r: i for i, r in enumerate(self.relations)}

        fact_list: list[Triple] = []
        seen: set[Triple] = set()
        for h, r, t in facts:
            for f in (Triple(h, r, t), Triple(t, self.inverse(r), h)):
                if f not in seen:
                    seen.add(f)
                    fact_list.append(f)
        self.facts = frozenset(seen)
        self.fact_list = fact_list
        self.fact_array = np.array(fact_list, dtype=np.int64).reshape(-1, 3)

        head_index: dict[tuple[int, int], list[int]] = {}
        out_edges: list[list[tuple[int, int]]] = [[] for _ in self.entities]
        for h, r, t in fact_list:
            head_index.setdefault((h, r), []).append(t)
            out_edges[h].append((r, t))
        self.head_index = head_index
        self.out_edges = out_edges
        counts = Counter(f.relation for f in fact_list)
        self.relation_frequency = np.array(
            [counts.get(r, 0) for r in range(self.n_relations)], dtype=np.int64
        )
        self._content: dict[int, frozenset[tuple[int, int]]] = {}

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def inverse(self, r: int) -> int:
        if self.n_base == 0:
            raise KeyError(r)
        return (r + self.n_base) % (2 * self.n_base)

    def check_relation(self, r: int) -> None:
        if not (isinstance(r, (int, np.integer)) and 0 <= r < self.n_relations):
            raise KeyError(f"unknown relation id {r!r}")

    def check_entity(self, e: int) -> None:
        if not (isinstance(e, (int, np.integer)) and 0 <= e < self.n_entities):
            raise KeyError(f"unknown entity id {e!r}")

    def __len__(self) -> int:
        return len(self.fact_list)

    def tails(self, h: int, r: int) -> list[int]:
        return self.head_index.get((h, r), [])

    def encode(self, raw: Iterable[tuple[str, str, str]]) -> list[Triple]:
        """Map surface triples onto ids; raises KeyError for unknown names."""
        return [
            Triple(self.entity_index[h], self.relation_index[r], self.entity_index[t])
            for h, r, t in raw
        ]


def build_kb(raw_triples: Iterable[tuple[str, str, str]]) -> KnowledgeBase:
    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    encoded = []
    for h, r, t in raw_triples:
        hi = entities.setdefault(h, len(entities))
        ri = relations.setdefault(r, len(relations))
        ti = entities.setdefault(t, len(entities))
        encoded.append(Triple(hi, ri, ti))
    return KnowledgeBase(list(entities), list(relations), encoded)


def content_set(kb: KnowledgeBase, r: int) -> frozenset[tuple[int, int]]:
    """All (head, tail) pairs joined by relation ``r``."""
    kb.check_relation(r)
    cached = kb._content.get(r)
    if cached is None:
        cached = frozenset(
            (h, t) for (h, rel), tails in kb.head_index.items() if rel == r for t in tails
        )
        kb._content[r] = cached
    return cached


def path_content_set(kb: KnowledgeBase, r1: int, r2: int) -> set[tuple[int, int]]:
    """All (head, tail) pairs joined by a two-hop path ``r1/r2``."""
    kb.check_relation(r1)
    kb.check_relation(r2)
    out: set[tuple[int, int]] = set()
    for h, m in content_set(kb, r1):
        for t in kb.tails(m, r2):
            out.add((h, t))
    return out


def walk(kb: KnowledgeBase, rng: np.random.Generator, start: Triple, extra_hops: int) -> PathSample:
    """Extend ``start`` by up to ``extra_hops`` uniformly random outgoing facts.

    Stops early at an entity without outgoing facts.
    """
    relations = [start.relation]
    current = start.tail
    for _ in range(extra_hops):
        edges = kb.out_edges[current]
        if not edges:
            break
        r, current = edges[rng.integers(len(edges))]
        relations.append(r)
    return PathSample(start.head, tuple(relations), current)


def sample_path(kb: KnowledgeBase, rng: np.random.Generator, poisson_mean: float) -> PathSample:
    """Random-walk path of length ``1 + Poisson(poisson_mean)`` from a uniform fact."""
    if not kb.fact_list:
        raise ValueError("cannot sample a path from an empty knowledge base")
    start = kb.fact_list[rng.integers(len(kb.fact_list))]
    extra = int(rng.poisson(poisson_mean)) if poisson_mean > 0 else 0
    return walk(kb, rng, start, extra)


def path_is_legal(kb: KnowledgeBase, path: PathSample) -> bool:
    """Whether some chain of facts realises ``path``."""
    frontier = {path.head}
    for r in path.relations:
        frontier = {t for e in frontier for t in kb.tails(e, r)}
        if not frontier:
            return False
    return path.tail in frontier


@dataclass
class DatasetSplits:
    """Train KB plus valid/test triples over a shared entity vocabulary.

    Entities only seen in valid/test get ids ``>= train.n_entities``; they have
    no parameters and are handled as out-of-vocabulary at evaluation.
    """

    train: KnowledgeBase
    valid: list[Triple]
    test: list[Triple]
    entities: list[str]
    all_facts: frozenset[Triple] = field(repr=False)
    filter_index: dict[tuple[int, int], set[int]] = field(repr=False)

    @property
    def n_known(self) -> int:
        return self.train.n_entities

    def is_oov(self, e: int) -> bool:
        return e >= self.train.n_entities


def build_splits(
    train_raw: list[tuple[str, str, str]],
    valid_raw: list[tuple[str, str, str]] = (),
    test_raw: list[tuple[str, str, str]] = (),
) -> DatasetSplits:
    """Build the train KB and encode valid/test against it.

    Raises KeyError if valid/test mention a relation absent from training.
    """
    kb = build_kb(train_raw)
    entities = list(kb.entities)
    index = dict(kb.entity_index)

    def enc(raw):
        out = []
        for h, r, t in raw:
            if r not in kb.relation_index:
                raise KeyError(f"relation {r!r} does not occur in the training data")
            hi = index.setdefault(h, len(index))
            ti = index.setdefault(t, len(index))
            if hi == len(entities):
                entities.append(h)
            if ti == len(entities):
                entities.append(t)
            out.append(Triple(hi, kb.relation_index[r], ti))
        return out

    valid = enc(valid_raw)
    test = enc(test_raw)
    all_facts = set(kb.facts)
    for h, r, t in valid + test:
        all_facts.add(Triple(h, r, t))
        all_facts.add(Triple(t, kb.inverse(r), h))
    filter_index: dict[tuple[int, int], set[int]] = {}
    for h, r, t in all_facts:
        filter_index.setdefault((h, r), set()).add(t)
    return DatasetSplits(kb, valid, test, entities, frozenset(all_facts), filter_index)


def load_splits(train_path, valid_path=None, test_path=None) -> DatasetSplits:
    return build_splits(
        parse_triples(train_path),
        parse_triples(valid_path) if valid_path else [],
        parse_triples(test_path) if test_path else [],
    )
