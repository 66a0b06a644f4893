import os
from pathlib import Path

import numpy as np
import pytest

from kbjoint.kb import build_kb, build_splits

DATA_DIR = Path(os.environ.get("KBJOINT_DATA", Path(__file__).resolve().parents[1] / "data"))


def dataset_file(name: str, split: str) -> Path:
    return DATA_DIR / name / f"{split}.txt"


def central_diff(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. array ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        grad[idx] = (up - down) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_raw_triples(rng, n_triples, n_entities, n_relations):
    return [
        (f"e{rng.integers(n_entities)}", f"r{rng.integers(n_relations)}", f"e{rng.integers(n_entities)}")
        for _ in range(n_triples)
    ]


def planted_composition_raw(seed=0):
    """~60 entities in three types; ``r3`` holds the pairs of ``r1/r2`` minus every 20th one."""
    rng = np.random.default_rng(seed)
    A = [f"a{i}" for i in range(20)]
    B = [f"b{i}" for i in range(20)]
    C = [f"c{i}" for i in range(20)]
    r1 = {(a, "r1", b) for a in A for b in rng.choice(B, 3, replace=False)}
    r2 = {(b, "r2", C[rng.integers(20)]) for b in B}
    comp = sorted({(a, c) for a, _, b in r1 for bb, _, c in r2 if bb == b})
    r3 = {(a, "r3", c) for i, (a, c) in enumerate(comp) if i % 20 != 19}
    others = set()
    for name, (X, Y) in zip(["r4", "r5", "r6"], [(A, A), (B, A), (C, B)]):
        for _ in range(40):
            others.add((X[rng.integers(20)], name, Y[rng.integers(20)]))
    return sorted(r1) + sorted(r2) + sorted(r3) + sorted(others)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_kb():
    return build_kb([("A", "r1", "B"), ("B", "r2", "C"), ("A", "r1", "C"), ("C", "r3", "A")])


@pytest.fixture
def toy_splits():
    """20 entities, 4 relations, 80/10/10 split."""
    rng = np.random.default_rng(7)
    raw = sorted(set(random_raw_triples(rng, 160, 20, 4)))
    order = rng.permutation(len(raw))
    raw = [raw[i] for i in order]
    n = len(raw)
    train, valid, test = raw[: int(0.8 * n)], raw[int(0.8 * n) : int(0.9 * n)], raw[int(0.9 * n) :]
    names = {h for h, _, _ in train} | {t for _, _, t in train}
    rels = {r for _, r, _ in train}
    keep = lambda part: [x for x in part if x[0] in names and x[2] in names and x[1] in rels]
    return build_splits(train, keep(valid), keep(test))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str, status: str | None = None) -> None:
    status = status or ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
