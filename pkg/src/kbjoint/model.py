"""Bilinear relation-matrix model: entity vectors, relation matrices, path scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EXP_CLAMP = 30.0


class DegenerateInputError(ValueError):
    pass


@dataclass
class ModelParams:
    """Head vectors ``U``, tail vectors ``V`` (both |E| x d) and matrices ``M`` (|R| x d x d)."""

    U: np.ndarray
    V: np.ndarray
    M: np.ndarray

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def n_entities(self) -> int:
        return self.U.shape[0]

    @property
    def n_relations(self) -> int:
        return self.M.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.U.copy(), self.V.copy(), self.M.copy())


def init_params(
    rng: np.random.Generator,
    d: int,
    n_entities: int,
    n_relations: int,
    identity_init: bool = True,
) -> ModelParams:
    """Gaussian init with variance 1/d; matrices are (I + G)/2 unless ``identity_init`` is off."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    scale = 1.0 / np.sqrt(d)
    U = rng.normal(0.0, scale, size=(n_entities, d))
    V = rng.normal(0.0, scale, size=(n_entities, d))
    G = rng.normal(0.0, scale, size=(n_relations, d, d))
    M = (np.eye(d) + G) / 2.0 if identity_init else G
    return ModelParams(U, V, M)


def _check_ids(params: ModelParams, h: int, relations: Sequence[int], t: int | None = None) -> None:
    if len(relations) < 1:
        raise ValueError("a path needs at least one relation")
    if not 0 <= h < params.n_entities:
        raise KeyError(f"unknown head entity {h}")
    if t is not None and not 0 <= t < params.n_entities:
        raise KeyError(f"unknown tail entity {t}")
    for r in relations:
        if not 0 <= r < params.n_relations:
            raise KeyError(f"unknown relation {r}")


def head_projection(params: ModelParams, h: int, relations: Sequence[int]) -> np.ndarray:
    """Row vector ``u_h^T M_{r1} ... M_{rl}`` via successive vector-matrix products."""
    _check_ids(params, h, relations)
    x = params.U[h]
    for r in relations:
        x = x @ params.M[r]
    return x


def log_score(params: ModelParams, h: int, relations: Sequence[int], t: int) -> float:
    _check_ids(params, h, relations, t)
    return float(head_projection(params, h, relations) @ params.V[t])


def score(params: ModelParams, h: int, relations: Sequence[int], t: int) -> float:
    return float(np.exp(log_score(params, h, relations, t)))


def vectorize(M: np.ndarray) -> np.ndarray:
    """Row-major flatten of ``M`` rescaled to Euclidean norm sqrt(d)."""
    d = M.shape[0]
    norm = np.linalg.norm(M)
    if norm == 0.0:
        raise DegenerateInputError("cannot vectorize a zero matrix")
    return M.reshape(-1) * (np.sqrt(d) / norm)


def normalize_matrix(M: np.ndarray) -> np.ndarray:
    """Rescale ``M`` in place to Frobenius norm sqrt(d)."""
    norm = np.linalg.norm(M)
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize a zero matrix")
    M *= np.sqrt(M.shape[0]) / norm
    return M


def orthogonal_penalty(M: np.ndarray) -> tuple[float, np.ndarray]:
    """Frobenius norm of ``M^T M - tr(M^T M)/d I`` and its gradient w.r.t. ``M``.

    The gradient is ``2 M D / ||D||``; it is taken to be 0 where D vanishes,
    which includes ``||D||`` at rounding level relative to ``tr(M^T M)``.
    """
    d = M.shape[0]
    gram = M.T @ M
    trace = np.trace(gram)
    D = gram - (trace / d) * np.eye(d)
    value = float(np.linalg.norm(D))
    if value <= 1e-13 * trace:
        return 0.0, np.zeros_like(M)
    return value, (2.0 / value) * (M @ D)


def matrix_cosines(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Cosine similarity between flattened ``P`` and each flattened matrix in ``M``."""
    p = P.reshape(-1)
    flat = M.reshape(M.shape[0], -1)
    denom = np.linalg.norm(flat, axis=1) * np.linalg.norm(p)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = flat @ p / denom
    return np.where(denom > 0, cos, 0.0)
