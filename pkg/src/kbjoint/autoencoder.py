"""Relu autoencoder over relation vectorizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, vectorize


@dataclass
class AutoencoderParams:
    A: np.ndarray  # c x d^2 encoder
    B: np.ndarray  # d^2 x c decoder

    def __post_init__(self):
        c, dd = self.A.shape
        if self.B.shape != (dd, c):
            raise ValueError(f"decoder shape {self.B.shape} does not match encoder {self.A.shape}")
        if c >= dd:
            raise ValueError(f"coding dimension {c} must be smaller than d^2={dd}")

    @property
    def c(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.A.shape[1])))

    @property
    def scale(self) -> float:
        """The 1/sqrt(dc) factor inside the reconstruction similarity."""
        return 1.0 / np.sqrt(self.d * self.c)

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(self.A.copy(), self.B.copy())


def init_autoencoder(rng: np.random.Generator, d: int, c: int) -> AutoencoderParams:
    scale = 1.0 / np.sqrt(d)
    A = rng.normal(0.0, scale, size=(c, d * d))
    B = rng.normal(0.0, scale, size=(d * d, c))
    return AutoencoderParams(A, B)


def _check_vec(ae: AutoencoderParams, m: np.ndarray, name: str) -> None:
    if m.shape != (ae.A.shape[1],):
        raise ValueError(f"{name} has shape {m.shape}, expected ({ae.A.shape[1]},)")


def encode(ae: AutoencoderParams, m: np.ndarray) -> np.ndarray:
    _check_vec(ae, m, "vectorization")
    return np.maximum(ae.A @ m, 0.0)


def recon_log_similarity(ae: AutoencoderParams, m1: np.ndarray, c2: np.ndarray) -> float:
    _check_vec(ae, m1, "vectorization")
    if c2.shape != (ae.c,):
        raise ValueError(f"coding has shape {c2.shape}, expected ({ae.c},)")
    return float(ae.scale * (m1 @ (ae.B @ c2)))


def recon_similarity(ae: AutoencoderParams, m1: np.ndarray, c2: np.ndarray) -> float:
    return float(np.exp(recon_log_similarity(ae, m1, c2)))


def normalized_coding(c: np.ndarray) -> np.ndarray:
    """Scale a nonnegative coding to sum to 1; the zero coding maps to uniform."""
    total = c.sum()
    if total <= 0.0:
        return np.full(c.shape, 1.0 / c.size)
    return c / total


def mass_concentration(p: np.ndarray, mass: float = 0.9) -> int:
    """Smallest number of largest entries of ``p`` whose sum reaches ``mass``."""
    cum = np.cumsum(np.sort(p)[::-1])
    return int(np.searchsorted(cum, mass - 1e-12) + 1)


def all_codings(ae: AutoencoderParams, params: ModelParams) -> np.ndarray:
    """Current codings for every relation, shape |R| x c."""
    return np.stack([encode(ae, vectorize(M)) for M in params.M])


def coding_sparsity_report(ae: AutoencoderParams, params: ModelParams, mass: float = 0.9):
    """Rows of ``(relation id, normalized coding, #dimensions holding `mass`)``."""
    rows = []
    for r, c in enumerate(all_codings(ae, params)):
        p = normalized_coding(c)
        rows.append((r, p, mass_concentration(p, mass)))
    return rows
