"""NCE objectives and their exact gradients.

Both objectives are maximised, so every gradient here is an ascent direction.
``Gradients`` buckets the KB-learning part (``M1``) and the reconstruction
part (``M2``) of relation updates separately because the optimizer steps
them with different learning rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoencoder import AutoencoderParams
from .kb import PathSample
from .model import EXP_CLAMP, ModelParams, _check_ids


@dataclass
class Gradients:
    U: dict[int, np.ndarray] = field(default_factory=dict)
    V: dict[int, np.ndarray] = field(default_factory=dict)
    M1: dict[int, np.ndarray] = field(default_factory=dict)
    M2: dict[int, np.ndarray] = field(default_factory=dict)
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    l1: float = 0.0
    l2: float = 0.0

    @staticmethod
    def _acc(bucket: dict[int, np.ndarray], key: int, value: np.ndarray) -> None:
        cur = bucket.get(key)
        if cur is None:
            bucket[key] = value.copy()
        else:
            cur += value

    def relations(self) -> set[int]:
        return set(self.M1) | set(self.M2)


def _positive_weight(x, k):
    # d/dx ln(e^x / (k + e^x)) = k / (k + e^x)
    return 1.0 / (1.0 + np.exp(np.clip(x - np.log(k), -EXP_CLAMP, EXP_CLAMP)))


def _noise_weight(x, k):
    # d/dx ln(k / (k + e^x)) = -e^x / (k + e^x)
    return -1.0 / (1.0 + np.exp(np.clip(np.log(k) - x, -EXP_CLAMP, EXP_CLAMP)))


def nce_value(pos, noise, k) -> float:
    """``ln(s/(k+s)) + sum ln(k/(k+s*))`` given log scores, computed stably."""
    logk = np.log(k)
    return float(-np.logaddexp(0.0, logk - pos) - np.logaddexp(0.0, np.asarray(noise) - logk).sum())


def l1_value(params: ModelParams, path: PathSample, noises, k) -> float:
    """KB-learning objective of one path and its noise tails (no gradients)."""
    a = params.U[path.head]
    for r in path.relations:
        a = a @ params.M[r]
    return nce_value(a @ params.V[path.tail], params.V[np.asarray(noises, dtype=np.int64)] @ a, k)


def accumulate_l1(params: ModelParams, path: PathSample, noises, k, grads: Gradients) -> float:
    """Add the gradient of one path's NCE term into ``grads``; returns the term."""
    _check_ids(params, path.head, path.relations, path.tail)
    M = params.M
    rels = path.relations
    prefixes = [params.U[path.head]]
    for r in rels:
        prefixes.append(prefixes[-1] @ M[r])
    a = prefixes[-1]

    noises = np.asarray(noises, dtype=np.int64)
    if noises.size and (noises.min() < 0 or noises.max() >= params.n_entities):
        raise KeyError("noise entity id out of range")
    v_pos = params.V[path.tail]
    v_noise = params.V[noises]
    x_pos = float(a @ v_pos)
    x_noise = v_noise @ a
    w_pos = _positive_weight(x_pos, k)
    w_noise = _noise_weight(x_noise, k)

    Gradients._acc(grads.V, path.tail, w_pos * a)
    for j, e in enumerate(noises):
        Gradients._acc(grads.V, int(e), w_noise[j] * a)

    # every M gradient is linear in the tail vector, so fold tails first
    q = w_pos * v_pos + w_noise @ v_noise
    for i in range(len(rels) - 1, -1, -1):
        Gradients._acc(grads.M1, rels[i], np.outer(prefixes[i], q))
        q = M[rels[i]] @ q
    Gradients._acc(grads.U, path.head, q)

    value = nce_value(x_pos, x_noise, k)
    grads.l1 += value
    return value


def l1_term_grads(params: ModelParams, path: PathSample, noises, k) -> Gradients:
    grads = Gradients()
    accumulate_l1(params, path, noises, k, grads)
    return grads


def _vectorizations(params: ModelParams, ids):
    flat = params.M[ids].reshape(len(ids), -1)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero relation matrix has no vectorization")
    scale = np.sqrt(params.d) / norms
    return flat * scale[:, None], norms


def l2_value(params: ModelParams, ae: AutoencoderParams, r: int, noise_rels, k) -> float:
    ids = np.concatenate([[r], np.asarray(noise_rels, dtype=np.int64)])
    m, _ = _vectorizations(params, ids)
    codes = np.maximum(m @ ae.A.T, 0.0)
    y = ae.scale * (codes @ (ae.B.T @ m[0]))
    return nce_value(y[0], y[1:], k)


def accumulate_l2(
    params: ModelParams, ae: AutoencoderParams, r: int, noise_rels, k, grads: Gradients
) -> float:
    """Add the reconstruction-term gradient for relation ``r`` into ``grads``.

    Relation gradients pass back through relu (subgradient 0 at 0) and through
    the vectorization, whose Jacobian projects out the radial direction and
    scales by sqrt(d)/||M||.
    """
    for e in [r, *noise_rels]:
        if not 0 <= e < params.n_relations:
            raise KeyError(f"unknown relation {e}")
    ids = np.concatenate([[r], np.asarray(noise_rels, dtype=np.int64)])
    m, norms = _vectorizations(params, ids)
    pre = m @ ae.A.T  # (k+1, c)
    codes = np.maximum(pre, 0.0)
    s = ae.scale
    bt_m = ae.B.T @ m[0]  # (c,)
    y = s * (codes @ bt_m)
    w = np.empty_like(y)
    w[0] = _positive_weight(y[0], k)
    w[1:] = _noise_weight(y[1:], k)

    wc = w @ codes  # (c,)
    dB = s * np.outer(m[0], wc)
    Z = (w[:, None] * s) * bt_m[None, :] * (pre > 0.0)  # (k+1, c)
    dA = Z.T @ m
    gm = Z @ ae.A  # gradient w.r.t. each second-slot vectorization
    gm[0] += s * (ae.B @ wc)

    grads.A = dA if grads.A is None else grads.A + dA
    grads.B = dB if grads.B is None else grads.B + dB
    d = params.d
    root_d = np.sqrt(d)
    for j, rel in enumerate(ids):
        g = gm[j]
        if not g.any():
            continue
        unit = m[j] / root_d
        g = (g - (g @ unit) * unit) * (root_d / norms[j])
        Gradients._acc(grads.M2, int(rel), g.reshape(d, d))

    value = nce_value(y[0], y[1:], k)
    grads.l2 += value
    return value


def l2_term_grads(params: ModelParams, ae: AutoencoderParams, r: int, noise_rels, k) -> Gradients:
    grads = Gradients()
    accumulate_l2(params, ae, r, noise_rels, k, grads)
    return grads
