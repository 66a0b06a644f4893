"""Per-counter SGD, batching, epochs and early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autoencoder import AutoencoderParams, init_autoencoder
from .config import TrainConfig
from .kb import DatasetSplits, KnowledgeBase, PathSample, walk
from .model import ModelParams, init_params, normalize_matrix, orthogonal_penalty
from .objectives import Gradients, accumulate_l1, accumulate_l2

log = logging.getLogger(__name__)


def learning_rate(eta: float, lam: float, tau) -> float:
    return eta / (1.0 + eta * lam * tau)


def sample_negatives(rng: np.random.Generator, k: int, n_entities: int, probs=None) -> np.ndarray:
    """``k`` i.i.d. entity draws, uniform unless ``probs`` is given."""
    if n_entities < 1:
        raise ValueError("need at least one entity to sample from")
    if probs is None:
        return rng.integers(n_entities, size=k)
    return rng.choice(n_entities, size=k, p=probs)


@dataclass
class OptimizerState:
    tau_rel: np.ndarray
    tau_head: np.ndarray
    tau_tail: np.ndarray
    tau_ae: int = 0
    eta1: float = 1 / 64
    lambda1: float = 2.0**-14
    eta2: float = 2.0**-14
    lambda2: float = 2.0**-14
    rho: float = 1 / 64
    normalize: bool = True

    @classmethod
    def create(cls, n_entities: int, n_relations: int, config: TrainConfig | None = None, **kw):
        if config is not None:
            kw = dict(
                eta1=config.eta1, lambda1=config.lambda1, eta2=config.eta2,
                lambda2=config.lambda2, rho=config.rho, normalize=config.normalize, **kw,
            )
        return cls(
            np.zeros(n_relations, dtype=np.int64),
            np.zeros(n_entities, dtype=np.int64),
            np.zeros(n_entities, dtype=np.int64),
            **kw,
        )

    def alpha1(self, tau) -> float:
        return learning_rate(self.eta1, self.lambda1, tau)

    def alpha2(self, tau) -> float:
        return learning_rate(self.eta2, self.lambda2, tau)

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            self.tau_rel.copy(), self.tau_head.copy(), self.tau_tail.copy(), self.tau_ae,
            self.eta1, self.lambda1, self.eta2, self.lambda2, self.rho, self.normalize,
        )


def _nonzero(x) -> bool:
    return x is not None and bool(np.any(x))


def apply_updates(params: ModelParams, ae: AutoencoderParams | None, state: OptimizerState, grads: Gradients) -> int:
    """Step every parameter with a nonzero gradient and bump its counter.

    Returns the number of parameter blocks updated.
    """
    updated = 0
    for r in sorted(grads.relations()):
        d1 = grads.M1.get(r)
        d2 = grads.M2.get(r)
        if not (_nonzero(d1) or _nonzero(d2)):
            continue
        tau = state.tau_rel[r]
        a1 = state.alpha1(tau)
        step = np.zeros_like(params.M[r])
        if d1 is not None:
            step += a1 * d1
        if d2 is not None:
            step += state.alpha2(tau) * d2
        if state.rho:
            _, pen_grad = orthogonal_penalty(params.M[r])
            step -= (a1 * state.rho) * pen_grad
        params.M[r] += step
        if state.normalize:
            normalize_matrix(params.M[r])
        state.tau_rel[r] += 1
        updated += 1

    for bucket, table, counters in ((grads.U, params.U, state.tau_head), (grads.V, params.V, state.tau_tail)):
        for e, delta in bucket.items():
            if not delta.any():
                continue
            table[e] += state.alpha1(counters[e]) * delta
            counters[e] += 1
            updated += 1

    if ae is not None and (_nonzero(grads.A) or _nonzero(grads.B)):
        a2 = state.alpha2(state.tau_ae)
        if grads.A is not None:
            ae.A += a2 * grads.A
        if grads.B is not None:
            ae.B += a2 * grads.B
        state.tau_ae += 1
        updated += 1
    return updated


def make_batches(kb: KnowledgeBase, rng: np.random.Generator, config: TrainConfig) -> list[list[PathSample]]:
    """Shuffle the facts, extend each into a path if compositional, group by head.

    Each head's positives are chunked into batches of at most ``batch_size``;
    the batch order is shuffled again.
    """
    groups: dict[int, list[PathSample]] = {}
    for i in rng.permutation(len(kb.fact_list)):
        f = kb.fact_list[i]
        if config.compositional and config.poisson_mean > 0:
            path = walk(kb, rng, f, int(rng.poisson(config.poisson_mean)))
        else:
            path = PathSample(f.head, (f.relation,), f.tail)
        groups.setdefault(f.head, []).append(path)
    bs = config.batch_size
    batches = [g[i : i + bs] for g in groups.values() for i in range(0, len(g), bs)]
    return [batches[i] for i in rng.permutation(len(batches))]


def noise_distribution(kb: KnowledgeBase, kind: str):
    if kind == "uniform":
        return None
    counts = np.bincount(kb.fact_array[:, 2], minlength=kb.n_entities).astype(float)
    return counts / counts.sum()


@dataclass
class EpochStats:
    mean_l1: float
    mean_l2: float
    n_updates: int


def train_epoch(
    kb: KnowledgeBase,
    params: ModelParams,
    ae: AutoencoderParams,
    state: OptimizerState,
    config: TrainConfig,
    rng: np.random.Generator,
    noise_probs=None,
) -> EpochStats:
    if state.normalize:
        for M in params.M:
            normalize_matrix(M)
    batches = make_batches(kb, rng, config)
    n_rel = params.n_relations
    l2_total = config.l2_sweeps * n_rel if config.joint else 0
    # spread the relation sweeps evenly between L1 batches
    n_slots = max(len(batches), 1)
    l1_sum, n_pos, l2_sum, n_l2, n_updates = 0.0, 0, 0.0, 0, 0
    done_l2 = 0
    for b in range(n_slots):
        if b < len(batches):
            grads = Gradients()
            for path in batches[b]:
                noises = sample_negatives(rng, config.k, params.n_entities, noise_probs)
                accumulate_l1(params, path, noises, config.k, grads)
            l1_sum += grads.l1
            n_pos += len(batches[b])
            n_updates += apply_updates(params, ae, state, grads)
        target = (b + 1) * l2_total // n_slots
        while done_l2 < target:
            r = done_l2 % n_rel
            grads = Gradients()
            noise_rels = rng.integers(n_rel, size=config.k2)
            accumulate_l2(params, ae, r, noise_rels, config.k2, grads)
            l2_sum += grads.l2
            n_l2 += 1
            n_updates += apply_updates(params, ae, state, grads)
            done_l2 += 1
    return EpochStats(
        l1_sum / n_pos if n_pos else float("nan"),
        l2_sum / n_l2 if n_l2 else float("nan"),
        n_updates,
    )


@dataclass
class LogRow:
    epoch: int
    mean_l1: float
    mean_l2: float
    valid_mr: float | None = None
    valid_mrr: float | None = None
    valid_h10: float | None = None

    def tsv(self) -> str:
        def fmt(x):
            return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))

        return "\t".join([str(self.epoch), fmt(self.mean_l1), fmt(self.mean_l2),
                          fmt(self.valid_mr), fmt(self.valid_mrr), fmt(self.valid_h10)])


LOG_HEADER = "epoch\tmeanL1\tmeanL2\tvalidMR\tvalidMRR\tvalidH10"


@dataclass
class FitResult:
    params: ModelParams
    ae: AutoencoderParams
    state: OptimizerState
    log: list[LogRow] = field(default_factory=list)
    best_epoch: int = 0


def init_model(config: TrainConfig, n_entities: int, n_relations: int):
    rng = np.random.default_rng(config.seed)
    params = init_params(rng, config.d, n_entities, n_relations, identity_init=config.identity_init)
    ae = init_autoencoder(rng, config.d, config.c)
    state = OptimizerState.create(n_entities, n_relations, config)
    return rng, params, ae, state


def fit(
    splits: DatasetSplits,
    config: TrainConfig,
    evaluator: Callable[[ModelParams], tuple[float, float, float]] | None = None,
    on_epoch: Callable[[LogRow], None] | None = None,
) -> FitResult:
    """Train until neither validation MR nor MRR improves for ``patience`` evaluations.

    ``evaluator`` maps parameters to ``(MR, MRR, H10)``; it defaults to the
    filtered validation protocol and is disabled when there is no validation
    set. The initialization is evaluated first as the baseline. Returns the
    parameters of the last evaluation at which MR or MRR improved.
    """
    config.validate()
    kb = splits.train
    rng, params, ae, state = init_model(config, kb.n_entities, kb.n_relations)
    result = FitResult(params, ae, state)
    if config.max_epochs == 0:
        return result

    if evaluator is None and splits.valid:
        from .evaluation import evaluate

        def evaluator(p):
            rep = evaluate(splits, p, splits.valid)
            return rep.mr, rep.mrr, rep.h10

    noise_probs = noise_distribution(kb, config.noise)
    best_mr, best_mrr = np.inf, -np.inf
    if evaluator is not None:
        best_mr, best_mrr, _ = evaluator(params)
    best = (params.copy(), ae.copy(), state.copy(), 0)
    bad = 0
    for epoch in range(1, config.max_epochs + 1):
        stats = train_epoch(kb, params, ae, state, config, rng, noise_probs)
        row = LogRow(epoch, stats.mean_l1, stats.mean_l2)
        stop = False
        if evaluator is not None and epoch % config.eval_every == 0:
            mr, mrr, h10 = evaluator(params)
            row.valid_mr, row.valid_mrr, row.valid_h10 = mr, mrr, h10
            improved = False
            if mr < best_mr:
                best_mr, improved = mr, True
            if mrr > best_mrr:
                best_mrr, improved = mrr, True
            if improved:
                best = (params.copy(), ae.copy(), state.copy(), epoch)
                bad = 0
            else:
                bad += 1
                stop = bad >= config.patience
        result.log.append(row)
        log.info("epoch %d L1=%.4f L2=%.4f MR=%s MRR=%s", epoch, stats.mean_l1, stats.mean_l2,
                 row.valid_mr, row.valid_mrr)
        if on_epoch is not None:
            on_epoch(row)
        if stop:
            break
    if evaluator is None:
        best = (params, ae, state, config.max_epochs)
    result.params, result.ae, result.state, result.best_epoch = best
    return result
