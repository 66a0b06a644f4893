"""Ablation runs over the base-model settings and compositional-training strength."""

from __future__ import annotations

from .config import TrainConfig
from .evaluation import evaluate
from .kb import DatasetSplits
from .training import fit

# each setting switches one trick off; "unigram" also keeps pure Gaussian init
SETTINGS: dict[str, dict] = {
    "base": {},
    "no-normalization": {"normalize": False},
    "no-regularizer": {"rho": 0.0},
    "pure-gaussian": {"identity_init": False},
    "unigram": {"identity_init": False, "noise": "unigram"},
}


def run_settings(splits: DatasetSplits, config: TrainConfig, names=None):
    """Train one base model per setting; rows are ``(setting, MR, MRR, H10)`` on valid."""
    rows = []
    for name in names or SETTINGS:
        if name not in SETTINGS:
            raise KeyError(f"unknown ablation setting {name!r}")
        cfg = config.replace(joint=False, compositional=False, **SETTINGS[name])
        res = fit(splits, cfg)
        rep = evaluate(splits, res.params, splits.valid)
        rows.append((name, rep.mr, rep.mrr, rep.h10))
    return rows


def run_composition(splits: DatasetSplits, config: TrainConfig, poisson_means=(0.0, 0.5, 1.0)):
    """Base and joint models at several path-length means.

    Rows are ``(model, mean, valid MR, MRR, H10, test MR, MRR, H10)``.
    """
    rows = []
    for lam in poisson_means:
        for joint in (False, True):
            cfg = config.replace(joint=joint, compositional=lam > 0, poisson_mean=lam)
            res = fit(splits, cfg)
            v = evaluate(splits, res.params, splits.valid)
            t = evaluate(splits, res.params, splits.test)
            rows.append(("joint" if joint else "base", lam, v.mr, v.mrr, v.h10, t.mr, t.mrr, t.h10))
    return rows
