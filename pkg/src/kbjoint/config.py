"""Training configuration and the flat ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from fractions import Fraction


def parse_number(text: str) -> float:
    """Parse ``0.015625``, ``1/64`` or ``2^-14`` style numbers."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if "^" in text:
        base, exp = text.split("^", 1)
        return float(base) ** float(exp)
    if "/" in text:
        return float(Fraction(text))
    raise ValueError(f"not a number: {text!r}")


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class TrainConfig:
    d: int = 256
    c: int = 16
    eta1: float = 1 / 64
    lambda1: float = 2.0**-14
    eta2: float = 2.0**-14
    lambda2: float = 2.0**-14
    k: int = 64
    k2: int = 4
    rho: float = 1 / 64
    batch_size: int = 32
    poisson_mean: float = 1.0
    joint: bool = False
    compositional: bool = False
    l2_sweeps: int = 1
    max_epochs: int = 100
    eval_every: int = 1
    patience: int = 2
    seed: int = 0
    normalize: bool = True
    identity_init: bool = True
    noise: str = "uniform"

    def validate(self) -> "TrainConfig":
        positive_ints = ("d", "c", "k", "k2", "batch_size", "eval_every", "patience", "l2_sweeps")
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("eta1", "eta2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("lambda1", "lambda2", "rho", "poisson_mean"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.c >= self.d * self.d:
            raise ValueError(f"c={self.c} must be smaller than d^2={self.d * self.d}")
        if self.noise not in ("uniform", "unigram"):
            raise ValueError(f"noise must be 'uniform' or 'unigram', got {self.noise!r}")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def coerce(cls, name: str, text: str):
        """Convert the text form of field ``name`` to its declared type."""
        types = {f.name: f.type for f in fields(cls)}
        if name not in types:
            raise KeyError(f"unknown config key {name!r}")
        kind = types[name]
        if kind == "bool":
            return _parse_bool(text)
        if kind == "int":
            value = parse_number(text)
            if value != int(value):
                raise ValueError(f"{name} must be an integer, got {text!r}")
            return int(value)
        if kind == "float":
            return parse_number(text)
        return text.strip()


def read_config_file(path) -> dict[str, str]:
    """Read ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_config_file(path, values: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in values.items():
            if value is None:
                continue
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key}={value}\n")
