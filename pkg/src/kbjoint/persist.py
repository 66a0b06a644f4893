"""Versioned binary model file.

Layout, all little-endian::

    b"GLIM" | u32 version | u64 d | u64 c | u64 |E| | u64 |R|
    |E| entity names, |R| relation names   (u32 byte length + UTF-8)
    U, V, M, A, B                           (float64, C order)
    tau_rel[|R|], tau_head[|E|], tau_tail[|E|], tau_ae  (int64)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderParams
from .model import ModelParams

MAGIC = b"GLIM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQQ")


class ModelFormatError(ValueError):
    """The model file is corrupt or incompatible; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class SavedModel:
    params: ModelParams
    ae: AutoencoderParams
    counters: dict[str, np.ndarray | int]
    entities: list[str]
    relations: list[str]


def _strings(items) -> bytes:
    parts = []
    for s in items:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def dumps(params: ModelParams, ae: AutoencoderParams, state, entities, relations) -> bytes:
    n_e, d = params.U.shape
    n_r = params.M.shape[0]
    if len(entities) != n_e or len(relations) != n_r:
        raise ValueError("vocabulary sizes do not match the parameter tables")
    blocks = [
        _HEADER.pack(MAGIC, VERSION, d, ae.c, n_e, n_r),
        _strings(entities),
        _strings(relations),
    ]
    for arr in (params.U, params.V, params.M, ae.A, ae.B):
        blocks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for arr in (state.tau_rel, state.tau_head, state.tau_tail, np.array([state.tau_ae])):
        blocks.append(np.ascontiguousarray(arr, dtype="<i8").tobytes())
    return b"".join(blocks)


def save_model(path, params, ae, state, entities, relations) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, ae, state, entities, relations))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(field, "file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def strings(self, count: int, field: str) -> list[str]:
        out = []
        for _ in range(count):
            (length,) = struct.unpack("<I", self.take(4, field))
            try:
                out.append(self.take(length, field).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ModelFormatError(field, "invalid UTF-8") from exc
        return out

    def array(self, dtype: str, shape: tuple[int, ...], field: str) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(count * 8, field)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype[1:], copy=True)


def loads(data: bytes) -> SavedModel:
    rd = _Reader(data)
    if len(data) < _HEADER.size:
        raise ModelFormatError("magic", "file is too short for a header")
    magic, version, d, c, n_e, n_r = _HEADER.unpack(rd.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise ModelFormatError("magic", f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise ModelFormatError("version", f"unsupported format version {version}")
    if d < 1:
        raise ModelFormatError("d", f"invalid dimension {d}")
    if not 1 <= c < d * d:
        raise ModelFormatError("c", f"invalid coding dimension {c} for d={d}")
    if n_r % 2:
        raise ModelFormatError("|R|", f"relation count {n_r} is not even")
    entities = rd.strings(n_e, "entities")
    relations = rd.strings(n_r, "relations")
    U = rd.array("<f8", (n_e, d), "U")
    V = rd.array("<f8", (n_e, d), "V")
    M = rd.array("<f8", (n_r, d, d), "M")
    A = rd.array("<f8", (c, d * d), "A")
    B = rd.array("<f8", (d * d, c), "B")
    counters = {
        "tau_rel": rd.array("<i8", (n_r,), "counters"),
        "tau_head": rd.array("<i8", (n_e,), "counters"),
        "tau_tail": rd.array("<i8", (n_e,), "counters"),
        "tau_ae": int(rd.array("<i8", (1,), "counters")[0]),
    }
    if rd.pos != len(data):
        raise ModelFormatError("counters", f"{len(data) - rd.pos} trailing bytes")
    return SavedModel(ModelParams(U, V, M), AutoencoderParams(A, B), counters, entities, relations)


def load_model(path) -> SavedModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
