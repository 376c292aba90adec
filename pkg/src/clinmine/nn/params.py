from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

MAGIC = b"CLNM"
FORMAT_VERSION = 1


@dataclass(eq=False)
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...] | None = None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class ModelFileError(ValueError):
    pass


def save_parameters(path: str | os.PathLike, params: Iterable[Parameter] | Mapping[str, np.ndarray],
                    metadata: Mapping[str, Any] | None = None) -> None:
    """Binary layout, all integers little-endian:

    magic ``CLNM`` | version u32 | count u32 | per parameter: name length u32,
    UTF-8 name, rank u32, dims u64 x rank, float64 values (row-major) |
    metadata length u64 + UTF-8 JSON (empty when absent).
    """
    if isinstance(params, Mapping):
        items = list(params.items())
    else:
        items = [(p.name, p.value) for p in params]
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(items)))
        for name, value in items:
            arr = np.ascontiguousarray(value, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())
        meta = b"" if metadata is None else json.dumps(metadata, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<Q", len(meta)))
        fh.write(meta)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError("unexpected end of model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_parameters(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    r = _Reader(data)
    r.take(4)
    version, count = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported model file version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
        out[name] = arr
    (meta_len,) = r.unpack("<Q")
    meta = json.loads(r.take(meta_len).decode("utf-8")) if meta_len else {}
    if r.pos != len(data):
        raise ModelFileError(f"{path}: trailing bytes after model data")
    return out, meta
