"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic     8 bytes  b"SSWSCKPT"
    version   u32      currently 1
    flags     u32      bit 0: optimizer state present
    n_tensors u32
    per tensor:
        name_len u16, name utf-8
        ndim u8, dims u32 * ndim
        values float32 little-endian, C order
    optimizer state (when flagged):
        step_count u64
        per tensor, same order: first moment then second moment,
        raw float32 with the tensor's shape

Values are stored in 32-bit regardless of in-memory dtype.
"""

from __future__ import annotations

import struct

import numpy as np

from ssws.neural_core.optim import AdamState
from ssws.neural_core.params import Parameters

MAGIC = b"SSWSCKPT"
VERSION = 1
_FLAG_OPTIMIZER = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: Parameters, adam: AdamState | None = None) -> None:
    with open(path, "wb") as fh:
        flags = _FLAG_OPTIMIZER if adam is not None else 0
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, flags, len(params)))
        for name, t in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        if adam is not None:
            fh.write(struct.pack("<Q", adam.step_count))
            for name, t in params.items():
                m, v = adam.moments_for(name, t.data)
                fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> tuple[Parameters, AdamState | None]:
    with open(path, "rb") as fh:
        if _read(fh, 8) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        version, flags, n_tensors = struct.unpack("<III", _read(fh, 12))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        params = Parameters()
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read(fh, 2))
            name = _read(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read(fh, 4 * count), dtype="<f4").reshape(shape)
            params.add(name, data.astype(np.float32))
        adam = None
        if flags & _FLAG_OPTIMIZER:
            adam = AdamState()
            (adam.step_count,) = struct.unpack("<Q", _read(fh, 8))
            for name, t in params.items():
                count = t.data.size
                m = np.frombuffer(_read(fh, 4 * count), dtype="<f4").reshape(t.data.shape)
                v = np.frombuffer(_read(fh, 4 * count), dtype="<f4").reshape(t.data.shape)
                adam.first_moment[name] = m.astype(np.float32)
                adam.second_moment[name] = v.astype(np.float32)
    return params, adam
