"""Binary checkpoint format.

All integers and floats are little-endian::

    magic        8 bytes   b"STCLCKPT"
    version      uint32    currently 1
    meta_len     uint32    length of the JSON metadata blob
    meta         bytes     UTF-8 JSON (epoch counter, resolved configs, ...)
    n_params     uint32
    n_params times:
        name_len uint16, name (UTF-8)
        ndim     uint8, shape as ndim x uint64
        values   prod(shape) x float64, row-major
    has_opt      uint8     1 if optimizer state follows
    if has_opt:
        step     uint64
        per parameter, in the order above: first moment, then second moment
        (float64, same shape as the parameter)
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optim import AdamState

MAGIC = b"STCLCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    opt_state: AdamState | None = None
    meta: dict = field(default_factory=dict)


def _write_array(buf, arr: np.ndarray) -> None:
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError("checkpoint truncated")
    return data


def _read_array(buf, shape) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64))
    raw = _read_exact(buf, 8 * count)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(ckpt.params)))
    for name, value in ckpt.params.items():
        value = np.asarray(value, dtype=np.float64)
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}Q", *value.shape))
        _write_array(buf, value)
    if ckpt.opt_state is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<BQ", 1, ckpt.opt_state.step))
        for name in ckpt.params:
            _write_array(buf, ckpt.opt_state.m[name])
            _write_array(buf, ckpt.opt_state.v[name])
    return buf.getvalue()


def loads(data: bytes) -> Checkpoint:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    version, meta_len = struct.unpack("<II", _read_exact(buf, 8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = json.loads(_read_exact(buf, meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    (n_params,) = struct.unpack("<I", _read_exact(buf, 4))
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(buf, 1))
        shape = struct.unpack(f"<{ndim}Q", _read_exact(buf, 8 * ndim))
        params[name] = _read_array(buf, shape)
    (has_opt,) = struct.unpack("<B", _read_exact(buf, 1))
    opt_state = None
    if has_opt:
        (step,) = struct.unpack("<Q", _read_exact(buf, 8))
        m, v = {}, {}
        for name, value in params.items():
            m[name] = _read_array(buf, value.shape)
            v[name] = _read_array(buf, value.shape)
        opt_state = AdamState(step, m, v)
    if buf.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(params, opt_state, meta)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
