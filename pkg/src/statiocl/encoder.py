"""Three-block 1-D CNN encoder mapping (B, V, T) segments to (B, D) embeddings.

Each block is conv -> ReLU -> max-pool; a global max-pool over time and a
linear layer follow.  There is no batch normalisation and no projection head,
so every output row depends on its own input row only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import ShapeError, Tensor


@dataclass
class EncoderConfig:
    in_channels: int = 1
    widths: tuple[int, ...] = (32, 64, 128)
    kernel_sizes: tuple[int, ...] = (8, 8, 8)
    pool_windows: tuple[int, ...] = (2, 2, 2)
    padding: tuple[int, ...] = (4, 4, 4)
    output_dim: int = 64

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.pool_windows = tuple(int(p) for p in self.pool_windows)
        self.padding = tuple(int(p) for p in self.padding)
        for name in ("widths", "kernel_sizes", "pool_windows", "padding"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} must list exactly 3 layers")
        if self.output_dim < 2:
            raise ValueError("output_dim must be >= 2")
        if self.in_channels < 1 or min(self.widths) < 1 or min(self.kernel_sizes) < 1 or min(self.pool_windows) < 1:
            raise ValueError("channel counts, kernel sizes and pool windows must be positive")


def layer_lengths(config: EncoderConfig, length: int) -> list[int]:
    """Time length after each conv+pool block; raises naming the layer that underflows."""
    out = []
    for i, (k, p, pad) in enumerate(zip(config.kernel_sizes, config.pool_windows, config.padding), 1):
        conv_len = length + 2 * pad - k + 1
        if conv_len < 1:
            raise ShapeError(f"conv{i}: kernel {k} wider than padded length {length + 2 * pad}")
        if conv_len < p:
            raise ShapeError(f"pool{i}: window {p} larger than length {conv_len}")
        length = (conv_len - p) // p + 1
        out.append(length)
    return out


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    c_in = config.in_channels
    for i, (w, k) in enumerate(zip(config.widths, config.kernel_sizes), 1):
        shapes[f"conv{i}.weight"] = (w, c_in, k)
        shapes[f"conv{i}.bias"] = (w,)
        c_in = w
    shapes["fc.weight"] = (c_in, config.output_dim)
    shapes["fc.bias"] = (config.output_dim,)
    return shapes


def parameter_count(config: EncoderConfig) -> int:
    return sum(math.prod(s) for s in parameter_shapes(config).values())


def encoder_init(config: EncoderConfig, rng: np.random.Generator | int, length: int | None = None) -> dict[str, np.ndarray]:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    if length is not None:
        layer_lengths(config, length)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
            continue
        fan_in = math.prod(shape[1:]) if name.startswith("conv") else shape[0]
        bound = math.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def encode(params, x, config: EncoderConfig) -> Tensor:
    """Embed a (B, V, T) batch.  ``params`` values may be arrays or Tensors."""
    x = nc.Tensor(x) if not isinstance(x, Tensor) else x
    if x.ndim != 3 or x.shape[1] != config.in_channels:
        raise ShapeError(f"expected input (B, {config.in_channels}, T), got {x.shape}")
    layer_lengths(config, x.shape[2])
    h = x
    for i, (pool, pad) in enumerate(zip(config.pool_windows, config.padding), 1):
        h = nc.conv1d(h, params[f"conv{i}.weight"], stride=1, padding=pad)
        h = nc.add_bias(h, params[f"conv{i}.bias"])
        h = nc.maxpool1d(nc.relu(h), pool, pool)
    h = nc.global_maxpool(h)
    return nc.add_bias(nc.matmul(h, params["fc.weight"]), params["fc.bias"])


def as_leaves(params) -> dict[str, Tensor]:
    """Fresh gradient-tracking leaves for a parameter dict."""
    return {k: Tensor(v, requires_grad=True) for k, v in params.items()}


def embed(params, values, config: EncoderConfig, batch_size: int = 256) -> np.ndarray:
    """Embeddings of (N, T, V) segments without recording a graph."""
    values = np.asarray(values, dtype=np.float64)
    out = []
    with nc.no_grad():
        for start in range(0, len(values), batch_size):
            chunk = values[start:start + batch_size].transpose(0, 2, 1)
            out.append(encode(params, chunk, config).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, config.output_dim))
