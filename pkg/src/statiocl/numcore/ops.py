"""Differentiable ops over :class:`Tensor`.

Elementwise binary ops follow numpy broadcasting; gradients are summed back to
the operand shape.  Subgradients at kinks are deterministic: ReLU'(0) = 0 and
pooling ties route to the first maximal index.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor, make_node

COSINE_EPS = 1e-12


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def _bw(g):
        return g / b.data, -g * out / b.data

    return make_node(out, (a, b), _bw, "div")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    return make_node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_node(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def maximum(x, floor: float) -> Tensor:
    """Elementwise ``max(x, floor)`` for a constant floor; ties send no gradient."""
    x = as_tensor(x)
    keep = x.data > floor
    return make_node(np.where(keep, x.data, floor), (x,), lambda g: (g * keep,), "maximum")


def relu(x) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0
    return make_node(x.data * keep, (x,), lambda g: (g * keep,), "relu")


# -- shape ---------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return make_node(x.data.T, (x,), lambda g: (g.T,), "transpose")


def getitem(x, index) -> Tensor:
    x = as_tensor(x)

    basic = all(isinstance(i, (slice, int)) for i in (index if isinstance(index, tuple) else (index,)))

    def _bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_node(x.data[index], (x,), _bw, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, _bw, "concat")


def diagonal(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeError(f"diagonal expects a square matrix, got shape {x.shape}")
    n = x.shape[0]

    def _bw(g):
        full = np.zeros_like(x.data)
        full[np.arange(n), np.arange(n)] = g
        return (full,)

    return make_node(np.diagonal(x.data).copy(), (x,), _bw, "diagonal")


# -- reductions ----------------------------------------------------------

def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    src = x.shape

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src),)

    return make_node(x.data.sum(axis=axis, keepdims=keepdims), (x,), _bw, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# -- linear algebra ------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return make_node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def add_bias(x, bias) -> Tensor:
    """Add a per-channel bias: ``x`` is (B, C) or (B, C, T), ``bias`` is (C,)."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.ndim != 1 or x.ndim < 2 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"bias of shape {bias.shape} does not fit input {x.shape}")
    shaped = bias.data.reshape((1, -1) + (1,) * (x.ndim - 2))
    reduce_axes = (0,) + tuple(range(2, x.ndim))
    return make_node(x.data + shaped, (x, bias), lambda g: (g, g.sum(axis=reduce_axes)), "add_bias")


def conv1d_output_length(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    if length + 2 * padding < kernel:
        raise ShapeError(f"kernel of width {kernel} exceeds padded length {length + 2 * padding}")
    return (length + 2 * padding - kernel) // stride + 1


def conv1d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B, C_in, T) input with a (C_out, C_in, K) kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and kernel, got {x.shape} and {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride={stride} / padding={padding}")
    batch, c_in, length = x.shape
    c_out, k_in, width = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"kernel expects {k_in} input channels, input has {c_in}")
    t_out = conv1d_output_length(length, width, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # (B, C, T_out, K) -> (B*T_out, C*K)
    windows = sliding_window_view(xp, width, axis=2)[:, :, ::stride][:, :, :t_out]
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * t_out, c_in * width)
    w2 = kernel.data.reshape(c_out, c_in * width)
    out = (cols @ w2.T).reshape(batch, t_out, c_out).transpose(0, 2, 1)

    def _bw(g):
        g2 = g.transpose(0, 2, 1).reshape(batch * t_out, c_out)
        d_kernel = (g2.T @ cols).reshape(kernel.shape)
        d_cols = (g2 @ w2).reshape(batch, t_out, c_in, width)
        d_xp = np.zeros_like(xp)
        span = stride * (t_out - 1) + 1
        for k in range(width):
            d_xp[:, :, k:k + span:stride] += d_cols[:, :, :, k].transpose(0, 2, 1)
        d_x = d_xp[:, :, padding:padding + length] if padding else d_xp
        return d_x, d_kernel

    return make_node(np.ascontiguousarray(out), (x, kernel), _bw, "conv1d")


def maxpool1d(x, window: int, stride: int | None = None) -> Tensor:
    """Max over sliding windows along the last axis of a (B, C, T) tensor."""
    x = as_tensor(x)
    stride = window if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects (B, C, T), got {x.shape}")
    length = x.shape[2]
    if window > length:
        raise ShapeError(f"pool window {window} larger than length {length}")
    t_out = (length - window) // stride + 1
    windows = sliding_window_view(x.data, window, axis=2)[:, :, ::stride][:, :, :t_out]
    arg = windows.argmax(axis=3)  # first maximal index on ties
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]

    def _bw(g):
        d_x = np.zeros_like(x.data)
        span = stride * (t_out - 1) + 1
        for k in range(window):
            d_x[:, :, k:k + span:stride] += np.where(arg == k, g, 0.0)
        return (d_x,)

    return make_node(out, (x,), _bw, "maxpool1d")


def global_maxpool(x) -> Tensor:
    """(B, C, T) -> (B, C), max over time."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"global_maxpool expects (B, C, T), got {x.shape}")
    arg = x.data.argmax(axis=2)
    out = np.take_along_axis(x.data, arg[..., None], axis=2)[..., 0]

    def _bw(g):
        d_x = np.zeros_like(x.data)
        np.put_along_axis(d_x, arg[..., None], g[..., None], axis=2)
        return (d_x,)

    return make_node(out, (x,), _bw, "global_maxpool")


# -- similarity ----------------------------------------------------------

def row_normalize(x, eps: float = COSINE_EPS) -> Tensor:
    x = as_tensor(x)
    sq = sum(mul(x, x), axis=1, keepdims=True)
    # max(||x||, eps) == sqrt(max(||x||^2, eps^2)); the squared floor keeps sqrt' finite
    return div(x, sqrt(maximum(sq, eps * eps)))


def cosine_sim_matrix(a, b, eps: float = COSINE_EPS) -> Tensor:
    """Entry (i, j) is the cosine similarity between row i of ``a`` and row j of ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or a.shape[1] < 1:
        raise ShapeError(f"cosine_sim_matrix expects (B, D) inputs, got {a.shape} and {b.shape}")
    return matmul(row_normalize(a, eps), transpose(row_normalize(b, eps)))
