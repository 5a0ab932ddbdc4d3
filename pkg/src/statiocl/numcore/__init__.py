"""Minimal float64 tensor engine: ops, reverse-mode autodiff, Adam, checkpoints."""
from .checkpoint import Checkpoint, CheckpointError, dumps, load_checkpoint, loads, save_checkpoint
from .ops import (
    add,
    add_bias,
    concat,
    conv1d,
    conv1d_output_length,
    cosine_sim_matrix,
    diagonal,
    div,
    exp,
    getitem,
    global_maxpool,
    log,
    matmul,
    maximum,
    maxpool1d,
    mean,
    mul,
    relu,
    reshape,
    row_normalize,
    sqrt,
    sub,
    sum,
    transpose,
)
from .optim import AdamState, adam_step
from .tensor import ContractError, ShapeError, Tensor, as_tensor, backward, build_tape, is_grad_enabled, no_grad

__all__ = [
    "AdamState", "Checkpoint", "CheckpointError", "ContractError", "ShapeError", "Tensor",
    "adam_step", "add", "as_tensor", "dumps", "is_grad_enabled", "loads", "row_normalize", "add_bias", "backward", "build_tape", "concat", "conv1d",
    "conv1d_output_length", "cosine_sim_matrix", "diagonal", "div", "exp", "getitem",
    "global_maxpool", "load_checkpoint", "log", "matmul", "maximum", "maxpool1d", "mean",
    "mul", "no_grad", "relu", "reshape", "save_checkpoint", "sqrt", "sub", "sum", "transpose",
]
