"""Differentiable-computation substrate: tensors, layers, Adam, checkpoints."""

from .tensor import (
    Tensor,
    add,
    clip_min,
    concat,
    conv1d,
    depthwise_conv1d,
    dropout,
    exp,
    global_avg_pool,
    log,
    matmul,
    maxpool1d,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    softmax,
    sqrt,
    tmean,
    transpose,
    tsum,
)
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    DepthwiseConv1d,
    Dropout,
    Module,
    MultiHeadAttention,
)
from .optim import Adam
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "add", "clip_min", "concat", "conv1d", "depthwise_conv1d",
    "dropout", "exp", "global_avg_pool", "log", "matmul", "maxpool1d", "mul",
    "no_grad", "power", "relu", "reshape", "softmax", "sqrt", "tmean",
    "transpose", "tsum",
    "BatchNorm1d", "Conv1d", "Dense", "DepthwiseConv1d", "Dropout", "Module",
    "MultiHeadAttention",
    "Adam", "load_checkpoint", "save_checkpoint",
]
