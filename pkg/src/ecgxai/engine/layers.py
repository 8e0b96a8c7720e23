"""Parameterized layers built on the tensor primitives.

Layers hold their parameters as Tensors (requires_grad on) and expose
them through params(); non-trainable state such as normalization running
statistics lives in buffers(). Mode ("train" or "eval") is passed per
call rather than stored, and any randomness comes in as an explicit
generator.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Tensor


class Module:
    """Minimal composition base: recursive named parameter/buffer walks."""

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                for sub, t in value.params().items():
                    out[f"{name}.{sub}"] = t
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, t in item.params().items():
                            out[f"{name}.{i}.{sub}"] = t
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        own = getattr(self, "_buffer_names", ())
        for name in own:
            out[name] = getattr(self, name)
        for name, value in vars(self).items():
            if isinstance(value, Module):
                for sub, arr in value.buffers().items():
                    out[f"{name}.{sub}"] = arr
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, arr in item.buffers().items():
                            out[f"{name}.{i}.{sub}"] = arr
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Parameters and buffers together, values as plain arrays."""
        out = {name: t.data for name, t in self.params().items()}
        out.update(self.buffers())
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        buffers = self.buffers()
        for name, t in params.items():
            if name not in state:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: checkpoint shape {arr.shape} != model shape {t.data.shape}")
            t.data[...] = arr
        for name, buf in buffers.items():
            if name not in state:
                raise KeyError(f"checkpoint missing buffer {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != buf.shape:
                raise ShapeError(f"buffer {name!r}: checkpoint shape {arr.shape} != model shape {buf.shape}")
            buf[...] = arr


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def _glorot_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=shape)


class Conv1d(Module):
    """Same-padded cross-correlation, stride 1 or 2."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1, rng: np.random.Generator | None = None):
        if kernel < 1:
            raise ConfigError(f"kernel must be >= 1, got {kernel}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.w = Tensor(_he_normal(rng, (c_out, c_in, kernel), c_in * kernel), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.w, self.b, stride=self.stride)


class DepthwiseConv1d(Module):
    def __init__(self, channels: int, kernel: int = 3, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Tensor(_he_normal(rng, (channels, kernel), kernel), requires_grad=True)
        self.b = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.depthwise_conv1d(x, self.w, self.b)


class Dense(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Tensor(_glorot_normal(rng, (d_in, d_out), d_in, d_out), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[0]:
            raise ShapeError(f"dense expects last dim {self.w.shape[0]}, got {x.shape}")
        return T.matmul(x, self.w) + self.b


class BatchNorm1d(Module):
    """Per-channel normalization over (batch, time) of a [B, C, L] tensor.

    Train mode normalizes with batch statistics and folds them into the
    running averages; eval mode uses the stored averages as constants.
    """

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor, mode: str) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"batchnorm expects [B, C, L], got {x.shape}")
        gamma = self.gamma.reshape(1, -1, 1)
        beta = self.beta.reshape(1, -1, 1)
        if mode == "train":
            mean = x.mean(axis=(0, 2), keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=(0, 2), keepdims=True)
            x_hat = centered * T.power(var + self.eps, -0.5)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mean.data.reshape(-1)
            self.running_var = m * self.running_var + (1 - m) * var.data.reshape(-1)
        else:
            mean = self.running_mean.reshape(1, -1, 1)
            std_inv = 1.0 / np.sqrt(self.running_var.reshape(1, -1, 1) + self.eps)
            x_hat = (x - Tensor(mean)) * Tensor(std_inv)
        return x_hat * gamma + beta


class Dropout(Module):
    def __init__(self, rate: float):
        self.rate = rate

    def forward(self, x: Tensor, mode: str, rng: np.random.Generator | None = None) -> Tensor:
        return T.dropout(x, self.rate, mode, rng)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over [B, L, D], unmasked."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator | None = None):
        if dim % heads != 0:
            raise ConfigError(f"embed dim {dim} not divisible by {heads} heads")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.heads = heads
        self.dim = dim
        self.head_dim = dim // heads
        self.wq = Dense(dim, dim, rng)
        self.wk = Dense(dim, dim, rng)
        self.wv = Dense(dim, dim, rng)
        self.wo = Dense(dim, dim, rng)

    def forward(self, x: Tensor, return_weights: bool = False):
        if x.ndim != 3 or x.shape[2] != self.dim:
            raise ShapeError(f"attention expects [B, L, {self.dim}], got {x.shape}")
        batch, length, _ = x.shape

        def split(t: Tensor) -> Tensor:
            return t.reshape(batch, length, self.heads, self.head_dim).transpose((0, 2, 1, 3))

        q, k, v = split(self.wq.forward(x)), split(self.wk.forward(x)), split(self.wv.forward(x))
        scores = T.matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(self.head_dim))
        attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v).transpose((0, 2, 1, 3)).reshape(batch, length, self.dim)
        out = self.wo.forward(ctx)
        if return_weights:
            return out, attn.data
        return out
