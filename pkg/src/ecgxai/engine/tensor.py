"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient. Operations record a
backward closure on the output node; calling backward() on a scalar walks
the tape in reverse topological order. Gradients accumulate into .grad of
every reachable tensor whose requires_grad is set.

Everything computes in float64. Graphs are throwaway: build, backward,
discard. Backward closures work on raw arrays and never create new nodes,
so no second-order path exists.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ShapeError

_grad_enabled: bool = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the tape."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_wrap(other), power(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


_nodes_created: int = 0


def nodes_created() -> int:
    """Running count of tracked nodes; backward passes must not grow it."""
    return _nodes_created


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    global _nodes_created
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        _nodes_created += 1
    return out


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _node(a.data + b.data, (a, b))
    if out.requires_grad:
        def _bw():
            a._accum(_unbroadcast(out.grad, a.shape))
            b._accum(_unbroadcast(out.grad, b.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = _node(a.data * b.data, (a, b))
    if out.requires_grad:
        def _bw():
            a._accum(_unbroadcast(out.grad * b.data, a.shape))
            b._accum(_unbroadcast(out.grad * a.data, b.shape))
        out._backward = _bw
    return out


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    out = _node(a.data ** exponent, (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad * exponent * a.data ** (exponent - 1.0))
        out._backward = _bw
    return out


def exp(a) -> Tensor:
    a = _wrap(a)
    out = _node(np.exp(a.data), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad * out.data)
        out._backward = _bw
    return out


def log(a) -> Tensor:
    a = _wrap(a)
    out = _node(np.log(a.data), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad / a.data)
        out._backward = _bw
    return out


def sqrt(a) -> Tensor:
    """Elementwise square root; the slope at 0 is capped to stay finite."""
    a = _wrap(a)
    out = _node(np.sqrt(a.data), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad * 0.5 / np.maximum(out.data, 1e-30))
        out._backward = _bw
    return out


def relu(a) -> Tensor:
    a = _wrap(a)
    out = _node(np.maximum(a.data, 0.0), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad * (a.data > 0.0))
        out._backward = _bw
    return out


def clip_min(a, lo: float) -> Tensor:
    """max(a, lo); gradient passes only where a > lo."""
    a = _wrap(a)
    out = _node(np.maximum(a.data, lo), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad * (a.data > lo))
        out._backward = _bw
    return out


# -- reductions and shaping ------------------------------------------------

def _norm_axis(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    axes = _norm_axis(axis, a.ndim)
    out = _node(a.data.sum(axis=axes, keepdims=keepdims), (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axes)
            a._accum(np.broadcast_to(g, a.shape).copy())
        out._backward = _bw
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    out = _node(a.data.mean(axis=axes, keepdims=keepdims), (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axes)
            a._accum(np.broadcast_to(g, a.shape) / count)
        out._backward = _bw
    return out


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = _node(a.data.reshape(shape), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad.reshape(a.shape))
        out._backward = _bw
    return out


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = _node(a.data.transpose(axes), (a,))
    if out.requires_grad:
        def _bw():
            a._accum(out.grad.transpose(inverse))
        out._backward = _bw
    return out


def concat(tensors: Iterable[Tensor], axis: int) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ValueError("concat of nothing")
    sizes = [t.shape[axis] for t in ts]
    out = _node(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    if out.requires_grad:
        def _bw():
            pieces = np.split(out.grad, np.cumsum(sizes)[:-1], axis=axis)
            for t, g in zip(ts, pieces):
                t._accum(g)
        out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes."""
    a, b = _wrap(a), _wrap(b)
    out = _node(np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:
        def _bw():
            ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
            gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
            a._accum(_unbroadcast(ga, a.shape))
            b._accum(_unbroadcast(gb, b.shape))
        out._backward = _bw
    return out


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _node(y, (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accum(y * (g - dot))
        out._backward = _bw
    return out


# -- network primitives ----------------------------------------------------

def _same_pad(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    return out_len, total // 2, total - total // 2


def conv1d(x, w, b, stride: int = 1) -> Tensor:
    """Cross-correlation of [B, C_in, L] with kernels [C_out, C_in, K].

    Zero padding keeps output length at ceil(L / stride).
    """
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"channel mismatch: input has {x.shape[1]}, weight expects {w.shape[1]}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    batch, c_in, length = x.shape
    c_out, _, kernel = w.shape
    out_len, pad_l, pad_r = _same_pad(length, kernel, stride)

    x_pad = np.pad(x.data, ((0, 0), (0, 0), (pad_l, pad_r)))
    windows = np.lib.stride_tricks.sliding_window_view(x_pad, kernel, axis=2)[:, :, ::stride, :]
    y = np.einsum("bclk,ock->bol", windows, w.data, optimize=True) + b.data[None, :, None]
    out = _node(y, (x, w, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            w._accum(np.einsum("bclk,bol->ock", windows, g, optimize=True))
            b._accum(g.sum(axis=(0, 2)))
            gx_pad = np.zeros_like(x_pad)
            for k in range(kernel):
                contrib = np.einsum("bol,oc->bcl", g, w.data[:, :, k], optimize=True)
                gx_pad[:, :, k : k + stride * out_len : stride] += contrib
            x._accum(gx_pad[:, :, pad_l : pad_l + length])
        out._backward = _bw
    return out


def depthwise_conv1d(x, w, b) -> Tensor:
    """Per-channel convolution: [B, C, L] with kernels [C, K], stride 1, same padding."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.ndim != 3 or w.ndim != 2:
        raise ShapeError(f"depthwise_conv1d expects 3-d input and 2-d weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"channel mismatch: input has {x.shape[1]}, weight expects {w.shape[0]}")
    batch, channels, length = x.shape
    kernel = w.shape[1]
    _, pad_l, pad_r = _same_pad(length, kernel, 1)

    x_pad = np.pad(x.data, ((0, 0), (0, 0), (pad_l, pad_r)))
    windows = np.lib.stride_tricks.sliding_window_view(x_pad, kernel, axis=2)
    y = np.einsum("bclk,ck->bcl", windows, w.data, optimize=True) + b.data[None, :, None]
    out = _node(y, (x, w, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            w._accum(np.einsum("bclk,bcl->ck", windows, g, optimize=True))
            b._accum(g.sum(axis=(0, 2)))
            gx_pad = np.zeros_like(x_pad)
            for k in range(kernel):
                gx_pad[:, :, k : k + length] += g * w.data[None, :, k, None]
            x._accum(gx_pad[:, :, pad_l : pad_l + length])
        out._backward = _bw
    return out


def maxpool1d(x) -> Tensor:
    """Window-2 stride-2 max over the last axis; ties go to the earlier sample."""
    x = _wrap(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects [B, C, L], got {x.shape}")
    batch, channels, length = x.shape
    if length % 2 != 0:
        raise ShapeError(f"maxpool1d needs an even length, got {length}")
    halves = x.data.reshape(batch, channels, length // 2, 2)
    idx = halves.argmax(axis=-1)
    y = np.take_along_axis(halves, idx[..., None], axis=-1)[..., 0]
    out = _node(y, (x,))
    if out.requires_grad:
        def _bw():
            gx = np.zeros_like(halves)
            np.put_along_axis(gx, idx[..., None], out.grad[..., None], axis=-1)
            x._accum(gx.reshape(x.shape))
        out._backward = _bw
    return out


def global_avg_pool(x) -> Tensor:
    """[B, C, L] -> [B, C] by averaging over time."""
    x = _wrap(x)
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects [B, C, L], got {x.shape}")
    return tmean(x, axis=2)


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)."""
    x = _wrap(x)
    if mode == "eval" or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))
