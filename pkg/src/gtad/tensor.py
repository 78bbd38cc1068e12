"""Dense float64 tensors with tape-based reverse-mode differentiation.

A Tensor wraps a numpy array. Operations executed while recording is on
append a node (output, parents, backward rule) to the global GradTape;
because nodes are appended in execution order the tape is always
topologically sorted. backward() walks the tape once in reverse, deposits
gradients on leaf tensors that require them, and clears the tape.

Shapes follow numpy broadcasting. Matrix operands must be at least 2-D;
wrap vectors with reshape. All data is float64.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import GraphError, NumericError, ShapeError

Array = np.ndarray


class Tensor:
    """Dense n-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor initialized with non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Array | None = None

    @classmethod
    def _wrap(cls, arr: Array, requires_grad: bool) -> "Tensor":
        # Internal fast path: no finiteness scan, no copy.
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all routes through the module-level ops below
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __pow__(self, p):
        return power(self, float(p))

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradTape:
    """Ordered record of executed operations for one forward pass."""

    __slots__ = ("nodes",)

    def __init__(self):
        # each node: (output tensor, parent tensors, backward rule)
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


_TAPE = GradTape()
_RECORDING = True


def tape() -> GradTape:
    return _TAPE


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _RECORDING
        self._prev = _RECORDING
        _RECORDING = False
        return self

    def __exit__(self, *exc):
        global _RECORDING
        _RECORDING = self._prev
        return False


def _from_op(data: Array, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    rg = _RECORDING and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, rg)
    if rg:
        _TAPE.nodes.append((out, parents, backward))
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable leaf that requires grad; clears the tape.

    The backward rule of node k runs only after every consumer of its output
    has contributed, which the reverse tape walk guarantees.
    """
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is detached: no recorded path to a tensor requiring grad")
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    produced = {id(out) for out, _, _ in _TAPE.nodes}
    leaves: dict[int, Tensor] = {}
    for out, parents, bwd in reversed(_TAPE.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for parent, pg in zip(parents, bwd(g)):
            if pg is None or not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
            if pid not in produced:
                leaves[pid] = parent
    for pid, leaf in leaves.items():
        g = grads.get(pid)
        if g is None:
            continue
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    _TAPE.clear()


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient g back down to a broadcast operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _from_op(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _from_op(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _from_op(a.data * b.data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _from_op(a.data / b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _from_op(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    def bwd(g):
        return (g * p * np.power(a.data, p - 1.0),)

    return _from_op(np.power(a.data, p), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bwd(g):
        return (g * out_data,)

    return _from_op(out_data, (a,), bwd)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log of non-positive value")

    def bwd(g):
        return (g / a.data,)

    return _from_op(np.log(a.data), (a,), bwd)


def relu(a: Tensor) -> Tensor:
    def bwd(g):
        return (g * (a.data > 0.0),)

    return _from_op(np.maximum(a.data, 0.0), (a,), bwd)


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.size / max(out_data.size, 1)

    def bwd(g):
        if axis is None:
            gg = np.broadcast_to(g, a.shape)
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            gg = np.broadcast_to(gg, a.shape)
        return (gg / n,)

    return _from_op(out_data, (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bwd(g):
        return (g.reshape(a.shape),)

    return _from_op(a.data.reshape(shape), (a,), bwd)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _from_op(a.data.transpose(axes), (a,), bwd)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    def bwd(g):
        return (g.swapaxes(ax1, ax2),)

    return _from_op(a.data.swapaxes(ax1, ax2), (a,), bwd)


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bwd(g):
        return (_unbroadcast(g, a.shape),)

    return _from_op(np.broadcast_to(a.data, shape).copy(), (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def getitem(a: Tensor, key) -> Tensor:
    # basic indexing only (ints, slices, ellipsis); use reshape for new axes.
    # A basic-index expression never aliases an element twice, so the
    # backward scatter is a plain in-place add.
    def bwd(g):
        gx = np.zeros_like(a.data)
        gx[key] += g
        return (gx,)

    return _from_op(a.data[key].copy(), (a,), bwd)


# ---------------------------------------------------------------------------
# fused numeric kernels
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with broadcast batch dimensions; operands must be >= 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    def bwd(g):
        ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
        return ga, gb

    return _from_op(np.matmul(a.data, b.data), (a, b), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Simplex-normalize along axis, max-shifted for stability."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - dot) * out_data,)

    return _from_op(out_data, (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    probs = np.exp(out_data)

    def bwd(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _from_op(out_data, (a,), bwd)


def conv1d_dilated(x: Tensor, weights: Tensor, dilation: int, kernel: int | None = None) -> Tensor:
    """Dilated 1-D convolution, left-aligned, no padding.

    x is [..., C, T] (or a bare [T] vector with [K] weights); weights are
    [O, C, K]. Output position t sees inputs t, t+dilation, ...,
    t+(K-1)*dilation, so each application shortens the series by
    (K-1)*dilation.
    """
    if dilation < 1:
        raise ShapeError("dilation must be >= 1")
    vector_case = x.ndim == 1 and weights.ndim == 1
    if vector_case:
        x = reshape(x, (1, x.shape[0]))
        weights = reshape(weights, (1, 1, weights.shape[0]))
    if weights.ndim != 3:
        raise ShapeError("conv weights must be [out_channels, in_channels, kernel]")
    k = weights.shape[-1]
    if kernel is not None and kernel != k:
        raise ShapeError(f"kernel={kernel} does not match weights kernel {k}")
    if x.shape[-2] != weights.shape[1]:
        raise ShapeError(f"channel mismatch: x has {x.shape[-2]}, weights expect {weights.shape[1]}")
    t_in = x.shape[-1]
    t_out = t_in - (k - 1) * dilation
    if t_out < 1:
        raise ShapeError(
            f"sequence of length {t_in} shorter than receptive field {(k - 1) * dilation + 1}"
        )

    xd, wd = x.data, weights.data
    out_data = np.matmul(wd[:, :, 0], xd[..., :, 0:t_out])
    for kk in range(1, k):
        lo = kk * dilation
        out_data = out_data + np.matmul(wd[:, :, kk], xd[..., :, lo:lo + t_out])

    def bwd(g):
        gx = np.zeros_like(xd)
        gw = np.zeros_like(wd)
        o = wd.shape[0]
        c = wd.shape[1]
        gb = g.reshape(-1, o, t_out)
        for kk in range(k):
            lo = kk * dilation
            gx[..., :, lo:lo + t_out] += np.matmul(wd[:, :, kk].T, g)
            xb = xd[..., :, lo:lo + t_out].reshape(-1, c, t_out)
            gw[:, :, kk] = np.einsum("bot,bct->oc", gb, xb)
        return gx, gw

    out = _from_op(out_data, (x, weights), bwd)
    if vector_case:
        out = reshape(out, (t_out,))
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def bwd(g):
        ghat = g * gain.data
        gx = inv * (
            ghat
            - ghat.mean(axis=-1, keepdims=True)
            - xhat * (ghat * xhat).mean(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=axes)
        gbias = g.sum(axis=axes)
        return gx, ggain, gbias

    return _from_op(out_data, (x, gain, bias), bwd)


def dropout(x: Tensor, p: float, gen: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return x
    if p >= 1.0:
        raise ShapeError("dropout rate must be < 1")
    mask = (gen.random(x.shape) >= p) / (1.0 - p)

    def bwd(g):
        return (g * mask,)

    return _from_op(x.data * mask, (x,), bwd)


def straight_through(soft: Tensor, hard_values: Array) -> Tensor:
    """Forward the given hard values; route gradient to the soft sample unchanged."""
    if hard_values.shape != soft.shape:
        raise ShapeError("straight-through values must match the soft sample shape")
    return _from_op(np.array(hard_values, dtype=np.float64), (soft,), lambda g: (g,))


def assert_finite(t: Tensor, what: str = "tensor") -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"{what} contains non-finite values")
