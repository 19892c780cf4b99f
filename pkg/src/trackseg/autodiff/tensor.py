"""Reverse-mode automatic differentiation on dense numpy arrays.

A ``Tensor`` wraps a numpy array plus an optional gradient accumulator.
Differentiable operations record themselves onto the innermost active
``Tape``; ``Tape.backward`` replays the records in reverse and accumulates
gradients into every ``requires_grad`` tensor reachable from the loss.
Float32 is the training dtype; float64 exists for finite-difference
gradient checking.
"""

from __future__ import annotations

import contextlib

import numpy as np

# Forward outputs are checked for NaN/Inf (an error state per the engine
# contract). Flip off only for throughput experiments.
CHECK_FINITE = True

_ACTIVE_TAPES: list["Tape"] = []
_CURRENT_TAG: str = ""


class DimensionError(ValueError):
    """Shapes or axes that make the requested operation meaningless."""


class Tensor:
    """Dense row-major array with an optional same-shape gradient buffer."""

    __slots__ = ("values", "requires_grad", "grad", "_tape")

    def __init__(self, values, requires_grad=False, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def item(self):
        return float(self.values.reshape(-1)[0]) if self.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise DimensionError(f"item() on tensor of shape {self.shape}")

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or not isinstance(shape[0], (tuple, list)) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) != 1 or not isinstance(axes[0], (tuple, list)) else axes[0])


class _Record:
    """One recorded operation: output, inputs, and its backward rule."""

    __slots__ = ("op", "out", "inputs", "backward", "tag", "macs")

    def __init__(self, op, out, inputs, backward, tag, macs=0):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward = backward
        self.tag = tag
        self.macs = macs


class Tape:
    """Ordered record of operations; inputs always precede their consumers.

    Use as a context manager around the forward computation, then call
    ``backward(loss)``. Independent tapes are independent; nothing is shared.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        return False

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(t) into t.grad for every recorded tensor.

        Repeated calls add up; callers zero grads between optimizer steps.
        """
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ValueError("loss was not recorded on this tape")
        adjoint = {id(loss): np.ones_like(loss.values)}
        tensors = {id(loss): loss}
        for rec in reversed(self.records):
            g = adjoint.get(id(rec.out))
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                tensors[id(t)] = t
                prev = adjoint.get(id(t))
                adjoint[id(t)] = gi if prev is None else prev + gi
        for key, t in tensors.items():
            if t.requires_grad:
                g = adjoint[key].astype(t.dtype, copy=False)
                t.grad = g.copy() if t.grad is None else t.grad + g

    def macs(self, tag=None):
        """Total recorded multiply-accumulate count, optionally by tag."""
        return sum(r.macs for r in self.records if tag is None or r.tag == tag)


@contextlib.contextmanager
def tape_section(tag):
    """Label records made inside the block (for cost probes)."""
    global _CURRENT_TAG
    prev = _CURRENT_TAG
    _CURRENT_TAG = tag
    try:
        yield
    finally:
        _CURRENT_TAG = prev


def backward(loss: Tensor):
    """Run reverse-mode accumulation from ``loss`` on the tape that made it."""
    if loss._tape is None:
        raise ValueError("loss is not attached to any tape")
    loss._tape.backward(loss)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(op, values, inputs, backward_fn, macs=0) -> Tensor:
    """Wrap a forward result, recording it when a tape is active."""
    if CHECK_FINITE and not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor(values)
    tape = _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append(_Record(op, out, inputs, backward_fn, _CURRENT_TAG, macs))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out axes that numpy broadcasting expanded, back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# -- elementwise arithmetic (trailing-dimension broadcasting) ---------------


def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _as_tensor(b, a)
    out = a.values + b.values
    return _make("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _as_tensor(b, a)
    out = a.values - b.values
    return _make("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _as_tensor(b, a)
    out = a.values * b.values

    def bwd(g):
        return (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape))

    return _make("mul", out, (a, b), bwd)


def div(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _as_tensor(b, a)
    out = a.values / b.values

    def bwd(g):
        ga = _unbroadcast(g / b.values, a.shape)
        gb = _unbroadcast(-g * a.values / (b.values * b.values), b.shape)
        return (ga, gb)

    return _make("div", out, (a, b), bwd)


# -- matrix product ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. 2-D inputs, or stacks with identical leading dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul expects at least 2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch extents differ: {a.shape} x {b.shape}")
    out = a.values @ b.values
    macs = int(np.prod(out.shape, dtype=np.int64)) * a.shape[-1]

    def bwd(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        return (ga, gb)

    return _make("matmul", out, (a, b), bwd, macs=macs)


# -- activations -------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return _make("relu", np.where(mask, x.values, 0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid_np(x.values)
    return _make("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def _sigmoid_np(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.values)
    return _make("exp", y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return _make("log", np.log(x.values), (x,), lambda g: (g / x.values,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow."""
    v = x.values
    y = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return _make("softplus", y, (x,), lambda g: (g * _sigmoid_np(v),))


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.shape).astype(x.dtype, copy=False),)

    return _make("sum", out, (x,), bwd)


def tmean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    out = x.values.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / count, x.shape).astype(x.dtype, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / count, x.shape).astype(x.dtype, copy=False),)

    return _make("mean", out, (x,), bwd)


# -- softmax family -----------------------------------------------------------


def softmax(x: Tensor, axis=-1) -> Tensor:
    """Max-stabilized softmax along ``axis``; outputs sum to one there."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make("softmax", y, (x,), bwd)


def logsumexp(x: Tensor, axis=-1) -> Tensor:
    """Stable log-sum-exp along ``axis`` (axis is removed)."""
    m = x.values.max(axis=axis, keepdims=True)
    e = np.exp(x.values - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(np.log(s) + m, axis=axis)
    soft = e / s

    def bwd(g):
        return (np.expand_dims(g, axis) * soft,)

    return _make("logsumexp", out, (x,), bwd)


# -- normalization ------------------------------------------------------------


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.values + bias.values

    def bwd(g):
        dxhat = g * gain.values
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        red = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=red) if red else g * xhat
        dbias = g.sum(axis=red) if red else g.copy()
        return (dx, dgain, dbias)

    return _make("layer_norm", out, (x, gain, bias), bwd)


def l2_normalize(x: Tensor, eps=1e-8) -> Tensor:
    """Scale the last axis to unit L2 norm; y = x / sqrt(sum(x^2) + eps)."""
    s = (x.values * x.values).sum(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(s + eps)
    y = x.values * inv

    def bwd(g):
        dot = (g * x.values).sum(axis=-1, keepdims=True)
        return (g * inv - x.values * (dot * inv ** 3),)

    return _make("l2_normalize", y, (x,), bwd)


# -- shape manipulation --------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.values.reshape(shape)
    return _make("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", x.values.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", out, tuple(tensors), bwd)


def take(x: Tensor, key) -> Tensor:
    """Basic/advanced indexing; gradient scatter-adds into the source."""
    out = np.asarray(x.values[key])

    def bwd(g):
        dx = np.zeros_like(x.values)
        np.add.at(dx, key, g)
        return (dx,)

    return _make("take", out, (x,), bwd)


def stack(tensors, axis=0) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.values for t in tensors], axis=axis)

    def bwd(g):
        parts = np.split(g, len(tensors), axis=axis)
        return tuple(np.squeeze(p, axis=axis) for p in parts)

    return _make("stack", out, tuple(tensors), bwd)


def minimum_const(x: Tensor, cap: float) -> Tensor:
    """Elementwise min(x, cap) as cap - relu(cap - x)."""
    return sub(float(cap), relu(sub(float(cap), x)))
