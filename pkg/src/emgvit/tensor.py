"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every operation that sees a gradient-requiring input appends one node to the
active ComputationTape (a Wengert list). Because nodes are appended in
execution order, walking the tape backwards is a valid reverse-topological
traversal that visits each node exactly once; gradients for tensors used on
several paths accumulate across those visits. Accumulation order is the fixed
reverse tape order, so repeated runs with identical inputs are bit-identical.

All math is 64-bit. Each training context (thread) owns its tape; tensors
must not be shared across contexts while recording.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from . import _kernels
from .errors import ContractError, ShapeError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_debug_check_finite = False


def set_debug_finite(enabled: bool) -> None:
    """Toggle the per-op finiteness assertion (off by default; debugging aid)."""
    global _debug_check_finite
    _debug_check_finite = bool(enabled)


class TapeNode:
    """One recorded operation: its output, inputs, and backward rule."""

    __slots__ = ("output", "parents", "backward_rule")

    def __init__(self, output: "Tensor", parents: tuple, backward_rule: Callable):
        self.output = output
        self.parents = parents
        self.backward_rule = backward_rule


class ComputationTape:
    """Ordered list of recorded operations; inputs always precede their users."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def record(self, output: "Tensor", parents: tuple, backward_rule: Callable) -> None:
        self.nodes.append(TapeNode(output, parents, backward_rule))

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _ThreadState(threading.local):
    def __init__(self):
        self.tape = ComputationTape()
        self.grad_enabled = True


_state = _ThreadState()


def active_tape() -> ComputationTape:
    """The tape recording operations on the current thread."""
    return _state.tape


@contextmanager
def no_grad():
    """Disable recording inside the block (inference / oracle evaluation)."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # arithmetic sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, parents: tuple, backward_rule: Callable) -> Tensor:
    values = np.asarray(values, dtype=np.float64)
    if _debug_check_finite and not np.all(np.isfinite(values)):
        raise ContractError("operation produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.requires_grad = _state.grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        _state.tape.record(out, parents, backward_rule)
    return out


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Collapse a broadcasted gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g if g.shape == shape else np.broadcast_to(g, shape).copy()


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every requires_grad tensor.

    loss must be scalar. Consumes and clears the current thread's tape; leaf
    gradients add onto any existing .grad (zero them between steps).
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.values.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    tape = _state.tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    refs: dict[int, Tensor] = {id(loss): loss}
    try:
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            refs.pop(id(node.output), None)
            _accumulate(node.output, g)
            parent_grads = node.backward_rule(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                buf = grads.get(key)
                if buf is None:
                    grads[key] = pg.copy()
                    refs[key] = parent
                else:
                    buf += pg
        for key, g in grads.items():
            _accumulate(refs[key], g)
    finally:
        tape.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ash, bsh = a.shape, b.shape

    def bw(g):
        return _sum_to_shape(g, ash), _sum_to_shape(g, bsh)

    return _make(a.values + b.values, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ash, bsh = a.shape, b.shape

    def bw(g):
        return _sum_to_shape(g, ash), _sum_to_shape(-g, bsh)

    return _make(a.values - b.values, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    ash, bsh = a.shape, b.shape

    def bw(g):
        return _sum_to_shape(g * bv, ash), _sum_to_shape(g * av, bsh)

    return _make(av * bv, (a, b), bw)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def bw(g):
        return (g * c,)

    return _make(a.values * c, (a,), bw)


def matmul(a, b) -> Tensor:
    """Matrix product; leading batch dimensions broadcast, dA = g Bt, dB = At g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    av, bv = a.values, b.values
    if av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {av.shape} @ {bv.shape}")
    ash, bsh = a.shape, b.shape

    def bw(g):
        da = _sum_to_shape(np.matmul(g, np.swapaxes(bv, -1, -2)), ash)
        db = _sum_to_shape(np.matmul(np.swapaxes(av, -1, -2), g), bsh)
        return da, db

    return _make(np.matmul(av, bv), (a, b), bw)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(x) for x in axes)
    inverse = tuple(np.argsort(axes))

    def bw(g):
        return (np.transpose(g, inverse),)

    return _make(np.transpose(a.values, axes).copy(), (a,), bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    ash = a.shape
    try:
        vals = a.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None

    def bw(g):
        return (g.reshape(ash),)

    return _make(vals, (a,), bw)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=axis))

    return _make(np.concatenate([p.values for p in parts], axis=axis), tuple(parts), bw)


def take(a, key) -> Tensor:
    """Basic indexing (ints and slices); gradient scatters into zeros."""
    a = _as_tensor(a)
    av = a.values
    vals = av[key]
    vals = np.array(vals)  # detach from the source buffer

    def bw(g):
        z = np.zeros_like(av)
        z[key] = g
        return (z,)

    return _make(vals, (a,), bw)


def broadcast_to(a, shape) -> Tensor:
    a = _as_tensor(a)
    ash = a.shape

    def bw(g):
        return (_sum_to_shape(g, ash),)

    return _make(np.broadcast_to(a.values, shape).copy(), (a,), bw)


def softmax(x, axis: int = -1) -> Tensor:
    """exp(x - max) normalized along axis; each slice sums to 1."""
    x = _as_tensor(x)
    axis = int(axis)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    m = x.values.max(axis=axis, keepdims=True)
    e = np.exp(x.values - m)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _make(s, (x,), bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},)")
    xv, gv = x.values, gain.values
    mu = xv.mean(axis=-1, keepdims=True)
    var = xv.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv

    def bw(g):
        dgain = _sum_to_shape(g * xhat, gain.shape)
        dbias = _sum_to_shape(g, bias.shape)
        dxhat = g * gv
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return dx, dgain, dbias

    return _make(gv * xhat + bias.values, (x, gain, bias), bw)


def gelu(x) -> Tensor:
    """Exact Gaussian-error-linear unit x * Phi(x)."""
    x = _as_tensor(x)
    xv = x.values
    phi = 0.5 * (1.0 + erf(xv / _SQRT2))

    def bw(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)
        return (g * (phi + xv * pdf),)

    return _make(xv * phi, (x,), bw)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    xv = x.values

    def bw(g):
        return (g * (xv > 0.0),)

    return _make(np.maximum(xv, 0.0), (x,), bw)


def cross_entropy_with_logits(logits, labels) -> Tensor:
    """Per-row -log softmax(logits)[label] via the stable log-sum-exp form.

    logits: (B, C) tensor; labels: length-B integer array. Returns (B,) losses.
    """
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ContractError(f"logits must be 2-D (batch, classes), got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ContractError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"labels must lie in [0, {c})")
    lv = logits.values
    m = lv.max(axis=1, keepdims=True)
    e = np.exp(lv - m)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    rows = np.arange(n)
    losses = (np.log(z) + m)[:, 0] - lv[rows, labels]

    def bw(g):
        dl = p * g[:, None]
        dl[rows, labels] -= g
        return (dl,)

    return _make(losses, (logits,), bw)


def _normalize_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tensor_sum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    ash = a.shape

    def bw(g):
        ge = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(ge, ash).copy(),)

    return _make(a.values.sum(axis=axes or None), (a,), bw)


def tensor_mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    ash = a.shape
    n = 1
    for ax in axes:
        n *= ash[ax]

    def bw(g):
        ge = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(ge, ash) / n,)

    return _make(a.values.mean(axis=axes or None), (a,), bw)


def scaled_dot_attention(q, k, v) -> Tensor:
    """softmax(q kT / sqrt(d)) v over a stack of sequences.

    q, k, v: tensors of shape (batch, T, d) where batch typically flattens
    (windows x heads). Runs the fused compiled kernel; the softmax matrix is
    retained inside the node for the backward pass.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"q/k/v must share a (batch, T, d) shape, got {q.shape}, {k.shape}, {v.shape}")
    d = q.shape[-1]
    s = 1.0 / math.sqrt(d)
    qv, kv, vv = q.values, k.values, v.values
    out, weights = _kernels.attention_forward(qv, kv, vv, s)

    def bw(g):
        return _kernels.attention_backward(qv, kv, vv, weights, g, s)

    return _make(out, (q, k, v), bw)
