"""Compiled hot-path kernels for scaled dot-product attention.

The attention score matrix is (batch*heads, T, T) with T in the hundreds, so
the naive numpy expression allocates several hundred MB of temporaries and
spends most of its time in exp(). These kernels fuse score computation,
row softmax and the value mix into single passes.

Determinism: parallel loops split over independent output rows (forward) or
independent batch blocks (backward); every floating-point reduction inside a
row/block runs sequentially, so results are bit-identical across runs
regardless of thread scheduling. fastmath stays off for the same reason.
"""
import os
import sys
import threading

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange


class _BufferPool(threading.local):
    """Recycles the large (batch, T, T) weights buffer across sequential calls.

    Allocating 100+ MB fresh every step costs more in page faults than the
    softmax itself, so the previous buffer is reused once nothing else holds
    it. A buffer still referenced by a live autodiff node (refcount above the
    pool entry + the two locals here) is left alone and a fresh array is
    handed out instead, so overlapping attention nodes stay independent.
    """

    def __init__(self):
        self.buffers = {}

    def get(self, shape) -> np.ndarray:
        buf = self.buffers.get(shape)
        if buf is None or sys.getrefcount(buf) > 3:
            buf = np.empty(shape)
            self.buffers[shape] = buf
        return buf


_pool = _BufferPool()


@njit(parallel=True, cache=True)
def _attn_scores_softmax(q, k, scale, weights):
    b, t, d = q.shape
    for x in prange(b * t):
        bi = x // t
        i = x % t
        # score row, tracking the max for the stable softmax
        mx = -1.0e300
        for j in range(t):
            acc = 0.0
            for dd in range(d):
                acc += q[bi, i, dd] * k[bi, j, dd]
            acc *= scale
            weights[bi, i, j] = acc
            if acc > mx:
                mx = acc
        tot = 0.0
        for j in range(t):
            e = np.exp(weights[bi, i, j] - mx)
            weights[bi, i, j] = e
            tot += e
        inv = 1.0 / tot
        for j in range(t):
            weights[bi, i, j] *= inv


@njit(parallel=True, cache=True)
def _attn_backward_qk(q, k, v, weights, dout, scale, dq, dk):
    b, t, d = q.shape
    for bi in prange(b):
        da = np.empty(t)
        for i in range(t):
            # dA row and its weighted sum (softmax Jacobian term)
            c = 0.0
            for j in range(t):
                acc = 0.0
                for dd in range(d):
                    acc += dout[bi, i, dd] * v[bi, j, dd]
                da[j] = acc
                c += acc * weights[bi, i, j]
            # dS row folded directly into dq / dk accumulation
            for j in range(t):
                ds = scale * weights[bi, i, j] * (da[j] - c)
                for dd in range(d):
                    dq[bi, i, dd] += ds * k[bi, j, dd]
                    dk[bi, j, dd] += ds * q[bi, i, dd]


def attention_forward(q, k, v, scale):
    """softmax(q kT * scale) v for a stack of (T, d) sequences.

    q, k, v: float64 arrays of shape (batch, T, d).
    Returns (out, weights) with out (batch, T, d) and weights (batch, T, T);
    weights rows are the softmax distributions, kept for the backward pass.
    """
    q = np.ascontiguousarray(q)
    k = np.ascontiguousarray(k)
    v = np.ascontiguousarray(v)
    b, t, _ = q.shape
    weights = _pool.get((b, t, t))
    _attn_scores_softmax(q, k, scale, weights)
    out = np.matmul(weights, v)
    return out, weights


def attention_backward(q, k, v, weights, dout, scale):
    """Gradients of attention_forward wrt q, k, v."""
    q = np.ascontiguousarray(q)
    k = np.ascontiguousarray(k)
    v = np.ascontiguousarray(v)
    dout = np.ascontiguousarray(dout)
    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    _attn_backward_qk(q, k, v, weights, dout, scale, dq, dk)
    dv = np.matmul(weights.transpose(0, 2, 1), dout)
    return dq, dk, dv
