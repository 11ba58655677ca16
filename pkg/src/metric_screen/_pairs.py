"""Compiled pair loops.

Every loop visits unordered pairs ``i < j`` once.  Rows are dealt into
fixed blocks (independent of the thread count); each block writes its own
partial sums and the partials are reduced serially in block order, so the
result is bit-identical for any number of threads.
"""
from __future__ import annotations

import math
import os

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

from numba import njit, prange

NEG_EXP = 0
SQRT_SHIFT = 1

BLOCK_ROWS = 8


# f is shifted by f(0): both pair averages are normalized, so the shift
# cancels, and beta = 0 then gives exactly zero with less cancellation
@njit(inline="always")
def _link(family, param, t):
    if family == NEG_EXP:
        return -math.expm1(-t / param), math.exp(-t / param) / param
    r = math.sqrt(t + param)
    return r - math.sqrt(param), 0.5 / r


def row_order(n: int) -> np.ndarray:
    """Interleave short and long rows (0, n-1, 1, n-2, ...) to balance blocks."""
    order = np.empty(n, dtype=np.int64)
    lo, hi = 0, n - 1
    k = 0
    while lo <= hi:
        order[k] = lo
        k += 1
        if hi != lo:
            order[k] = hi
            k += 1
        lo += 1
        hi -= 1
    return order


# reassociation lets the dot-product reduction vectorize; order is still fixed
# at compile time, so results stay deterministic
@njit(parallel=True, cache=True, fastmath={"reassoc", "contract"})
def fused_blocks(X, y, w, beta, active, order, family, param, q,
                 inv_between, inv_within, want_grad):
    """Per-block partial objective values and gradients.

    Returns ``(vals, grads)`` with ``vals[b]`` the block's contribution to
    the normalized between-minus-within objective and ``grads[b]`` its
    contribution to the gradient (shape ``(nblocks, p)``, or ``(nblocks, 0)``
    when ``want_grad`` is false).
    """
    n, p = X.shape
    nb = (n + BLOCK_ROWS - 1) // BLOCK_ROWS
    vals = np.zeros(nb)
    grads = np.zeros((nb, p if want_grad else 0))
    na = active.shape[0]
    # contiguous loop beats the gathered one once most coordinates are active
    dense = 2 * na > p
    for b in prange(nb):
        acc = 0.0
        g = grads[b]
        stop = min(n, (b + 1) * BLOCK_ROWS)
        for r in range(b * BLOCK_ROWS, stop):
            i = order[r]
            wi = w[i]
            if wi == 0.0:
                continue
            xi = X[i]
            for j in range(i + 1, n):
                wj = w[j]
                if wj == 0.0:
                    continue
                xj = X[j]
                t = 0.0
                if dense:
                    if q == 1:
                        for k in range(p):
                            t += beta[k] * abs(xi[k] - xj[k])
                    else:
                        for k in range(p):
                            d = xi[k] - xj[k]
                            t += beta[k] * d * d
                elif q == 1:
                    for a in range(na):
                        k = active[a]
                        t += beta[k] * abs(xi[k] - xj[k])
                else:
                    for a in range(na):
                        k = active[a]
                        d = xi[k] - xj[k]
                        t += beta[k] * d * d
                fv, fp = _link(family, param, t)
                if y[i] != y[j]:
                    s = wi * wj * inv_between
                else:
                    s = -wi * wj * inv_within
                acc += s * fv
                if want_grad:
                    sp = s * fp
                    if q == 1:
                        for k in range(p):
                            g[k] += sp * abs(xi[k] - xj[k])
                    else:
                        for k in range(p):
                            d = xi[k] - xj[k]
                            g[k] += sp * d * d
        vals[b] = acc
    return vals, grads


@njit(cache=True)
def reduce_blocks(vals, grads):
    total = 0.0
    for b in range(vals.shape[0]):
        total += vals[b]
    p = grads.shape[1]
    g = np.zeros(p)
    for b in range(grads.shape[0]):
        for k in range(p):
            g[k] += grads[b, k]
    return total, g


@njit(cache=True, fastmath={"reassoc", "contract"})
def fused_pairs(X, y, w, beta, active, I, J, family, param, q,
                inv_between, inv_within, want_grad):
    """Same sums restricted to an explicit list of unordered pairs."""
    p = X.shape[1]
    na = active.shape[0]
    g = np.zeros(p if want_grad else 0)
    acc = 0.0
    for m in range(I.shape[0]):
        i = I[m]
        j = J[m]
        xi = X[i]
        xj = X[j]
        t = 0.0
        for a in range(na):
            k = active[a]
            d = abs(xi[k] - xj[k])
            if q == 2:
                d = d * d
            t += beta[k] * d
        fv, fp = _link(family, param, t)
        if y[i] != y[j]:
            s = w[i] * w[j] * inv_between
        else:
            s = -w[i] * w[j] * inv_within
        acc += s * fv
        if want_grad:
            sp = s * fp
            for k in range(p):
                d = abs(xi[k] - xj[k])
                if q == 2:
                    d = d * d
                g[k] += sp * d
    return acc, g


@njit(parallel=True, cache=True, fastmath={"reassoc", "contract"})
def kernel_matrix(X, beta, active, family, param, q):
    """Symmetric matrix ``K[i, j] = f(<beta, delta_ij>) - f(0)``; the diagonal is 0."""
    n = X.shape[0]
    na = active.shape[0]
    K = np.empty((n, n))
    f0, _ = _link(family, param, 0.0)
    for i in prange(n):
        K[i, i] = f0
        xi = X[i]
        for j in range(i + 1, n):
            xj = X[j]
            t = 0.0
            for a in range(na):
                k = active[a]
                d = abs(xi[k] - xj[k])
                if q == 2:
                    d = d * d
                t += beta[k] * d
            fv, _ = _link(family, param, t)
            K[i, j] = fv
            K[j, i] = fv
    return K


def set_threads(n: int | None = None) -> int:
    """Set the compiled-loop thread count; ``None`` reads METRIC_SCREEN_THREADS."""
    if n is None:
        env = os.environ.get("METRIC_SCREEN_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def get_threads() -> int:
    return numba.get_num_threads()
