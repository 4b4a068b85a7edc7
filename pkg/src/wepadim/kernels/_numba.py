"""Numba-compiled hot kernels (default backend).

Single-threaded, nogil, no fastmath: results must be deterministic and
independent of the caller's thread pool size.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True, nogil=True)
def analysis_lastaxis(x, lo, hi):
    rows, n = x.shape
    taps = lo.shape[0]
    n_out = (n + taps - 1) // 2
    a = np.zeros((rows, n_out))
    d = np.zeros((rows, n_out))
    for r in range(rows):
        for k in range(n_out):
            sa = 0.0
            sd = 0.0
            base = 2 * k + 1
            for t in range(taps):
                j = base - t
                if 0 <= j < n:
                    v = x[r, j]
                    sa += lo[t] * v
                    sd += hi[t] * v
            a[r, k] = sa
            d[r, k] = sd
    return a, d


@njit(cache=True, nogil=True)
def synthesis_lastaxis(a, d, lo, hi, n_orig):
    rows, n_coef = a.shape
    taps = lo.shape[0]
    x = np.zeros((rows, n_orig))
    for r in range(rows):
        for t in range(taps):
            c_lo = lo[t]
            c_hi = hi[t]
            for k in range(n_coef):
                j = 2 * k + 1 - t
                if 0 <= j < n_orig:
                    x[r, j] += c_lo * a[r, k] + c_hi * d[r, k]
    return x


@njit(cache=True, nogil=True)
def accumulate_moments(sum_, outer_packed, emb):
    locs, dim = emb.shape
    for p in range(locs):
        k = 0
        for i in range(dim):
            v = emb[p, i]
            sum_[p, i] += v
            for j in range(i, dim):
                outer_packed[p, k] += v * emb[p, j]
                k += 1


@njit(cache=True, nogil=True)
def mahalanobis_sq(chol, delta):
    locs, dim = delta.shape
    out = np.empty(locs)
    z = np.empty(dim)
    for p in range(locs):
        for i in range(dim):
            s = delta[p, i]
            for j in range(i):
                s -= chol[p, i, j] * z[j]
            z[i] = s / chol[p, i, i]
        acc = 0.0
        for i in range(dim):
            acc += z[i] * z[i]
        out[p] = acc
    return out
