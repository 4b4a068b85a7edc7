"""Pure-numpy implementations of the hot kernels.

Fallback backend; selected when WEPADIM_NO_NUMBA is set or numba is absent.
Semantics match ``_numba`` exactly (same decimation phase, same packed
upper-triangle order, same forward-substitution recurrence).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    pair = _TRIU_CACHE.get(dim)
    if pair is None:
        pair = np.triu_indices(dim)
        _TRIU_CACHE[dim] = pair
    return pair


def analysis_lastaxis(x: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Zero-padded full convolution with lo/hi, decimated at odd phases.

    x: (rows, n) float64.  Returns (a, d) of shape (rows, (n+L-1)//2).
    """
    rows, n = x.shape
    taps = lo.shape[0]
    n_out = (n + taps - 1) // 2
    xp = np.zeros((rows, n + 2 * taps - 2), dtype=np.float64)
    xp[:, taps - 1 : taps - 1 + n] = x
    a = np.zeros((rows, n_out), dtype=np.float64)
    d = np.zeros((rows, n_out), dtype=np.float64)
    for t in range(taps):
        seg = xp[:, taps - t : taps - t + 2 * n_out : 2]
        a += lo[t] * seg
        d += hi[t] * seg
    return a, d


def synthesis_lastaxis(a: np.ndarray, d: np.ndarray, lo: np.ndarray,
                       hi: np.ndarray, n_orig: int) -> np.ndarray:
    """Adjoint of ``analysis_lastaxis``; exact inverse for orthonormal filters."""
    rows, n_coef = a.shape
    taps = lo.shape[0]
    xo = np.zeros((rows, n_orig + 2 * taps), dtype=np.float64)
    for t in range(taps):
        xo[:, taps - t : taps - t + 2 * n_coef : 2] += lo[t] * a + hi[t] * d
    return xo[:, taps - 1 : taps - 1 + n_orig].copy()


def accumulate_moments(sum_: np.ndarray, outer_packed: np.ndarray,
                       emb: np.ndarray) -> None:
    """sum_ += emb; outer_packed += packed upper triangle of emb emb^T, per row.

    emb: (locations, dim); outer_packed: (locations, dim*(dim+1)//2) in
    row-major upper-triangle order.  Chunked over locations to bound the
    temporary at ~2^24 float64.
    """
    locs, dim = emb.shape
    iu0, iu1 = _triu_indices(dim)
    step = max(1, int(2**24 // max(1, iu0.size)))
    for lo_ix in range(0, locs, step):
        hi_ix = min(locs, lo_ix + step)
        blk = emb[lo_ix:hi_ix]
        outer_packed[lo_ix:hi_ix] += blk[:, iu0] * blk[:, iu1]
    sum_ += emb


def mahalanobis_sq(chol: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances via forward substitution.

    chol: (locations, dim, dim) lower-triangular; delta: (locations, dim).
    """
    locs, dim = delta.shape
    z = np.empty((locs, dim), dtype=np.float64)
    for i in range(dim):
        acc = delta[:, i].copy()
        if i:
            acc -= np.einsum("pj,pj->p", chol[:, i, :i], z[:, :i])
        z[:, i] = acc / chol[:, i, i]
    return np.einsum("pj,pj->p", z, z)
