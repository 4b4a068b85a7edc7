"""Independent reference implementations used to freeze expected values.

Everything here is deliberately naive (dense operators, O(n^2) pair loops,
direct convolution) and shares no code with the library paths it checks.
"""

from __future__ import annotations

import math

import numpy as np


# --- wavelet transform via explicit dense operators -------------------------

def analysis_matrix(filt: np.ndarray, n: int) -> np.ndarray:
    """Rows are the zero-padded, odd-phase decimated convolution functionals."""
    taps = len(filt)
    n_out = (n + taps - 1) // 2
    mat = np.zeros((n_out, n))
    for k in range(n_out):
        for j in range(n):
            t = 2 * k + 1 - j
            if 0 <= t < taps:
                mat[k, j] = filt[t]
    return mat


def qmf_highpass(dec_lo: np.ndarray) -> np.ndarray:
    taps = len(dec_lo)
    return np.array([(-1) ** i * dec_lo[taps - 1 - i] for i in range(taps)])


def dwt2d_reference(x: np.ndarray, dec_lo: np.ndarray, level: int):
    """Dense-matrix multi-level 2D DWT of a (C, H, W) tensor.

    Returns (ll, details) with details[j] = (lh, hl, hh) for level j+1,
    matching the library's labeling: first filter along width, second along
    height, LH = lowpass width x highpass height.
    """
    dec_hi = qmf_highpass(dec_lo)
    cur = x.astype(np.float64)
    details = []
    for _ in range(level):
        _, h, w = cur.shape
        a_h = analysis_matrix(dec_lo, h)
        d_h = analysis_matrix(dec_hi, h)
        a_w = analysis_matrix(dec_lo, w)
        d_w = analysis_matrix(dec_hi, w)
        low_w = np.einsum("chw,kw->chk", cur, a_w)
        high_w = np.einsum("chw,kw->chk", cur, d_w)
        ll = np.einsum("chk,mh->cmk", low_w, a_h)
        lh = np.einsum("chk,mh->cmk", low_w, d_h)
        hl = np.einsum("chk,mh->cmk", high_w, a_h)
        hh = np.einsum("chk,mh->cmk", high_w, d_h)
        details.append((lh, hl, hh))
        cur = ll
    return cur, details


# --- statistics --------------------------------------------------------------

def two_pass_moments(samples: np.ndarray):
    """samples: (N, locations, dim) -> (means, covariances) with N-1 divisor."""
    n = samples.shape[0]
    means = samples.mean(axis=0)
    centered = samples - means[None]
    cov = np.einsum("npi,npj->pij", centered, centered) / (n - 1)
    return means, cov


def mahalanobis_reference(cov: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """(locations,) squared distances via explicit matrix inverse."""
    out = np.empty(delta.shape[0])
    for p in range(delta.shape[0]):
        inv = np.linalg.inv(cov[p])
        out[p] = delta[p] @ inv @ delta[p]
    return out


def pairwise_auc(scores, labels) -> float:
    """O(n^2) pair counting; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def welch_p_quadrature(a, b) -> float:
    """Two-sided Welch p-value via direct quadrature of the t density."""
    from scipy.integrate import quad

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0:
        return 1.0 if a.mean() == b.mean() else 0.0
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))

    const = math.exp(
        math.lgamma((df + 1) / 2) - math.lgamma(df / 2)
    ) / math.sqrt(df * math.pi)

    def density(u):
        return const * (1 + u * u / df) ** (-(df + 1) / 2)

    tail, _ = quad(density, abs(t), np.inf)
    return 2.0 * tail


# --- image operations --------------------------------------------------------

def blur2d_direct(values: np.ndarray, kernel1d: np.ndarray) -> np.ndarray:
    """Direct 2D convolution with the separable kernel's outer product,
    symmetric (edge-inclusive reflect) padding."""
    k2 = np.outer(kernel1d, kernel1d)
    r = len(kernel1d) // 2
    padded = np.pad(values, r, mode="symmetric")
    h, w = values.shape
    out = np.zeros_like(values, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            out[i, j] = (padded[i : i + 2 * r + 1, j : j + 2 * r + 1] * k2[::-1, ::-1]).sum()
    return out


def bilinear_reference(x: np.ndarray, target) -> np.ndarray:
    """Per-pixel half-pixel-center bilinear resize of a (C, h, w) tensor."""
    c, h, w = x.shape
    th, tw = target
    out = np.zeros((c, th, tw))
    for i in range(th):
        sy = min(max((i + 0.5) * h / th - 0.5, 0.0), h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(tw):
            sx = min(max((j + 0.5) * w / tw - 0.5, 0.0), w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for ch in range(c):
                top = x[ch, y0, x0] * (1 - fx) + x[ch, y0, x1] * fx
                bot = x[ch, y1, x0] * (1 - fx) + x[ch, y1, x1] * fx
                out[ch, i, j] = top * (1 - fy) + bot * fy
    return out
