"""Orthogonal wavelet filter banks and separable 2D DWT/IDWT.

Conventions (frozen so that coefficients, and therefore fitted models, are
reproducible):

* analysis = zero-padded full convolution with the decomposition filters,
  decimated at odd phases; per-axis output length ``(n + taps - 1) // 2``;
* highpass from lowpass by quadrature mirror: ``g[n] = (-1)^n h[taps-1-n]``;
* subband label "AB" means filter A along the width axis and B along the
  height axis: LH = horizontal detail, HL = vertical detail, HH = diagonal;
* multi-level decomposition recurses on the LL band; detail tensors are kept
  per level, finest first.

Reconstruction filters are the time-reversed decomposition filters, which for
orthonormal banks makes ``idwt2d(dwt2d(x))`` exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, SizeError

# Orthonormal scaling coefficients (reconstruction orientation); decomposition
# filters are their reversals.  Standard published values, Newton-polished so
# the orthonormality/QMF identities hold to ~1e-16 (the raw 16-digit
# literature values leave ~1e-12 residuals).
_REC_LO = {
    "haar": [
        0.7071067811865476,
        0.7071067811865476,
    ],
    "db2": [
        0.48296291314453416,
        0.8365163037378079,
        0.2241438680420134,
        -0.12940952255126037,
    ],
    "db4": [
        0.2303778133090184,
        0.7148465705528659,
        0.6308807679298691,
        -0.027983769417009773,
        -0.18703481171907826,
        0.03084138183571911,
        0.03288301166673803,
        -0.010597401785027907,
    ],
    "sym4": [
        0.03222310060383668,
        -0.012603967262005014,
        -0.09921954357686813,
        0.2978577956054511,
        0.8037387518055222,
        0.4976186676321052,
        -0.029635527645943266,
        -0.07576571478900379,
    ],
}

SUPPORTED_FAMILIES = tuple(sorted(_REC_LO))


@dataclass(frozen=True)
class WaveletFamily:
    """Decomposition/reconstruction filter quadruple for one wavelet."""

    name: str
    lowpass_dec: np.ndarray
    highpass_dec: np.ndarray
    lowpass_rec: np.ndarray
    highpass_rec: np.ndarray

    @property
    def taps(self) -> int:
        return self.lowpass_dec.shape[0]


def filter_bank(name: str) -> WaveletFamily:
    """Build the filter bank for a supported family name."""
    if name not in _REC_LO:
        raise ConfigError(
            f"unknown wavelet family {name!r}; supported: {', '.join(SUPPORTED_FAMILIES)}"
        )
    rec_lo = np.asarray(_REC_LO[name], dtype=np.float64)
    dec_lo = rec_lo[::-1].copy()
    taps = dec_lo.shape[0]
    signs = np.where(np.arange(taps) % 2 == 0, 1.0, -1.0)
    dec_hi = signs * dec_lo[::-1]
    rec_hi = dec_hi[::-1].copy()
    return WaveletFamily(name, dec_lo, dec_hi, rec_lo, rec_hi)


def coeff_len(n: int, taps: int) -> int:
    """Per-axis coefficient count for one analysis level."""
    return (n + taps - 1) // 2


@dataclass(frozen=True)
class SubbandPyramid:
    """Multi-level decomposition of a ``C x H x W`` tensor.

    ``details[j]`` holds the (lh, hl, hh) tensors of level ``j+1``; ``ll`` is
    the approximation at the final level.  All subbands keep the channel axis.
    """

    level: int
    ll: np.ndarray
    details: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if self.level != len(self.details):
            raise ConfigError("pyramid level does not match detail count")


def _analysis_axis(x: np.ndarray, family: WaveletFamily, axis: int):
    """One analysis step along the given spatial axis of a C x H x W tensor."""
    moved = np.moveaxis(x, axis, -1)
    lead = moved.shape[:-1]
    n = moved.shape[-1]
    flat = np.ascontiguousarray(moved.reshape(-1, n))
    a, d = kernels.analysis_lastaxis(flat, family.lowpass_dec, family.highpass_dec)
    n_out = a.shape[1]
    a = np.moveaxis(a.reshape(*lead, n_out), -1, axis)
    d = np.moveaxis(d.reshape(*lead, n_out), -1, axis)
    return np.ascontiguousarray(a), np.ascontiguousarray(d)


def _synthesis_axis(a: np.ndarray, d: np.ndarray, family: WaveletFamily,
                    axis: int, n_orig: int) -> np.ndarray:
    moved_a = np.moveaxis(a, axis, -1)
    moved_d = np.moveaxis(d, axis, -1)
    lead = moved_a.shape[:-1]
    n = moved_a.shape[-1]
    # scatter form of correlation with the rec filters == uses dec-orientation taps
    x = kernels.synthesis_lastaxis(
        np.ascontiguousarray(moved_a.reshape(-1, n)),
        np.ascontiguousarray(moved_d.reshape(-1, n)),
        family.lowpass_dec,
        family.highpass_dec,
        n_orig,
    )
    return np.ascontiguousarray(np.moveaxis(x.reshape(*lead, n_orig), -1, axis))


def _single_level(x: np.ndarray, family: WaveletFamily):
    """One separable 2D analysis step: returns (ll, lh, hl, hh)."""
    # width first ("A" of the label), then height ("B")
    low_w, high_w = _analysis_axis(x, family, axis=2)
    ll, lh = _analysis_axis(low_w, family, axis=1)
    hl, hh = _analysis_axis(high_w, family, axis=1)
    return ll, lh, hl, hh


def dwt2d(x: np.ndarray, family: WaveletFamily, level: int) -> SubbandPyramid:
    """Multi-level separable 2D DWT of a ``C x H x W`` float tensor.

    Raises SizeError when a level would see a spatial extent smaller than the
    filter length.
    """
    if level < 1:
        raise ConfigError(f"decomposition level must be >= 1, got {level}")
    if x.ndim != 3:
        raise ConfigError(f"dwt2d expects a rank-3 tensor, got rank {x.ndim}")
    cur = np.ascontiguousarray(x, dtype=np.float64)
    details = []
    for j in range(1, level + 1):
        h, w = cur.shape[1], cur.shape[2]
        if h < family.taps or w < family.taps:
            raise SizeError(
                f"level {j}: spatial size {h}x{w} smaller than the "
                f"{family.name} filter length {family.taps}"
            )
        ll, lh, hl, hh = _single_level(cur, family)
        details.append((lh, hl, hh))
        cur = ll
    return SubbandPyramid(level=level, ll=cur, details=tuple(details))


def _size_chain(size: tuple[int, int], taps: int, level: int) -> list[tuple[int, int]]:
    """Spatial sizes [input, level1, ..., levelJ]."""
    sizes = [size]
    for _ in range(level):
        h, w = sizes[-1]
        sizes.append((coeff_len(h, taps), coeff_len(w, taps)))
    return sizes


def idwt2d(pyramid: SubbandPyramid, family: WaveletFamily,
           original_size: tuple[int, int]) -> np.ndarray:
    """Invert ``dwt2d``; exact for orthonormal families (to rounding)."""
    sizes = _size_chain(original_size, family.taps, pyramid.level)
    if tuple(pyramid.ll.shape[1:]) != sizes[-1]:
        raise ConfigError(
            f"pyramid LL size {pyramid.ll.shape[1:]} does not match "
            f"{sizes[-1]} expected for input {original_size} with {family.name}"
        )
    cur = pyramid.ll
    for j in range(pyramid.level, 0, -1):
        lh, hl, hh = pyramid.details[j - 1]
        if lh.shape != cur.shape or hl.shape != cur.shape or hh.shape != cur.shape:
            raise ConfigError(f"level {j}: detail shapes do not match the LL band")
        target_h, target_w = sizes[j - 1]
        # invert height axis, then width axis
        low_w = _synthesis_axis(cur, lh, family, axis=1, n_orig=target_h)
        high_w = _synthesis_axis(hl, hh, family, axis=1, n_orig=target_h)
        cur = _synthesis_axis(low_w, high_w, family, axis=2, n_orig=target_w)
    return cur
