"""Anomaly-map post-processing and heatmap export.

Raw per-location score maps are bilinearly upsampled to the input resolution,
then smoothed with a truncated Gaussian (radius = ceil(4 sigma), kernel
L1-normalized, edge-inclusive reflect boundary).  The image-level score is the
maximum of the smoothed map.  ``sigma == 0`` skips the blur.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed import bilinear_resize
from .errors import ConfigError
from .pgm import write_pgm


@dataclass(frozen=True)
class AnomalyResult:
    image_id: str
    raw_map: np.ndarray
    full_map: np.ndarray
    image_score: float


def gaussian_kernel(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ConfigError(f"blur sigma must be > 0, got {sigma}")
    radius = int(np.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D map with reflect boundary."""
    if sigma == 0:
        return values.copy()
    k = gaussian_kernel(sigma)
    radius = k.size // 2

    def _conv_rows(arr: np.ndarray) -> np.ndarray:
        padded = np.pad(arr, ((0, 0), (radius, radius)), mode="symmetric")
        out = np.zeros_like(arr, dtype=np.float64)
        for t in range(k.size):
            out += k[t] * padded[:, t : t + arr.shape[1]]
        return out

    blurred = _conv_rows(values.astype(np.float64, copy=False))
    return _conv_rows(blurred.T).T


def postprocess(raw_map: np.ndarray, input_size: tuple[int, int], sigma: float,
                image_id: str = "") -> AnomalyResult:
    """Upsample to ``input_size``, smooth, and take the max as image score."""
    if raw_map.ndim != 2:
        raise ConfigError("raw map must be 2-D")
    h, w = input_size
    if h < raw_map.shape[0] or w < raw_map.shape[1]:
        raise ConfigError(
            f"input size {input_size} smaller than the raw map {raw_map.shape}"
        )
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    up = bilinear_resize(raw_map[None, :, :], (h, w))[0]
    full = gaussian_blur(up, sigma)
    return AnomalyResult(
        image_id=image_id,
        raw_map=raw_map,
        full_map=full,
        image_score=float(full.max()),
    )


def export_heatmap(result: AnomalyResult, path: str | Path,
                   normalization: str = "per-image",
                   fixed_range: tuple[float, float] | None = None) -> None:
    """Write the full-resolution map as 16-bit PGM.

    ``per-image`` maps [min, max] to [0, 65535]; ``fixed-range`` uses the
    caller-supplied bounds.  A degenerate range exports all zeros.
    """
    if normalization == "per-image":
        lo, hi = float(result.full_map.min()), float(result.full_map.max())
    elif normalization == "fixed-range":
        if fixed_range is None:
            raise ConfigError("fixed-range normalization needs fixed_range bounds")
        lo, hi = float(fixed_range[0]), float(fixed_range[1])
    else:
        raise ConfigError(f"unknown normalization {normalization!r}")
    if hi <= lo:
        quantized = np.zeros(result.full_map.shape, dtype=np.uint16)
    else:
        scaled = (result.full_map - lo) / (hi - lo) * 65535.0
        quantized = np.clip(np.rint(scaled), 0, 65535).astype(np.uint16)
    write_pgm(quantized, path, maxval=65535)
