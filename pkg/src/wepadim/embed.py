"""Wavelet-subband embeddings and the random-selection baseline.

``build_embedding`` turns a multi-layer feature stack into one channel-major
map: per-layer DWT, selection of the final-level subbands named in the
subband set, per-layer channel concatenation, bilinear alignment to the
earliest layer's post-DWT size, and cross-layer concatenation.  The channel
dimension is exactly ``|S| * sum(C_l)`` and the channel ordering is a frozen
function of (layer order, subband order, channel index) so that serialized
models remain compatible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dwt import WaveletFamily, dwt2d
from .errors import ConfigError
from .rng import shuffle_prefix
from .tensorio import FeatureStack

# channel-layout order; display strings sort alphabetically instead
SUBBAND_ORDER = ("LL", "LH", "HL", "HH")


@dataclass(frozen=True)
class SubbandSet:
    """Non-empty subset of {LL, LH, HL, HH} with canonical orderings."""

    members: frozenset[str]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("subband set must not be empty")
        bad = self.members - set(SUBBAND_ORDER)
        if bad:
            raise ConfigError(f"unknown subbands {sorted(bad)}; valid: {SUBBAND_ORDER}")

    @classmethod
    def of(cls, *names: str) -> "SubbandSet":
        return cls(frozenset(names))

    @classmethod
    def parse(cls, text: str) -> "SubbandSet":
        """Parse an underscore-joined set, e.g. ``HL_LH_LL``."""
        return cls(frozenset(p for p in text.split("_") if p))

    @property
    def ordered(self) -> tuple[str, ...]:
        """Channel-layout order: LL, LH, HL, HH."""
        return tuple(s for s in SUBBAND_ORDER if s in self.members)

    @property
    def key(self) -> str:
        """Canonical display/CSV key: alphabetical, underscore-joined."""
        return "_".join(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, name: str) -> bool:
        return name in self.members


def all_subband_sets() -> list[SubbandSet]:
    """All 15 non-empty subband combinations, ordered by canonical key."""
    out = []
    for mask in range(1, 16):
        names = [s for i, s in enumerate(SUBBAND_ORDER) if mask >> i & 1]
        out.append(SubbandSet.of(*names))
    return sorted(out, key=lambda s: s.key)


@dataclass(frozen=True)
class EmbeddingMap:
    """Final feature tensor ``(dim, H', W')`` with its channel provenance."""

    data: np.ndarray
    channel_layout: tuple[tuple[str, str, int], ...]
    target_size: tuple[int, int]

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def locations(self) -> np.ndarray:
        """View as ``(H'*W', dim)`` rows, one per spatial location."""
        c, h, w = self.data.shape
        return np.ascontiguousarray(self.data.reshape(c, h * w).T)


def channel_layout(layer_names, channel_counts, subbands: SubbandSet):
    """Frozen channel ordering: layers outer, subbands in layout order, then
    original channel index."""
    layout = []
    for name, count in zip(layer_names, channel_counts):
        for sb in subbands.ordered:
            for c in range(count):
                layout.append((name, sb, c))
    return tuple(layout)


def bilinear_resize(x: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Channel-wise bilinear resize with the half-pixel-center convention.

    Source coordinate = (dst + 0.5) * (src / dst) - 0.5, clamped; identity
    (bit-exact copy) when the size already matches.
    """
    if x.ndim != 3:
        raise ConfigError(f"bilinear_resize expects rank 3, got {x.ndim}")
    _, h, w = x.shape
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ConfigError(f"target size must be positive, got {target}")
    if (h, w) == (th, tw):
        return x.copy()

    def _axis_coords(src: int, dst: int):
        coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
        coords = np.clip(coords, 0.0, src - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        frac = coords - lo
        return lo, hi, frac

    y0, y1, fy = _axis_coords(h, th)
    x0, x1, fx = _axis_coords(w, tw)

    top = x[:, y0, :][:, :, x0] * (1 - fx) + x[:, y0, :][:, :, x1] * fx
    bot = x[:, y1, :][:, :, x0] * (1 - fx) + x[:, y1, :][:, :, x1] * fx
    fy = fy[None, :, None]
    return top * (1 - fy) + bot * fy


def build_embedding(stack: FeatureStack, family: WaveletFamily, level: int,
                    subbands: SubbandSet) -> EmbeddingMap:
    """Wavelet-subband embedding of one feature stack.

    The target grid is the post-DWT size of the first (largest) layer; detail
    bands come from the final level alongside its LL, so every selected
    subband of a layer shares one spatial size.
    """
    per_layer = []
    target = None
    for name, arr in stack.layers:
        pyr = dwt2d(arr, family, level)
        bands = {"LL": pyr.ll}
        bands["LH"], bands["HL"], bands["HH"] = pyr.details[-1]
        sel = np.concatenate([bands[s] for s in subbands.ordered], axis=0)
        if target is None:
            target = (sel.shape[1], sel.shape[2])
        per_layer.append(bilinear_resize(sel, target))
    data = np.ascontiguousarray(np.concatenate(per_layer, axis=0))
    layout = channel_layout(stack.layer_names, stack.channel_counts, subbands)
    return EmbeddingMap(data=data, channel_layout=layout, target_size=target)


@dataclass(frozen=True)
class RandomSelection:
    """Reproducible random channel subset for the selection baseline."""

    seed: int
    dims: int
    indices: tuple[int, ...]

    @classmethod
    def make(cls, seed: int, dims: int, total_channels: int) -> "RandomSelection":
        if not 1 <= dims <= total_channels:
            raise ConfigError(
                f"selection size {dims} out of range [1, {total_channels}]"
            )
        picked = sorted(shuffle_prefix(seed, total_channels, dims))
        return cls(seed=seed, dims=dims, indices=tuple(picked))


def random_baseline_embedding(stack: FeatureStack,
                              selection: RandomSelection) -> EmbeddingMap:
    """Raw-feature baseline: align layers to the earliest layer's (pre-DWT)
    size, concatenate, then gather the selected channels."""
    total = sum(stack.channel_counts)
    if selection.indices and selection.indices[-1] >= total:
        raise ConfigError(
            f"selection index {selection.indices[-1]} out of range for "
            f"{total} channels"
        )
    target = stack.layers[0][1].shape[1:]
    aligned = [bilinear_resize(arr, target) for _, arr in stack.layers]
    data = np.concatenate(aligned, axis=0)[list(selection.indices)]
    flat_layout = []
    for name, arr in stack.layers:
        for c in range(arr.shape[0]):
            flat_layout.append((name, "RAW", c))
    layout = tuple(flat_layout[i] for i in selection.indices)
    return EmbeddingMap(data=np.ascontiguousarray(data), channel_layout=layout,
                        target_size=target)
