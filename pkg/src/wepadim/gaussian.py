"""Per-location multivariate Gaussian model of normality.

Training streams one embedding at a time into a ``MomentAccumulator`` (count,
per-location sums, packed upper-triangle outer-product sums); ``finalize``
turns the moments into means and Cholesky factors of the regularized
covariance ``C + eps*I`` with the unbiased N-1 divisor.  Scoring solves the
triangular systems per location, returning squared Mahalanobis distances.

Accumulators over disjoint image sets merge by field addition.  Merging
per-image accumulators in image order reproduces sequential accumulation
bit-for-bit, which is what makes threaded fits reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .config import WaveletConfig
from .embed import EmbeddingMap, channel_layout
from .errors import (
    InsufficientDataError,
    ModelCompatibilityError,
    NumericalError,
    ShapeError,
)
from .tensorio import read_tensor, write_tensor

MODEL_FORMAT_VERSION = 1


def _packed_size(dim: int) -> int:
    return dim * (dim + 1) // 2


class MomentAccumulator:
    """Streaming first/second moments over per-location embedding vectors."""

    def __init__(self, grid: tuple[int, int], dim: int):
        self.grid = (int(grid[0]), int(grid[1]))
        self.dim = int(dim)
        locs = self.grid[0] * self.grid[1]
        self.count = 0
        self.sum = np.zeros((locs, self.dim), dtype=np.float64)
        self.outer_packed = np.zeros((locs, _packed_size(self.dim)), dtype=np.float64)

    def update(self, embedding: EmbeddingMap) -> "MomentAccumulator":
        if embedding.target_size != self.grid or embedding.dim != self.dim:
            raise ShapeError(
                f"embedding grid {embedding.target_size} x dim {embedding.dim} does "
                f"not match accumulator grid {self.grid} x dim {self.dim}"
            )
        kernels.accumulate_moments(self.sum, self.outer_packed,
                                   embedding.locations())
        self.count += 1
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Fold another accumulator (disjoint image set) into this one."""
        if other.grid != self.grid or other.dim != self.dim:
            raise ShapeError("cannot merge accumulators of different geometry")
        self.count += other.count
        self.sum += other.sum
        self.outer_packed += other.outer_packed
        return self


def _unpack_symmetric(packed: np.ndarray, dim: int) -> np.ndarray:
    """(locs, dim*(dim+1)//2) row-major upper triangles -> (locs, dim, dim)."""
    locs = packed.shape[0]
    iu0, iu1 = np.triu_indices(dim)
    full = np.zeros((locs, dim, dim), dtype=np.float64)
    full[:, iu0, iu1] = packed
    full[:, iu1, iu0] = packed
    return full


@dataclass(frozen=True)
class PatchGaussianModel:
    """Finalized per-location Gaussian statistics plus provenance.

    ``channel_layout`` is the layout the model was fitted on; for wavelet
    embeddings it equals the layout derived from (layers, subbands), which is
    what ``load_model`` re-derives and verifies.  Models fitted on other
    embeddings (e.g. the random-selection baseline) carry their own layout
    and score normally in memory, but are not round-trippable through the
    bundle format.
    """

    config: WaveletConfig
    layer_channels: tuple[tuple[str, int], ...]
    grid: tuple[int, int]
    means: np.ndarray          # (locs, dim)
    chol: np.ndarray           # (locs, dim, dim) lower triangular
    epsilon: float
    sample_count: int
    channel_layout: tuple = ()

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def derived_layout(self):
        """Layout the current code derives from the stored configuration."""
        names = [n for n, _ in self.layer_channels]
        counts = [c for _, c in self.layer_channels]
        return channel_layout(names, counts, self.config.subbands)

    def layout_hash(self) -> str:
        return hash_layout(self.channel_layout)


def hash_layout(layout) -> str:
    blob = json.dumps([list(t) for t in layout], separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def finalize(acc: MomentAccumulator, epsilon: float,
             config: WaveletConfig | None = None,
             layer_channels=(), channel_layout_override=None) -> PatchGaussianModel:
    """Means + Cholesky factors of ``C + eps*I`` from accumulated moments.

    The model's channel layout defaults to the wavelet layout derived from
    (layer_channels, config.subbands); pass ``channel_layout_override`` when
    fitting on a differently-structured embedding.
    """
    if acc.count < 2:
        raise InsufficientDataError(
            f"need at least 2 samples for the covariance, got {acc.count}"
        )
    if epsilon < 0:
        raise NumericalError(f"epsilon must be >= 0, got {epsilon}")
    n = float(acc.count)
    means = acc.sum / n
    outer = _unpack_symmetric(acc.outer_packed, acc.dim)
    # C = (sum f f^T - N mu mu^T) / (N-1); mu mu^T is exactly symmetric
    cov = (outer - n * means[:, :, None] * means[:, None, :]) / (n - 1.0)
    sigma = cov + epsilon * np.eye(acc.dim)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        bad = _first_failing_location(sigma, acc.grid)
        raise NumericalError(
            f"covariance not positive definite at grid location {bad} "
            f"(epsilon={epsilon}); increase the regularization"
        ) from None
    resolved_config = config if config is not None else WaveletConfig()
    if channel_layout_override is not None:
        layout = tuple(channel_layout_override)
    else:
        names = [n for n, _ in layer_channels]
        counts = [c for _, c in layer_channels]
        layout = channel_layout(names, counts, resolved_config.subbands)
    return PatchGaussianModel(
        config=resolved_config,
        layer_channels=tuple(layer_channels),
        grid=acc.grid,
        means=means,
        chol=chol,
        epsilon=float(epsilon),
        sample_count=acc.count,
        channel_layout=layout,
    )


def _first_failing_location(sigma: np.ndarray, grid: tuple[int, int]):
    for p in range(sigma.shape[0]):
        try:
            np.linalg.cholesky(sigma[p])
        except np.linalg.LinAlgError:
            return (p // grid[1], p % grid[1])
    return None


def mahalanobis_map(model: PatchGaussianModel, embedding: EmbeddingMap) -> np.ndarray:
    """Squared Mahalanobis distance of each location to the learned Gaussian."""
    if embedding.target_size != model.grid:
        raise ModelCompatibilityError(
            f"embedding grid {embedding.target_size} does not match model grid "
            f"{model.grid}"
        )
    if embedding.channel_layout != model.channel_layout:
        raise ModelCompatibilityError(
            "embedding channel layout does not match the model; check wavelet "
            "family, level, subbands, and layer selection"
        )
    delta = embedding.locations() - model.means
    scores = kernels.mahalanobis_sq(model.chol, delta)
    return scores.reshape(model.grid)


def save_model(model: PatchGaussianModel, bundle_dir: str | Path) -> None:
    """Write means.npy, chol.npy and model.json into ``bundle_dir``."""
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    write_tensor(model.means, bundle / "means.npy")
    write_tensor(model.chol, bundle / "chol.npy")
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_json_dict(),
        "layer_channels": [[n, c] for n, c in model.layer_channels],
        "grid": list(model.grid),
        "d_w": model.dim,
        "epsilon": model.epsilon,
        "sample_count": model.sample_count,
        "channel_layout_hash": model.layout_hash(),
    }
    (bundle / "model.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8"
    )


def load_model(bundle_dir: str | Path) -> PatchGaussianModel:
    """Load a model bundle, verifying layout compatibility with current code."""
    bundle = Path(bundle_dir)
    try:
        doc = json.loads((bundle / "model.json").read_text("utf-8"))
    except OSError as exc:
        raise ModelCompatibilityError(f"cannot read model bundle: {exc}") from exc
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelCompatibilityError(
            f"model format version {doc.get('format_version')} != "
            f"{MODEL_FORMAT_VERSION}"
        )
    config = WaveletConfig.from_json_dict(doc["config"])
    layer_channels = tuple((str(n), int(c)) for n, c in doc["layer_channels"])
    names = [n for n, _ in layer_channels]
    counts = [c for _, c in layer_channels]
    model = PatchGaussianModel(
        config=config,
        layer_channels=layer_channels,
        grid=(int(doc["grid"][0]), int(doc["grid"][1])),
        means=read_tensor(bundle / "means.npy"),
        chol=read_tensor(bundle / "chol.npy"),
        epsilon=float(doc["epsilon"]),
        sample_count=int(doc["sample_count"]),
        channel_layout=channel_layout(names, counts, config.subbands),
    )
    locs = model.grid[0] * model.grid[1]
    if model.means.shape != (locs, doc["d_w"]) or model.chol.shape != (
        locs,
        doc["d_w"],
        doc["d_w"],
    ):
        raise ModelCompatibilityError(
            f"payload shapes {model.means.shape}/{model.chol.shape} inconsistent "
            f"with declared d_w={doc['d_w']}, grid={model.grid}"
        )
    if model.layout_hash() != doc["channel_layout_hash"]:
        raise ModelCompatibilityError(
            "stored channel layout hash does not match the layout this code "
            "derives from the stored configuration"
        )
    return model
