"""End-to-end glue: manifests -> embeddings -> model -> anomaly results.

Parallelism contract: worker threads only ever compute pure per-image values
(embeddings, score maps); everything order-sensitive (moment accumulation,
CSV rows) is folded in manifest order on the caller's thread.  Outputs are
therefore bitwise independent of the thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

from .config import WaveletConfig
from .dwt import filter_bank
from .embed import EmbeddingMap, build_embedding
from .errors import InsufficientDataError, ManifestError
from .gaussian import (
    MomentAccumulator,
    PatchGaussianModel,
    finalize,
    mahalanobis_map,
)
from .scoring import AnomalyResult, postprocess
from .tensorio import CorpusManifest, FeatureStack, load_feature_stack

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Sequence[T], threads: int) -> Iterator[R]:
    """Apply ``fn`` across ``items``, yielding results in input order.

    With ``threads > 1`` evaluation overlaps but the yield order (and thus any
    fold over the results) is unchanged.
    """
    if threads <= 1 or len(items) <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, items)


def stack_for_entry(manifest: CorpusManifest, image_id: str,
                    config: WaveletConfig) -> FeatureStack:
    stack = load_feature_stack(manifest, image_id)
    if config.layers:
        stack = stack.select(config.layers)
    return stack


def embedding_for_entry(manifest: CorpusManifest, image_id: str,
                        config: WaveletConfig) -> EmbeddingMap:
    stack = stack_for_entry(manifest, image_id, config)
    family = filter_bank(config.family)
    return build_embedding(stack, family, config.level, config.subbands)


def resolve_layers(manifest: CorpusManifest, config: WaveletConfig) -> WaveletConfig:
    """Pin ``config.layers`` to the manifest's layers when left empty."""
    if config.layers:
        missing = [l for l in config.layers if l not in manifest.layers]
        if missing:
            raise ManifestError(f"manifest lacks configured layers {missing}")
        return config
    return config.replace(layers=manifest.layers)


def accumulate_manifest(manifest: CorpusManifest, config: WaveletConfig,
                        threads: int = 1) -> tuple[MomentAccumulator, tuple]:
    """Stream all entries of a manifest into a fresh accumulator.

    Returns the accumulator and the (layer, channels) pairs actually used.
    """
    if not manifest.entries:
        raise InsufficientDataError("manifest has no entries to fit on")
    ids = [e.image_id for e in manifest.entries]
    first = stack_for_entry(manifest, ids[0], config)
    layer_channels = tuple(zip(first.layer_names, first.channel_counts))

    family = filter_bank(config.family)

    def embed_one(image_id: str) -> EmbeddingMap:
        stack = stack_for_entry(manifest, image_id, config)
        return build_embedding(stack, family, config.level, config.subbands)

    acc: MomentAccumulator | None = None
    for emb in map_ordered(embed_one, ids, threads):
        if acc is None:
            acc = MomentAccumulator(emb.target_size, emb.dim)
        acc.update(emb)
    assert acc is not None
    return acc, layer_channels


@dataclass(frozen=True)
class FitOutcome:
    model: PatchGaussianModel
    seconds: float


def fit_model(manifest: CorpusManifest, config: WaveletConfig,
              threads: int = 1) -> FitOutcome:
    """Fit the per-location Gaussian model on a (normal-only) train manifest."""
    if manifest.split != "train":
        raise ManifestError(f"fit expects the train split, got {manifest.split!r}")
    config = resolve_layers(manifest, config)
    t0 = time.perf_counter()
    acc, layer_channels = accumulate_manifest(manifest, config, threads)
    model = finalize(acc, config.cov_reg, config=config, layer_channels=layer_channels)
    return FitOutcome(model=model, seconds=time.perf_counter() - t0)


def score_entry(manifest: CorpusManifest, image_id: str,
                model: PatchGaussianModel,
                sigma: float | None = None) -> AnomalyResult:
    """Raw Mahalanobis map + post-processing for one test image."""
    emb = embedding_for_entry(manifest, image_id, model.config)
    raw = mahalanobis_map(model, emb)
    use_sigma = model.config.sigma if sigma is None else sigma
    return postprocess(raw, manifest.input_size, use_sigma, image_id=image_id)


def score_manifest(manifest: CorpusManifest, model: PatchGaussianModel,
                   threads: int = 1,
                   sigma: float | None = None) -> list[AnomalyResult]:
    """Score every entry of a manifest, in manifest order."""
    ids = [e.image_id for e in manifest.entries]

    def one(image_id: str) -> AnomalyResult:
        return score_entry(manifest, image_id, model, sigma=sigma)

    return list(map_ordered(one, ids, threads))


def load_mask(manifest: CorpusManifest, image_id: str) -> np.ndarray:
    """Binary ground-truth mask for an entry; all-zero for normal entries."""
    from .pgm import read_pgm

    entry = manifest.entry(image_id)
    if entry.mask is None:
        return np.zeros(manifest.input_size, dtype=bool)
    values, _ = read_pgm(manifest.corpus_root / entry.mask)
    if values.shape != manifest.input_size:
        raise ManifestError(
            f"{image_id}: mask shape {values.shape} != input size "
            f"{manifest.input_size}"
        )
    return values > 0
