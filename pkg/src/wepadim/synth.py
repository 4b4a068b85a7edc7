"""Synthetic corpora with exact ground truth, and a frozen random feature
pyramid standing in for a CNN backbone.

Everything is a pure function of the seeds: images come from per-image
xoshiro streams derived from the corpus seed, extractor kernels from the
extractor seed.  Anomalies are injected with exactly-bounded support so the
written mask delimits precisely the pixels that differ from the paired clean
field; the low-frequency kind is a truncated Gaussian bump, the
high-frequency kind is salt noise confined to a square patch.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SizeError
from .pgm import write_pgm
from .rng import XoshiroStream, derive
from .tensorio import CorpusManifest, FeatureStack, ManifestEntry, save_manifest, write_tensor

TEXTURES = ("smooth-noise", "stripes")
ANOMALY_KINDS = ("lowfreq-blob", "highfreq-speckle")

# stream tags (documented derivation: derive(seed, tag, image_index))
_T_TRAIN, _T_TEST_NORMAL, _T_TEST_ANOM, _T_DEFECT, _T_CORPUS, _T_STAGE = range(1, 7)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic corpus."""

    seed: int = 0
    image_size: tuple[int, int] = (224, 224)
    n_train: int = 60
    n_test_normal: int = 20
    n_test_anomalous: int = 20
    texture: str = "smooth-noise"
    anomaly_kind: str = "lowfreq-blob"
    anomaly_magnitude: float = 4.0  # in units of the unit-variance texture
    blob_sigma: float = 20.0
    speckle_patch: int = 16
    texture_smoothing: float = 4.0
    texture_grain: float = 0.35  # broadband component of smooth-noise
    class_name: str = "synthetic"

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ConfigError(f"unknown texture {self.texture!r}; valid: {TEXTURES}")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ConfigError(
                f"unknown anomaly kind {self.anomaly_kind!r}; valid: {ANOMALY_KINDS}"
            )
        if self.n_train < 1:
            raise ConfigError("need at least one training image")
        if self.anomaly_magnitude <= 0:
            raise ConfigError("anomaly magnitude must be > 0")


@dataclass(frozen=True)
class PyramidExtractor:
    """Fixed random strided-patch convolutions with ReLU, one per stage.

    Stage strides are the ratios of consecutive downsample factors; kernels
    cover exactly one stride window, so a stage cell's receptive field is the
    ``factor x factor`` input block under it (no overlap).  Kernel weights are
    uniform(-a, a) with a = sqrt(1 / fan_in), drawn once from the seed.
    """

    seed: int = 0
    stages: tuple[tuple[int, int], ...] = ((64, 4), (128, 8), (256, 16))

    def __post_init__(self):
        prev = 1
        for out_ch, factor in self.stages:
            if factor % prev != 0 or factor // prev < 1:
                raise ConfigError(
                    f"stage factors must be increasing multiples, got {self.stages}"
                )
            prev = factor

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(f"layer{i + 1}" for i in range(len(self.stages)))

    def stage_weights(self, stage_idx: int, in_channels: int) -> np.ndarray:
        out_ch, factor = self.stages[stage_idx]
        prev_factor = self.stages[stage_idx - 1][1] if stage_idx else 1
        stride = factor // prev_factor
        fan_in = in_channels * stride * stride
        stream = XoshiroStream(derive(self.seed, _T_STAGE, stage_idx))
        a = float(np.sqrt(1.0 / fan_in))
        w = stream.uniform(out_ch * fan_in) * (2.0 * a) - a
        return w.reshape(out_ch, fan_in)


def _patchify(x: np.ndarray, stride: int) -> np.ndarray:
    """(C, H, W) -> (H/s * W/s, C*s*s) rows of non-overlapping patches."""
    c, h, w = x.shape
    view = x.reshape(c, h // stride, stride, w // stride, stride)
    return (
        view.transpose(1, 3, 0, 2, 4).reshape((h // stride) * (w // stride), c * stride * stride)
    )


def extract_pyramid(image: np.ndarray, extractor: PyramidExtractor,
                    image_id: str = "") -> FeatureStack:
    """Run the fixed pyramid over a ``1 x H x W`` image."""
    if image.ndim != 3 or image.shape[0] != 1:
        raise ConfigError(f"extractor expects a 1 x H x W image, got {image.shape}")
    h, w = image.shape[1:]
    largest = extractor.stages[-1][1]
    if h % largest or w % largest:
        raise SizeError(
            f"image size {h}x{w} not divisible by the largest downsample "
            f"factor {largest}"
        )
    layers = []
    cur = np.ascontiguousarray(image, dtype=np.float64)
    prev_factor = 1
    for i, (out_ch, factor) in enumerate(extractor.stages):
        stride = factor // prev_factor
        weights = extractor.stage_weights(i, cur.shape[0])
        rows = _patchify(cur, stride)
        feat = rows @ weights.T
        gh, gw = cur.shape[1] // stride, cur.shape[2] // stride
        cur = np.maximum(feat.T.reshape(out_ch, gh, gw), 0.0)
        layers.append((extractor.layer_names[i], cur))
        prev_factor = factor
    return FeatureStack(image_id=image_id, input_size=(h, w), layers=tuple(layers))


def _smooth_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / np.sqrt((k * k).sum())  # L2 norm: blurred white noise keeps unit variance


def _texture_field(spec: SynthSpec, stream: XoshiroStream) -> np.ndarray:
    h, w = spec.image_size
    if spec.texture == "smooth-noise":
        noise = stream.normal(h * w).reshape(h, w)
        k = _smooth_kernel(spec.texture_smoothing)
        r = k.size // 2
        padded = np.pad(noise, r, mode="wrap")
        rowpass = np.zeros((h + 2 * r, w), dtype=np.float64)
        for t in range(k.size):
            rowpass += k[t] * padded[:, t : t + w]
        out = np.zeros((h, w), dtype=np.float64)
        for t in range(k.size):
            out += k[t] * rowpass[t : t + h, :]
        if spec.texture_grain:
            out += spec.texture_grain * stream.normal(h * w).reshape(h, w)
        return out
    # stripes: corpus-fixed orientation and period, per-image phase + noise
    corpus = XoshiroStream(derive(spec.seed, _T_CORPUS))
    theta = float(corpus.uniform(1)[0]) * np.pi
    period = 8.0 + float(corpus.uniform(1)[0]) * 8.0
    phase = float(stream.uniform(1)[0]) * (2.0 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    carrier = np.sin(
        (2.0 * np.pi / period) * (np.cos(theta) * xx + np.sin(theta) * yy) + phase
    )
    return carrier + 0.25 * stream.normal(h * w).reshape(h, w)


def _inject_anomaly(field: np.ndarray, spec: SynthSpec, stream: XoshiroStream):
    """Returns (defected field, uint8 mask).  Support is exactly the mask."""
    h, w = field.shape
    mask = np.zeros((h, w), dtype=np.uint8)
    out = field.copy()
    if spec.anomaly_kind == "lowfreq-blob":
        # 3-sigma support: the cut edge is ~1% of the peak, keeping the
        # defect genuinely low-frequency while the mask stays exact
        radius = max(2, int(round(3.0 * spec.blob_sigma)))
        cy = _pick_center(stream, h, radius)
        cx = _pick_center(stream, w, radius)
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        r2 = (yy - cy) ** 2 + (xx - cx) ** 2
        support = r2 <= radius * radius
        bump = spec.anomaly_magnitude * np.exp(-0.5 * r2 / spec.blob_sigma**2)
        out[support] += bump[support]
        mask[support] = 255
    else:  # highfreq-speckle
        patch = min(spec.speckle_patch, h, w)
        top = int(stream.raw(1)[0] % np.uint64(max(1, h - patch + 1)))
        left = int(stream.raw(1)[0] % np.uint64(max(1, w - patch + 1)))
        signs = np.where(
            stream.uniform(patch * patch).reshape(patch, patch) < 0.5, -1.0, 1.0
        )
        out[top : top + patch, left : left + patch] += spec.anomaly_magnitude * signs
        mask[top : top + patch, left : left + patch] = 255
    return out, mask


def _pick_center(stream: XoshiroStream, extent: int, radius: int) -> int:
    lo, hi = radius, extent - radius
    if hi <= lo:
        return extent // 2
    return lo + int(stream.raw(1)[0] % np.uint64(hi - lo))


def make_image(spec: SynthSpec, split_tag: int, index: int):
    """Deterministically build one image: (field, mask or None)."""
    stream = XoshiroStream(derive(spec.seed, split_tag, index))
    field = _texture_field(spec, stream)
    if split_tag == _T_TEST_ANOM:
        defect_stream = XoshiroStream(derive(spec.seed, _T_DEFECT, index))
        return _inject_anomaly(field, spec, defect_stream)
    return field, None


def generate_corpus(spec: SynthSpec, out_dir: str | Path,
                    extractor: PyramidExtractor | None = None):
    """Write train and test splits under ``out_dir``; returns both manifests.

    Layout: ``<split>/manifest.json``, features under ``<split>/features/``,
    raw image fields under ``<split>/images/``, masks under ``<split>/masks/``.
    """
    if extractor is None:
        extractor = PyramidExtractor(seed=spec.seed)
    out = Path(out_dir)
    manifests = []
    plans = [
        ("train", [(_T_TRAIN, i, "normal") for i in range(spec.n_train)]),
        (
            "test",
            [(_T_TEST_NORMAL, i, "normal") for i in range(spec.n_test_normal)]
            + [(_T_TEST_ANOM, i, "anomalous") for i in range(spec.n_test_anomalous)],
        ),
    ]
    for split, plan in plans:
        split_dir = out / split
        (split_dir / "features").mkdir(parents=True, exist_ok=True)
        (split_dir / "images").mkdir(exist_ok=True)
        (split_dir / "masks").mkdir(exist_ok=True)
        entries = []
        for tag, idx, label in plan:
            image_id = {
                _T_TRAIN: f"train_{idx:04d}",
                _T_TEST_NORMAL: f"normal_{idx:04d}",
                _T_TEST_ANOM: f"anomalous_{idx:04d}",
            }[tag]
            field, mask = make_image(spec, tag, idx)
            stack = extract_pyramid(field[None, :, :], extractor, image_id)
            files = {}
            for name, arr in stack.layers:
                rel = f"features/{image_id}.{name}.npy"
                write_tensor(arr, split_dir / rel)
                files[name] = rel
            write_tensor(field[None, :, :], split_dir / f"images/{image_id}.npy")
            mask_rel = None
            if mask is not None:
                mask_rel = f"masks/{image_id}.pgm"
                write_pgm(mask, split_dir / mask_rel, maxval=255)
            entries.append(
                ManifestEntry(image_id=image_id, files=files, label=label, mask=mask_rel)
            )
        manifest = CorpusManifest(
            corpus_root=split_dir,
            class_name=spec.class_name,
            split=split,
            input_size=spec.image_size,
            layers=extractor.layer_names,
            entries=entries,
        )
        save_manifest(manifest, split_dir / "manifest.json")
        manifests.append(manifest)
    return manifests[0], manifests[1]
