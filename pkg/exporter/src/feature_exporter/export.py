"""Frozen-backbone feature extraction for MVTec-style image folders.

Input layout (one class directory):

    <class>/train/good/*.png
    <class>/test/<defect-or-good>/*.png
    <class>/ground_truth/<defect>/<stem>_mask.png

Each image is resized to 256x256, center-cropped to 224x224, normalized with
the standard ImageNet statistics, and passed through a frozen backbone in
eval mode.  Feature maps tapped at the selected layers are written as
float32 NPY files (one per layer) alongside a manifest.json; ground-truth
masks are resized/cropped the same way (nearest neighbor) and written as
8-bit binary PGM with any nonzero source pixel mapped to 255.

The output corpus follows the anomaly-engine interchange contract exactly:
NPY v1.0 little-endian C-order tensors, layers ordered largest first, train
split normal-only, masks required for anomalous test entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

RESNET_LAYERS = ("layer1", "layer2", "layer3")
EFFICIENTNET_INDICES = (3, 4, 5, 6)

_EFFICIENTNET_BUILDERS = {
    f"efficientnet-b{i}": getattr(models, f"efficientnet_b{i}") for i in range(7)
}

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    backbone: str = "resnet18"
    layers: tuple[str, ...] = ()   # empty: backbone defaults
    input_dir: Path = Path(".")
    output_dir: Path = Path("export")
    pretrained: bool = True
    seed: int = 0                  # random-init weights (offline fallback)
    batch_size: int = 8
    device: str = "cpu"
    class_name: str = field(default="", repr=False)

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output_dir = Path(self.output_dir)
        if not self.class_name:
            self.class_name = self.input_dir.name or "unknown"
        if self.backbone != "resnet18" and self.backbone not in _EFFICIENTNET_BUILDERS:
            raise ExportError(
                f"unknown backbone {self.backbone!r}; supported: resnet18, "
                + ", ".join(sorted(_EFFICIENTNET_BUILDERS))
            )
        if not self.layers:
            self.layers = (
                RESNET_LAYERS if self.backbone == "resnet18"
                else tuple(f"features.{i}" for i in EFFICIENTNET_INDICES)
            )


def build_backbone(job: ExportJob) -> torch.nn.Module:
    """Frozen eval-mode backbone; pretrained weights or seeded random init."""
    weights = None
    if job.pretrained:
        if job.backbone == "resnet18":
            weights = models.ResNet18_Weights.IMAGENET1K_V1
        else:
            enum_name = job.backbone.replace("-b", "_B").replace("efficientnet",
                                                                 "EfficientNet")
            weights = getattr(models, f"{enum_name}_Weights").IMAGENET1K_V1
    torch.manual_seed(job.seed)
    try:
        if job.backbone == "resnet18":
            net = models.resnet18(weights=weights)
        else:
            net = _EFFICIENTNET_BUILDERS[job.backbone](weights=weights)
    except Exception as exc:  # weight download failure
        raise ExportError(
            f"could not obtain weights for {job.backbone}: {exc}; "
            f"use --weights random for an offline run"
        ) from exc
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net.to(job.device)


def _tap_modules(net: torch.nn.Module, layer_names) -> dict[str, torch.nn.Module]:
    taps = {}
    named = dict(net.named_modules())
    for name in layer_names:
        if name not in named:
            raise ExportError(f"backbone has no module named {name!r}")
        taps[name] = named[name]
    return taps


def preprocess_image(path: Path) -> torch.Tensor:
    """Resize 256, center-crop 224, ImageNet-normalize; returns (3, 224, 224)."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((256, 256), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = arr[16:240, 16:240, :]  # center crop 224
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def preprocess_mask(path: Path) -> np.ndarray:
    """Same geometry as the image path, nearest-neighbor; nonzero -> 255."""
    with Image.open(path) as img:
        gray = img.convert("L").resize((256, 256), Image.NEAREST)
    arr = np.asarray(gray)[16:240, 16:240]
    return np.where(arr > 0, 255, 0).astype(np.uint8)


def write_npy_f32(array: np.ndarray, path: Path) -> None:
    """Minimal NPY v1.0 writer pinned to the interchange byte layout."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': %s, }" % (
        repr(arr.shape),
    )
    pad = (-(10 + len(header) + 1)) % 64
    blob = header.encode("latin1") + b" " * pad + b"\n"
    with open(path, "wb") as fh:
        fh.write(b"\x93NUMPY\x01\x00")
        fh.write(len(blob).to_bytes(2, "little"))
        fh.write(blob)
        fh.write(arr.tobytes())


def write_pgm_mask(mask: np.ndarray, path: Path) -> None:
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(mask.astype(np.uint8).tobytes())


def _list_images(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def _collect_entries(job: ExportJob):
    """(split, image_id, image_path, label, mask_path or None) tuples."""
    entries = []
    train_good = job.input_dir / "train" / "good"
    if not train_good.is_dir():
        raise ExportError(f"{job.input_dir}: expected train/good/ images")
    for path in _list_images(train_good):
        entries.append(("train", f"train_good_{path.stem}", path, "normal", None))
    test_root = job.input_dir / "test"
    if test_root.is_dir():
        for defect_dir in sorted(p for p in test_root.iterdir() if p.is_dir()):
            defect = defect_dir.name
            for path in _list_images(defect_dir):
                image_id = f"test_{defect}_{path.stem}"
                if defect == "good":
                    entries.append(("test", image_id, path, "normal", None))
                else:
                    mask = (job.input_dir / "ground_truth" / defect
                            / f"{path.stem}_mask.png")
                    if not mask.is_file():
                        raise ExportError(f"missing ground-truth mask {mask}")
                    entries.append(("test", image_id, path, "anomalous", mask))
    return entries


def export_corpus(job: ExportJob) -> dict[str, Path]:
    """Run the export; returns {split: manifest path}.

    Deterministic in eval mode: re-running writes byte-identical files.
    """
    net = build_backbone(job)
    taps = _tap_modules(net, job.layers)
    captured: dict[str, torch.Tensor] = {}

    def _hook(name):
        def fn(_module, _inputs, output):
            captured[name] = output.detach()
        return fn

    handles = [mod.register_forward_hook(_hook(name)) for name, mod in taps.items()]

    entries = _collect_entries(job)
    per_split: dict[str, list] = {"train": [], "test": []}
    layer_order: list[str] | None = None

    try:
        for start in range(0, len(entries), job.batch_size):
            batch = entries[start : start + job.batch_size]
            images = torch.stack([preprocess_image(e[2]) for e in batch])
            with torch.no_grad():
                net(images.to(job.device))
            feats = {name: captured[name].cpu().numpy() for name in job.layers}
            if layer_order is None:
                # largest spatial size first, as the interchange requires
                layer_order = sorted(
                    job.layers,
                    key=lambda n: -(feats[n].shape[2] * feats[n].shape[3]),
                )
            for i, (split, image_id, _path, label, mask_path) in enumerate(batch):
                split_dir = job.output_dir / split
                (split_dir / "features").mkdir(parents=True, exist_ok=True)
                files = {}
                for name in layer_order:
                    safe = name.replace(".", "_")
                    rel = f"features/{image_id}.{safe}.npy"
                    write_npy_f32(feats[name][i], split_dir / rel)
                    files[name] = rel
                mask_rel = None
                if mask_path is not None:
                    (split_dir / "masks").mkdir(exist_ok=True)
                    mask_rel = f"masks/{image_id}.pgm"
                    write_pgm_mask(preprocess_mask(mask_path), split_dir / mask_rel)
                per_split[split].append(
                    {"id": image_id, "files": files, "label": label,
                     "mask": mask_rel}
                )
    finally:
        for h in handles:
            h.remove()

    manifests = {}
    for split, split_entries in per_split.items():
        if not split_entries:
            continue
        split_dir = job.output_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "class": job.class_name,
            "split": split,
            "input_size": [224, 224],
            "layers": list(layer_order),
            "entries": split_entries,
        }
        path = split_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")
        manifests[split] = path
    return manifests


def layer_shapes(job: ExportJob) -> dict[str, tuple[int, ...]]:
    """One verification forward pass; maps layer name -> (C, H, W)."""
    net = build_backbone(job)
    taps = _tap_modules(net, job.layers)
    captured = {}
    handles = [
        mod.register_forward_hook(
            lambda _m, _i, out, name=name: captured.__setitem__(name, out)
        )
        for name, mod in taps.items()
    ]
    with torch.no_grad():
        net(torch.zeros(1, 3, 224, 224, device=job.device))
    for h in handles:
        h.remove()
    return {name: tuple(captured[name].shape[1:]) for name in job.layers}
