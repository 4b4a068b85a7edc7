"""Bit-exact NPY tensor I/O, feature stacks and corpus manifests.

The interchange format is NPY v1.0 restricted to little-endian float32/float64
in C order.  Reading and writing are implemented directly (no ``np.load``) so
the byte layout is pinned: header dict keys in the order
``descr, fortran_order, shape``, space-padded to a 64-byte boundary,
newline-terminated.  Files written here round-trip bit-exactly and are
readable by any standard NPY consumer.

A corpus is a directory holding one NPY file per (image, layer) plus a
``manifest.json`` describing entries, labels and mask paths.  All tensors are
widened to float64 on load; downstream numerics are float64 throughout.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ManifestError, StorageError, UnsupportedDtypeError

_MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an NPY v1.0 file into an array with the stored dtype and shape."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read tensor file {path}: {exc}") from exc

    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    if raw[6:8] != _VERSION:
        raise FormatError(f"{path}: unsupported NPY version {raw[6]}.{raw[7]}")
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated NPY header")
    header = raw[10:header_end]
    if not header.endswith(b"\n"):
        raise FormatError(f"{path}: NPY header not newline-terminated")
    try:
        meta = ast.literal_eval(header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: malformed NPY header dict") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: NPY header must have descr/fortran_order/shape keys")

    descr = meta["descr"]
    if descr not in _DESCRS:
        raise UnsupportedDtypeError(f"{path}: dtype {descr!r} not supported (need <f4 or <f8)")
    if meta["fortran_order"] is not False:
        raise FormatError(f"{path}: fortran_order must be False")
    shape = meta["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"{path}: invalid shape {shape!r}")

    dtype = _DESCRS[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = raw[header_end:]
    if len(payload) != count * dtype.itemsize:
        raise StorageError(
            f"{path}: payload has {len(payload)} bytes, expected {count * dtype.itemsize}"
        )
    data = np.frombuffer(payload, dtype=dtype, count=count)
    return data.reshape(shape).copy()


def write_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """Write an array as NPY v1.0.  Only float32/float64 inputs are accepted."""
    arr = np.asarray(tensor)
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.float64:
        descr = "<f8"
    else:
        raise UnsupportedDtypeError(f"cannot write dtype {arr.dtype}; only float32/float64")
    arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    payload = np.ascontiguousarray(arr).tobytes() if arr.ndim else arr.tobytes()

    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        descr,
        repr(arr.shape),
    )
    unpadded = len(_MAGIC) + 2 + 2 + len(header) + 1
    pad = (-unpadded) % 64
    header_bytes = header.encode("latin1") + b" " * pad + b"\n"

    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(_VERSION)
            fh.write(struct.pack("<H", len(header_bytes)))
            fh.write(header_bytes)
            fh.write(payload)
    except OSError as exc:
        raise StorageError(f"cannot write tensor file {path}: {exc}") from exc


@dataclass(frozen=True)
class FeatureStack:
    """Ordered multi-layer feature tensors for one image.

    Layers are (name, array) pairs, rank-3 ``C x H x W``, ordered from the
    earliest (largest) layer downward; spatial sizes must be non-increasing.
    Arrays are float64 regardless of storage dtype.
    """

    image_id: str
    input_size: tuple[int, int]
    layers: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        if not self.layers:
            raise ManifestError(f"{self.image_id}: feature stack has no layers")
        prev = None
        for name, arr in self.layers:
            if arr.ndim != 3:
                raise ManifestError(f"{self.image_id}/{name}: layer tensor must be rank 3")
            hw = arr.shape[1:]
            if prev is not None and (hw[0] > prev[0] or hw[1] > prev[1]):
                raise ManifestError(
                    f"{self.image_id}/{name}: layer spatial size {hw} exceeds "
                    f"preceding layer {prev}; layers must be ordered largest first"
                )
            prev = hw

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layers)

    @property
    def channel_counts(self) -> tuple[int, ...]:
        return tuple(arr.shape[0] for _, arr in self.layers)

    def select(self, layer_names) -> "FeatureStack":
        """Restrict to the given layers, keeping stack order."""
        wanted = set(layer_names)
        unknown = wanted - set(self.layer_names)
        if unknown:
            raise ManifestError(f"unknown layers requested: {sorted(unknown)}")
        kept = tuple((n, a) for n, a in self.layers if n in wanted)
        return FeatureStack(self.image_id, self.input_size, kept)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    files: dict[str, str]
    label: str
    mask: str | None = None


@dataclass
class CorpusManifest:
    """One split of a corpus: layer naming plus per-image file references."""

    corpus_root: Path
    class_name: str
    split: str
    input_size: tuple[int, int]
    layers: tuple[str, ...]
    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self) -> None:
        if self.split not in ("train", "test"):
            raise ManifestError(f"split must be train or test, got {self.split!r}")
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise ManifestError(f"duplicate image id {e.image_id!r}")
            seen.add(e.image_id)
            if e.label not in ("normal", "anomalous"):
                raise ManifestError(f"{e.image_id}: bad label {e.label!r}")
            if self.split == "train" and e.label != "normal":
                raise ManifestError(
                    f"{e.image_id}: train split must contain only normal entries"
                )
            if e.label == "anomalous" and not e.mask:
                raise ManifestError(f"{e.image_id}: anomalous entry without a mask path")
            missing = [l for l in self.layers if l not in e.files]
            if missing:
                raise ManifestError(f"{e.image_id}: missing layer files {missing}")

    def entry(self, image_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise ManifestError(f"image id {image_id!r} not in manifest")


def load_manifest(path: str | Path) -> CorpusManifest:
    """Load and validate a manifest.json file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    try:
        manifest = CorpusManifest(
            corpus_root=path.parent,
            class_name=doc["class"],
            split=doc["split"],
            input_size=(int(doc["input_size"][0]), int(doc["input_size"][1])),
            layers=tuple(doc["layers"]),
            entries=[
                ManifestEntry(
                    image_id=e["id"],
                    files=dict(e["files"]),
                    label=e["label"],
                    mask=e.get("mask"),
                )
                for e in doc["entries"]
            ],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: manifest schema violation: {exc}") from exc
    manifest.validate()
    return manifest


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    manifest.validate()
    doc = {
        "class": manifest.class_name,
        "split": manifest.split,
        "input_size": list(manifest.input_size),
        "layers": list(manifest.layers),
        "entries": [
            {"id": e.image_id, "files": e.files, "label": e.label, "mask": e.mask}
            for e in manifest.entries
        ],
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write manifest {path}: {exc}") from exc


def load_feature_stack(manifest: CorpusManifest, image_id: str) -> FeatureStack:
    """Load all layer tensors of one image, in manifest layer order, as float64."""
    entry = manifest.entry(image_id)
    layers = []
    for name in manifest.layers:
        arr = read_tensor(manifest.corpus_root / entry.files[name])
        layers.append((name, np.ascontiguousarray(arr, dtype=np.float64)))
    return FeatureStack(image_id=image_id, input_size=manifest.input_size,
                        layers=tuple(layers))
