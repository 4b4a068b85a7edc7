import importlib.util
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from feature_exporter import ExportError, ExportJob, export_corpus, layer_shapes


def _make_class_dir(root: Path, n_train=10, n_test_good=2, n_defect=2):
    rng = np.random.default_rng(0)

    def _save(path, arr):
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr).save(path)

    for i in range(n_train):
        img = rng.integers(0, 255, size=(320, 320, 3), dtype=np.uint8)
        _save(root / "train" / "good" / f"{i:03d}.png", img)
    for i in range(n_test_good):
        img = rng.integers(0, 255, size=(320, 320, 3), dtype=np.uint8)
        _save(root / "test" / "good" / f"{i:03d}.png", img)
    for i in range(n_defect):
        img = rng.integers(0, 255, size=(320, 320, 3), dtype=np.uint8)
        _save(root / "test" / "scratch" / f"{i:03d}.png", img)
        mask = np.zeros((320, 320), dtype=np.uint8)
        mask[100:180, 50:260] = 200  # any nonzero source value
        _save(root / "ground_truth" / "scratch" / f"{i:03d}_mask.png", mask)
    return root


@pytest.fixture(scope="module")
def class_dir(tmp_path_factory):
    return _make_class_dir(tmp_path_factory.mktemp("mvtec_like") / "widget")


@pytest.fixture(scope="module")
def exported(class_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("export") / "widget"
    job = ExportJob(backbone="resnet18", input_dir=class_dir, output_dir=out,
                    pretrained=False, seed=0)
    manifests = export_corpus(job)
    return out, manifests


def test_resnet18_layer_shapes(exported):
    out, manifests = exported
    doc = json.loads(manifests["train"].read_text())
    first = doc["entries"][0]
    shapes = {}
    for layer, rel in first["files"].items():
        arr = np.load(out / "train" / rel)
        assert arr.dtype == np.float32
        shapes[layer] = arr.shape
    assert shapes == {
        "layer1": (64, 56, 56),
        "layer2": (128, 28, 28),
        "layer3": (256, 14, 14),
    }


def test_manifest_contract(exported):
    _, manifests = exported
    train = json.loads(manifests["train"].read_text())
    assert train["split"] == "train"
    assert train["input_size"] == [224, 224]
    assert train["layers"] == ["layer1", "layer2", "layer3"]
    assert len(train["entries"]) == 10
    assert all(e["label"] == "normal" for e in train["entries"])

    test = json.loads(manifests["test"].read_text())
    anomalous = [e for e in test["entries"] if e["label"] == "anomalous"]
    assert len(anomalous) == 2
    assert all(e["mask"] for e in anomalous)


def test_masks_are_binary_pgm_224(exported):
    out, manifests = exported
    doc = json.loads(manifests["test"].read_text())
    entry = next(e for e in doc["entries"] if e["label"] == "anomalous")
    raw = (out / "test" / entry["mask"]).read_bytes()
    assert raw.startswith(b"P5\n224 224\n255\n")
    values = np.frombuffer(raw[len(b"P5\n224 224\n255\n"):], dtype=np.uint8)
    assert set(np.unique(values)) <= {0, 255}
    assert (values == 255).sum() > 0


def test_deterministic_reexport(class_dir, tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        job = ExportJob(backbone="resnet18", input_dir=class_dir,
                        output_dir=out, pretrained=False, seed=0)
        export_corpus(job)
        outs.append(out)
    files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                     if p.is_file())
    files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*")
                     if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_efficientnet_b0_taps_decrease(class_dir):
    job = ExportJob(backbone="efficientnet-b0", input_dir=class_dir,
                    output_dir=Path("unused"), pretrained=False, seed=0)
    shapes = layer_shapes(job)
    assert list(shapes) == ["features.3", "features.4", "features.5",
                            "features.6"]
    sizes = [s[1] for s in shapes.values()]
    assert sizes == sorted(sizes, reverse=True)
    assert len(set(sizes)) >= 3  # strictly decreasing apart from stride-1 stages


def test_unknown_backbone_and_layer_rejected(class_dir):
    with pytest.raises(ExportError):
        ExportJob(backbone="vgg16", input_dir=class_dir, output_dir=Path("x"))
    job = ExportJob(backbone="resnet18", layers=("layer9",),
                    input_dir=class_dir, output_dir=Path("x"),
                    pretrained=False)
    with pytest.raises(ExportError):
        layer_shapes(job)


def test_missing_mask_rejected(tmp_path):
    root = _make_class_dir(tmp_path / "widget", n_train=1, n_test_good=0,
                           n_defect=1)
    mask = root / "ground_truth" / "scratch" / "000_mask.png"
    mask.unlink()
    job = ExportJob(backbone="resnet18", input_dir=root,
                    output_dir=tmp_path / "out", pretrained=False)
    with pytest.raises(ExportError):
        export_corpus(job)


@pytest.mark.skipif(importlib.util.find_spec("wepadim") is None,
                    reason="engine not installed")
def test_corpus_loads_through_the_engine(exported):
    from wepadim.pipeline import load_mask
    from wepadim.tensorio import load_feature_stack, load_manifest

    out, manifests = exported
    train = load_manifest(manifests["train"])
    stack = load_feature_stack(train, train.entries[0].image_id)
    assert [arr.shape for _, arr in stack.layers] == [
        (64, 56, 56), (128, 28, 28), (256, 14, 14),
    ]
    assert all(arr.dtype == np.float64 for _, arr in stack.layers)

    test = load_manifest(manifests["test"])
    anomalous = next(e for e in test.entries if e.label == "anomalous")
    mask = load_mask(test, anomalous.image_id)
    assert mask.shape == (224, 224)
    assert mask.any()


def test_cli_export(class_dir, tmp_path, capsys):
    from feature_exporter.cli import main

    out = tmp_path / "cli_out"
    code = main(["--backbone", "resnet18", "--layers",
                 "layer1,layer2,layer3", "--in", str(class_dir),
                 "--out", str(out), "--weights", "random"])
    assert code == 0
    assert (out / "train" / "manifest.json").is_file()
    assert (out / "test" / "manifest.json").is_file()

    code = main(["--backbone", "resnet18", "--in", str(class_dir),
                 "--out", str(out), "--weights", "random", "--print-shapes"])
    assert code == 0
    assert "layer1: (64, 56, 56)" in capsys.readouterr().out
