import json

import numpy as np
import pytest

from wepadim.cli import main
from wepadim.evaluation import read_results_csv, roc_auc
from wepadim.pgm import read_pgm
from wepadim.tensorio import load_manifest


def _mpath(manifest):
    return str(manifest.corpus_root / "manifest.json")


@pytest.fixture(scope="module")
def fitted_bundle(tmp_path_factory, small_corpus):
    train, _ = small_corpus
    out = tmp_path_factory.mktemp("bundle") / "model"
    code = main(["fit", "--train", _mpath(train), "--out", str(out),
                 "--subbands", "HL_LH_LL", "--sigma", "2.0",
                 "--cov-reg", "0.01"])
    assert code == 0
    return out


def test_fit_summary_line(small_corpus, tmp_path, capsys):
    train, _ = small_corpus
    out = tmp_path / "m"
    assert main(["fit", "--train", _mpath(train), "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("fit: N=12 D_W=54 P=16")
    assert "epsilon=0.01" in line and "seconds=" in line


def test_fit_rerun_bit_identical(small_corpus, tmp_path):
    train, _ = small_corpus
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", "--train", _mpath(train), "--out", str(a)]) == 0
    assert main(["fit", "--train", _mpath(train), "--out", str(b)]) == 0
    for name in ("means.npy", "chol.npy", "model.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fit_threads_do_not_change_bundle(small_corpus, tmp_path):
    train, _ = small_corpus
    a, b = tmp_path / "t1", tmp_path / "t8"
    assert main(["fit", "--train", _mpath(train), "--out", str(a),
                 "--threads", "1"]) == 0
    assert main(["fit", "--train", _mpath(train), "--out", str(b),
                 "--threads", "8"]) == 0
    for name in ("means.npy", "chol.npy", "model.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fit_on_test_split_fails_with_data_exit(small_corpus, tmp_path):
    _, test = small_corpus
    code = main(["fit", "--train", _mpath(test), "--out", str(tmp_path / "x")])
    assert code == 2


def test_usage_error_exit_code_1(capsys):
    assert main(["fit", "--train"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["fit", "--train", "x", "--out", "y", "--family", "db9"]) == 1


def test_score_outputs(small_corpus, fitted_bundle, tmp_path, capsys):
    _, test = small_corpus
    out = tmp_path / "scores"
    assert main(["score", "--model", str(fitted_bundle), "--test", _mpath(test),
                 "--out", str(out)]) == 0
    rows = (out / "scores.csv").read_text().splitlines()
    assert rows[0] == "image_id,image_score"
    assert len(rows) == 1 + len(test.entries)
    # deterministic manifest order, strictly positive finite scores
    ids = [r.split(",")[0] for r in rows[1:]]
    assert ids == [e.image_id for e in test.entries]
    scores = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(np.isfinite(s) and s > 0 for s in scores)
    for e in test.entries:
        values, maxval = read_pgm(out / f"{e.image_id}.pgm")
        assert maxval == 65535
        assert values.shape == test.input_size


def test_score_csv_identical_across_runs(small_corpus, fitted_bundle, tmp_path):
    _, test = small_corpus
    o1, o2 = tmp_path / "s1", tmp_path / "s2"
    for out in (o1, o2):
        assert main(["score", "--model", str(fitted_bundle), "--test",
                     _mpath(test), "--out", str(out)]) == 0
    assert (o1 / "scores.csv").read_bytes() == (o2 / "scores.csv").read_bytes()


def test_scores_separate_anomalies(small_corpus, fitted_bundle, tmp_path):
    _, test = small_corpus
    out = tmp_path / "sep"
    assert main(["score", "--model", str(fitted_bundle), "--test", _mpath(test),
                 "--out", str(out)]) == 0
    rows = (out / "scores.csv").read_text().splitlines()[1:]
    scores = {r.split(",")[0]: float(r.split(",")[1]) for r in rows}
    labels = {e.image_id: e.label == "anomalous" for e in test.entries}
    auc = roc_auc(list(scores.values()),
                  [labels[i] for i in scores])
    assert auc >= 0.90


def test_score_compat_error_exit_3(small_corpus, fitted_bundle, tmp_path):
    _, test = small_corpus
    doc = json.loads((fitted_bundle / "model.json").read_text())
    doc["config"]["subbands"] = "HH"
    tampered = tmp_path / "tampered"
    tampered.mkdir()
    for name in ("means.npy", "chol.npy"):
        (tampered / name).write_bytes((fitted_bundle / name).read_bytes())
    (tampered / "model.json").write_text(json.dumps(doc))
    code = main(["score", "--model", str(tampered), "--test", _mpath(test),
                 "--out", str(tmp_path / "o")])
    assert code == 3


def test_eval_command(small_corpus, fitted_bundle, tmp_path, capsys):
    _, test = small_corpus
    out_csv = tmp_path / "row.csv"
    assert main(["eval", "--model", str(fitted_bundle), "--test", _mpath(test),
                 "--backbone", "pyramid", "--out", str(out_csv)]) == 0
    line = capsys.readouterr().out.strip()
    assert "image_auc=" in line and "pixel_auc=" in line
    records, _ = read_results_csv(out_csv)
    assert len(records) == 1
    assert records[0].backbone == "pyramid"


def test_synth_cli_and_config_file(tmp_path, capsys):
    cfg = tmp_path / "synth.toml"
    cfg.write_text(
        """
[synth]
image_size = [16, 16]
n_train = 3
n_test_normal = 2
n_test_anomalous = 2
speckle_patch = 6
blob_sigma = 2.0
anomaly_kind = "highfreq-speckle"
stages = [[4, 2], [8, 4]]
"""
    )
    out = tmp_path / "corpus"
    assert main(["synth", "--out", str(out), "--seed", "9",
                 "--config", str(cfg)]) == 0
    train = load_manifest(out / "train" / "manifest.json")
    assert len(train.entries) == 3
    assert train.layers == ("layer1", "layer2")


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[synth]\nn_trian = 3\n")
    assert main(["synth", "--out", str(tmp_path / "c"),
                 "--config", str(cfg)]) == 1


def test_sweep_and_report_cli(small_corpus, tmp_path, capsys):
    train, test = small_corpus
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(
        f"""
[grid]
families = ["haar"]
levels = [1]
subbands = ["LL", "HL_LH_LL"]
sigmas = [2.0]
epsilons = [0.1, 0.01]

[[corpora]]
class = "synthetic"
backbone = "pyramid"
train = "{_mpath(train)}"
test = "{_mpath(test)}"
"""
    )
    out_csv = tmp_path / "results.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out_csv),
                 "--no-timings"]) == 0
    records, ghash = read_results_csv(out_csv)
    assert len(records) == 4
    assert ghash is not None
    capsys.readouterr()

    report_file = tmp_path / "report.txt"
    assert main(["report", "--results", str(out_csv),
                 "--out", str(report_file)]) == 0
    text = report_file.read_text()
    assert "Best configuration per class" in text

    assert main(["report", "--results", str(out_csv)]) == 0
    assert "Subbands" in capsys.readouterr().out


def test_env_threads_fallback(small_corpus, tmp_path, monkeypatch):
    train, _ = small_corpus
    monkeypatch.setenv("WEPADIM_THREADS", "2")
    out = tmp_path / "envm"
    assert main(["fit", "--train", _mpath(train), "--out", str(out)]) == 0
    monkeypatch.setenv("WEPADIM_THREADS", "zebra")
    assert main(["fit", "--train", _mpath(train),
                 "--out", str(tmp_path / "x")]) == 1


def test_numerical_error_exit_4(small_corpus, tmp_path):
    # zero regularization with N-1 < D_W: covariance is singular
    train, _ = small_corpus
    code = main(["fit", "--train", _mpath(train), "--out",
                 str(tmp_path / "m"), "--cov-reg", "0.0"])
    assert code == 4


def test_scoring_training_images_positive_finite(small_corpus, fitted_bundle,
                                                 tmp_path):
    train, _ = small_corpus
    out = tmp_path / "train_scores"
    assert main(["score", "--model", str(fitted_bundle), "--test",
                 _mpath(train), "--out", str(out)]) == 0
    rows = (out / "scores.csv").read_text().splitlines()[1:]
    scores = [float(r.split(",")[1]) for r in rows]
    assert all(np.isfinite(s) and s > 0 for s in scores)
