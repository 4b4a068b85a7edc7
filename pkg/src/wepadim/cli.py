"""Command-line surface: fit, score, eval, sweep, report, synth.

Configuration comes from flags plus an optional TOML file (flags win).  Exit
codes: 0 success, 1 usage/config, 2 data, 3 model compatibility, 4 numerical.
Every command is deterministic given its inputs; ``--threads`` (or the
WEPADIM_THREADS environment variable) changes wall time only.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .config import WaveletConfig
from .embed import SubbandSet, all_subband_sets
from .errors import ConfigError, WepadimError
from .evaluation import (
    CorpusJob,
    SweepGrid,
    evaluate_class,
    grid_hash,
    read_results_csv,
    sweep,
    write_results_csv,
)
from .gaussian import load_model, save_model
from .pipeline import fit_model, score_manifest
from .report import full_report
from .scoring import export_heatmap
from .synth import PyramidExtractor, SynthSpec, generate_corpus
from .tensorio import load_manifest


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to code 1."""

    def error(self, message):
        raise ConfigError(message)


_CONFIG_SECTIONS = {"wavelet", "grid", "corpora", "synth", "run"}
_WAVELET_KEYS = {"family", "level", "subbands", "sigma", "cov_reg", "layers"}
_GRID_KEYS = {"families", "levels", "subbands", "sigmas", "epsilons"}
_SYNTH_KEYS = {
    "seed", "image_size", "n_train", "n_test_normal", "n_test_anomalous",
    "texture", "anomaly_kind", "anomaly_magnitude", "blob_sigma",
    "speckle_patch", "texture_smoothing", "class_name", "stages",
}
_CORPUS_KEYS = {"class", "backbone", "train", "test"}
_RUN_KEYS = {"threads", "seed"}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    unknown = set(doc) - _CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
    for section, allowed in (("wavelet", _WAVELET_KEYS), ("grid", _GRID_KEYS),
                             ("synth", _SYNTH_KEYS), ("run", _RUN_KEYS)):
        extra = set(doc.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"{path}: unknown keys in [{section}]: {sorted(extra)}")
    for entry in doc.get("corpora", []):
        extra = set(entry) - _CORPUS_KEYS
        if extra:
            raise ConfigError(f"{path}: unknown keys in [[corpora]]: {sorted(extra)}")
    return doc


def _resolve_threads(args, file_cfg: dict) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("WEPADIM_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"WEPADIM_THREADS must be an integer, got {env!r}") from exc
    return max(1, int(file_cfg.get("run", {}).get("threads", 1)))


def _wavelet_config(args, file_cfg: dict) -> WaveletConfig:
    section = dict(file_cfg.get("wavelet", {}))
    merged = WaveletConfig(
        family=args.family or section.get("family", "haar"),
        level=args.level if args.level is not None else int(section.get("level", 1)),
        subbands=SubbandSet.parse(
            args.subbands or section.get("subbands", "HL_LH_LL")
        ),
        sigma=args.sigma if args.sigma is not None else float(section.get("sigma", 2.0)),
        cov_reg=(
            args.cov_reg if args.cov_reg is not None
            else float(section.get("cov_reg", 0.01))
        ),
        layers=(
            tuple(args.layers.split(",")) if args.layers
            else tuple(section.get("layers", ()))
        ),
    )
    return merged


def _grid_from_config(file_cfg: dict) -> SweepGrid:
    section = dict(file_cfg.get("grid", {}))
    subbands = section.get("subbands", "all")
    if subbands == "all":
        sets = tuple(all_subband_sets())
    else:
        sets = tuple(SubbandSet.parse(s) for s in subbands)
    return SweepGrid(
        families=tuple(section.get("families", ("haar", "db2", "db4", "sym4"))),
        levels=tuple(int(l) for l in section.get("levels", (1,))),
        subband_sets=sets,
        sigmas=tuple(float(s) for s in section.get("sigmas", (2.0, 4.0, 6.0))),
        epsilons=tuple(float(e) for e in section.get("epsilons", (0.1, 0.01, 0.001))),
    )


def _jobs_from_config(file_cfg: dict) -> list[CorpusJob]:
    jobs = []
    for entry in file_cfg.get("corpora", []):
        try:
            jobs.append(CorpusJob(
                class_name=entry["class"],
                backbone=entry.get("backbone", "unknown"),
                train_manifest=Path(entry["train"]),
                test_manifest=Path(entry["test"]),
            ))
        except KeyError as exc:
            raise ConfigError(f"[[corpora]] entry missing key {exc}") from exc
    if not jobs:
        raise ConfigError("sweep needs at least one [[corpora]] entry in the config")
    return jobs


def _synth_spec(args, file_cfg: dict) -> tuple[SynthSpec, PyramidExtractor]:
    section = dict(file_cfg.get("synth", {}))
    seed = args.seed if args.seed is not None else int(section.get("seed", 0))
    size = section.get("image_size", (224, 224))
    if args.image_size is not None:
        size = (args.image_size, args.image_size)
    spec = SynthSpec(
        seed=seed,
        image_size=(int(size[0]), int(size[1])),
        n_train=args.n_train if args.n_train is not None else int(section.get("n_train", 60)),
        n_test_normal=(
            args.n_test_normal if args.n_test_normal is not None
            else int(section.get("n_test_normal", 20))
        ),
        n_test_anomalous=(
            args.n_test_anomalous if args.n_test_anomalous is not None
            else int(section.get("n_test_anomalous", 20))
        ),
        texture=args.texture or section.get("texture", "smooth-noise"),
        anomaly_kind=args.anomaly_kind or section.get("anomaly_kind", "lowfreq-blob"),
        anomaly_magnitude=(
            args.anomaly_magnitude if args.anomaly_magnitude is not None
            else float(section.get("anomaly_magnitude", 4.0))
        ),
        blob_sigma=float(section.get("blob_sigma", 20.0)),
        speckle_patch=int(section.get("speckle_patch", 16)),
        texture_smoothing=float(section.get("texture_smoothing", 4.0)),
        class_name=section.get("class_name", "synthetic"),
    )
    stages = section.get("stages")
    if stages is None:
        extractor = PyramidExtractor(seed=spec.seed)
    else:
        extractor = PyramidExtractor(
            seed=spec.seed,
            stages=tuple((int(c), int(f)) for c, f in stages),
        )
    return spec, extractor


def build_parser() -> _Parser:
    parser = _Parser(prog="wepadim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--threads", type=int, help="worker threads (default 1)")
        p.add_argument("--seed", type=int, help="base seed where applicable")

    def wavelet_flags(p):
        p.add_argument("--family", help="wavelet family (haar, db2, db4, sym4)")
        p.add_argument("--level", type=int, help="decomposition level")
        p.add_argument("--subbands", help="subband set key, e.g. HL_LH_LL")
        p.add_argument("--sigma", type=float, help="post-processing blur sigma (px)")
        p.add_argument("--cov-reg", dest="cov_reg", type=float,
                       help="covariance regularization epsilon")
        p.add_argument("--layers", help="comma-separated layer subset")

    p = sub.add_parser("fit", help="fit a normality model on a train manifest")
    common(p)
    wavelet_flags(p)
    p.add_argument("--train", required=True, help="train manifest.json")
    p.add_argument("--out", required=True, help="model bundle directory")

    p = sub.add_parser("score", help="score a test manifest with a fitted model")
    common(p)
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--test", required=True, help="test manifest.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sigma", type=float, help="override the model's blur sigma")

    p = sub.add_parser("eval", help="image/pixel AUC of a model on a test manifest")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--backbone", default="", help="backbone tag for the record")
    p.add_argument("--out", help="optional single-row results CSV")

    p = sub.add_parser("sweep", help="grid sweep over corpora from the config file")
    common(p)
    p.add_argument("--out", required=True, help="results CSV path (resumable)")
    p.add_argument("--no-timings", action="store_true",
                   help="write zeros for fit_s/score_s, making the CSV "
                        "bitwise reproducible")

    p = sub.add_parser("report", help="render report tables from a results CSV")
    common(p)
    p.add_argument("--results", required=True)
    p.add_argument("--out", help="write the report to a file instead of stdout")

    p = sub.add_parser("synth", help="generate a synthetic feature corpus")
    common(p)
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test-normal", dest="n_test_normal", type=int)
    p.add_argument("--n-test-anomalous", dest="n_test_anomalous", type=int)
    p.add_argument("--texture", choices=("smooth-noise", "stripes"))
    p.add_argument("--anomaly-kind", dest="anomaly_kind",
                   choices=("lowfreq-blob", "highfreq-speckle"))
    p.add_argument("--anomaly-magnitude", dest="anomaly_magnitude", type=float)

    return parser


def _cmd_fit(args, file_cfg) -> int:
    threads = _resolve_threads(args, file_cfg)
    config = _wavelet_config(args, file_cfg)
    manifest = load_manifest(args.train)
    outcome = fit_model(manifest, config, threads=threads)
    model = outcome.model
    save_model(model, args.out)
    locs = model.grid[0] * model.grid[1]
    print(
        f"fit: N={model.sample_count} D_W={model.dim} P={locs} "
        f"epsilon={model.epsilon} seconds={outcome.seconds:.3f}"
    )
    return 0


def _cmd_score(args, file_cfg) -> int:
    threads = _resolve_threads(args, file_cfg)
    model = load_model(args.model)
    manifest = load_manifest(args.test)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = score_manifest(manifest, model, threads=threads, sigma=args.sigma)
    with open(out_dir / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "image_score"])
        for res in results:
            export_heatmap(res, out_dir / f"{res.image_id}.pgm")
            writer.writerow([res.image_id, repr(res.image_score)])
    print(f"score: {len(results)} images -> {out_dir}")
    return 0


def _cmd_eval(args, file_cfg) -> int:
    threads = _resolve_threads(args, file_cfg)
    model = load_model(args.model)
    manifest = load_manifest(args.test)
    record = evaluate_class(manifest, model, backbone=args.backbone, threads=threads)
    print(
        f"eval: class={record.class_name} image_auc={record.image_auc:.6f} "
        f"pixel_auc={record.pixel_auc:.6f}"
    )
    if args.out:
        write_results_csv([record], args.out)
    return 0


def _cmd_sweep(args, file_cfg) -> int:
    threads = _resolve_threads(args, file_cfg)
    grid = _grid_from_config(file_cfg)
    jobs = _jobs_from_config(file_cfg)
    records = sweep(jobs, grid, threads=threads, out_csv=args.out,
                    timings=not args.no_timings)
    n_failed = sum(1 for r in records if not r.ok)
    print(
        f"sweep: {len(records)} records ({n_failed} failed) "
        f"grid_hash={grid_hash(grid, jobs)} -> {args.out}"
    )
    return 0


def _cmd_report(args, file_cfg) -> int:
    records, _ = read_results_csv(args.results)
    text = full_report(records)
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_synth(args, file_cfg) -> int:
    spec, extractor = _synth_spec(args, file_cfg)
    t0 = time.perf_counter()
    train, test = generate_corpus(spec, args.out, extractor)
    print(
        f"synth: class={spec.class_name} train={len(train.entries)} "
        f"test={len(test.entries)} size={spec.image_size[0]}x{spec.image_size[1]} "
        f"seconds={time.perf_counter() - t0:.3f} -> {args.out}"
    )
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        file_cfg = _load_config_file(getattr(args, "config", None))
        return _COMMANDS[args.command](args, file_cfg)
    except WepadimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
