"""Metrics, configuration sweeps and result reporting.

ROC AUC is the Mann-Whitney statistic with average-rank tie handling, so it
is exactly invariant under strictly increasing score transforms.  Pixel AUC
pools every pixel of every test image of a class into one curve.  Sweeps
reuse per-(family, level, subbands) moments across the (sigma, epsilon) axes:
epsilon only re-finalizes the covariance, sigma only re-runs post-processing.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats

from .config import WaveletConfig
from .embed import SubbandSet
from .errors import ConfigError, ManifestError, MetricUndefinedError, WepadimError
from .gaussian import PatchGaussianModel, finalize, mahalanobis_map
from .pipeline import (
    accumulate_manifest,
    embedding_for_entry,
    load_mask,
    map_ordered,
    resolve_layers,
)
from .scoring import postprocess
from .tensorio import CorpusManifest, load_manifest

RESULT_COLUMNS = (
    "class", "backbone", "wavelet", "level", "subbands", "sigma", "cov_reg",
    "image_auc", "pixel_auc", "fit_s", "score_s", "status",
)


def average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged; exact for dyadic averages."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    n = scores.size
    new_group = np.r_[True, s_sorted[1:] != s_sorted[:-1]]
    group_id = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    ends = np.r_[starts[1:], n]
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = group_rank[group_id]
    return ranks


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve from scores and binary labels."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise MetricUndefinedError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError(
            f"AUC undefined: {n_pos} positive / {n_neg} negative labels"
        )
    r_pos = float(average_ranks(scores)[labels].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (float(n_pos) * float(n_neg))


class PixelScoreAccumulator:
    """Chunked pooling of (score, label) pixel pairs with a final merged AUC."""

    def __init__(self):
        self._scores: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []

    def add(self, scores: np.ndarray, labels: np.ndarray) -> None:
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels).ravel().astype(bool)
        if scores.size != labels.size:
            raise MetricUndefinedError("pixel chunk size mismatch")
        self._scores.append(scores)
        self._labels.append(labels)

    def merge(self, other: "PixelScoreAccumulator") -> "PixelScoreAccumulator":
        self._scores.extend(other._scores)
        self._labels.extend(other._labels)
        return self

    def auc(self) -> float:
        if not self._scores:
            raise MetricUndefinedError("no pixel scores accumulated")
        return roc_auc(np.concatenate(self._scores), np.concatenate(self._labels))


@dataclass(frozen=True)
class SweepRecord:
    class_name: str
    backbone: str
    config: WaveletConfig
    image_auc: float | None
    pixel_auc: float | None
    fit_s: float
    score_s: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def sort_key(self):
        c = self.config
        return (self.class_name, self.backbone, c.family, c.level,
                c.subbands.key, c.sigma, c.cov_reg)


def evaluate_class(test_manifest: CorpusManifest, model: PatchGaussianModel,
                   backbone: str = "", fit_seconds: float = 0.0,
                   threads: int = 1) -> SweepRecord:
    """Image and pixel AUC of a fitted model over one test manifest."""
    if not test_manifest.entries:
        raise ManifestError("test manifest has no entries")
    config = model.config
    t0 = time.perf_counter()
    ids = [e.image_id for e in test_manifest.entries]

    def one(image_id: str):
        emb = embedding_for_entry(test_manifest, image_id, config)
        raw = mahalanobis_map(model, emb)
        result = postprocess(raw, test_manifest.input_size, config.sigma, image_id)
        mask = load_mask(test_manifest, image_id)
        return result.image_score, result.full_map, mask

    image_scores = []
    image_labels = []
    pixels = PixelScoreAccumulator()
    for entry, (score, full_map, mask) in zip(
        test_manifest.entries, map_ordered(one, ids, threads)
    ):
        image_scores.append(score)
        image_labels.append(1 if entry.label == "anomalous" else 0)
        pixels.add(full_map.ravel(), mask.ravel())
    return SweepRecord(
        class_name=test_manifest.class_name,
        backbone=backbone,
        config=config,
        image_auc=roc_auc(image_scores, image_labels),
        pixel_auc=pixels.auc(),
        fit_s=fit_seconds,
        score_s=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class CorpusJob:
    """One class to sweep: its train/test manifests plus a backbone tag."""

    class_name: str
    backbone: str
    train_manifest: Path
    test_manifest: Path


@dataclass(frozen=True)
class SweepGrid:
    families: tuple[str, ...] = ("haar", "db2", "db4", "sym4")
    levels: tuple[int, ...] = (1,)
    subband_sets: tuple[SubbandSet, ...] = (SubbandSet.parse("HL_LH_LL"),)
    sigmas: tuple[float, ...] = (2.0, 4.0, 6.0)
    epsilons: tuple[float, ...] = (0.1, 0.01, 0.001)

    def __post_init__(self):
        if not (self.families and self.levels and self.subband_sets
                and self.sigmas and self.epsilons):
            raise ConfigError("sweep grid has an empty axis")
        object.__setattr__(self, "families", tuple(sorted(set(self.families))))
        object.__setattr__(self, "levels", tuple(sorted(set(self.levels))))
        object.__setattr__(
            self,
            "subband_sets",
            tuple(sorted(set(self.subband_sets), key=lambda s: s.key)),
        )
        object.__setattr__(self, "sigmas", tuple(sorted(set(self.sigmas))))
        object.__setattr__(self, "epsilons", tuple(sorted(set(self.epsilons))))

    def configs_per_class(self) -> int:
        return (len(self.families) * len(self.levels) * len(self.subband_sets)
                * len(self.sigmas) * len(self.epsilons))


def grid_hash(grid: SweepGrid, jobs) -> str:
    doc = {
        "families": list(grid.families),
        "levels": list(grid.levels),
        "subbands": [s.key for s in grid.subband_sets],
        "sigmas": list(grid.sigmas),
        "epsilons": list(grid.epsilons),
        "jobs": [
            [j.class_name, j.backbone, str(j.train_manifest), str(j.test_manifest)]
            for j in sorted(jobs, key=lambda j: (j.class_name, j.backbone))
        ],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def sweep_plan(grid: SweepGrid, jobs) -> list[tuple]:
    """Canonical (job, family, level, subbands) task order of a sweep."""
    plan = []
    for job in sorted(jobs, key=lambda j: (j.class_name, j.backbone)):
        for family in grid.families:
            for level in grid.levels:
                for sset in grid.subband_sets:
                    plan.append((job, family, level, sset))
    return plan


def _sweep_task(task, grid: SweepGrid, threads: int) -> list[SweepRecord]:
    """All (sigma, epsilon) records of one (class, family, level, subbands)."""
    job, family, level, sset = task
    base = WaveletConfig(family=family, level=level, subbands=sset,
                         sigma=grid.sigmas[0], cov_reg=grid.epsilons[0])
    records: list[SweepRecord] = []
    try:
        train = load_manifest(job.train_manifest)
        test = load_manifest(job.test_manifest)
        base = resolve_layers(train, base)
        t0 = time.perf_counter()
        acc, layer_channels = accumulate_manifest(train, base, threads)
        moments_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        test_embeddings = [
            embedding_for_entry(test, e.image_id, base) for e in test.entries
        ]
        masks = [load_mask(test, e.image_id) for e in test.entries]
        labels = [1 if e.label == "anomalous" else 0 for e in test.entries]
        embed_s = time.perf_counter() - t0
    except WepadimError as exc:
        for sigma in grid.sigmas:
            for eps in grid.epsilons:
                cfg = base.replace(sigma=sigma, cov_reg=eps)
                records.append(SweepRecord(job.class_name, job.backbone, cfg,
                                           None, None, 0.0, 0.0,
                                           status=f"failed: {exc}"))
        return records

    for eps in grid.epsilons:
        cfg_eps = base.replace(cov_reg=eps)
        try:
            t0 = time.perf_counter()
            model = finalize(acc, eps, config=cfg_eps, layer_channels=layer_channels)
            fit_s = moments_s + (time.perf_counter() - t0)
            t0 = time.perf_counter()
            raw_maps = [mahalanobis_map(model, emb) for emb in test_embeddings]
            mahal_s = embed_s + (time.perf_counter() - t0)
        except WepadimError as exc:
            for sigma in grid.sigmas:
                cfg = cfg_eps.replace(sigma=sigma)
                records.append(SweepRecord(job.class_name, job.backbone, cfg,
                                           None, None, moments_s, 0.0,
                                           status=f"failed: {exc}"))
            continue
        for sigma in grid.sigmas:
            cfg = cfg_eps.replace(sigma=sigma)
            try:
                t0 = time.perf_counter()
                image_scores = []
                pixels = PixelScoreAccumulator()
                for raw, mask in zip(raw_maps, masks):
                    res = postprocess(raw, test.input_size, sigma)
                    image_scores.append(res.image_score)
                    pixels.add(res.full_map.ravel(), mask.ravel())
                records.append(SweepRecord(
                    job.class_name, job.backbone, cfg,
                    roc_auc(image_scores, labels), pixels.auc(),
                    fit_s, mahal_s + (time.perf_counter() - t0),
                ))
            except WepadimError as exc:
                records.append(SweepRecord(job.class_name, job.backbone, cfg,
                                           None, None, fit_s, 0.0,
                                           status=f"failed: {exc}"))
    return records


def sweep(jobs, grid: SweepGrid, threads: int = 1,
          out_csv: str | Path | None = None,
          timings: bool = True) -> list[SweepRecord]:
    """Run the full grid over all jobs; optionally checkpoint to CSV.

    When ``out_csv`` exists its grid hash must match; completed rows are kept
    and their tasks skipped.  The file is rewritten in canonical row order
    after every completed task, so an interrupted sweep resumes cheaply.
    Worker threads each run one task; records are merged in task order.
    """
    ghash = grid_hash(grid, jobs)
    done: dict[tuple, SweepRecord] = {}
    out_path = Path(out_csv) if out_csv is not None else None
    if out_path is not None and out_path.exists():
        old_records, old_hash = read_results_csv(out_path)
        if old_hash != ghash:
            raise ConfigError(
                f"existing results file {out_path} was produced by a different "
                f"grid (hash {old_hash} != {ghash}); remove it or match the grid"
            )
        for rec in old_records:
            done[rec.sort_key()] = rec

    plan = sweep_plan(grid, jobs)

    def task_keys(task):
        job, family, level, sset = task
        return [
            (job.class_name, job.backbone, family, level, sset.key, sigma, eps)
            for sigma in grid.sigmas
            for eps in grid.epsilons
        ]

    pending = []
    records: list[SweepRecord] = []
    for t in plan:
        keys = task_keys(t)
        if all(k in done for k in keys):
            records.extend(done[k] for k in keys)  # fully completed: keep rows
        else:
            pending.append(t)  # partial tasks recompute all their rows

    def run(task):
        return _sweep_task(task, grid, threads=1)

    for new in map_ordered(run, pending, threads):
        records.extend(new)
        if out_path is not None:
            ordered = sorted(records, key=lambda r: r.sort_key())
            write_results_csv(ordered, out_path, grid_hash_value=ghash,
                              timings=timings)
    records.sort(key=lambda r: r.sort_key())
    return records


def _fmt_float(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_results_csv(records, path: str | Path,
                      grid_hash_value: str | None = None,
                      timings: bool = True) -> None:
    """One record per line in the canonical column order."""
    import csv

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        if grid_hash_value is not None:
            fh.write(f"# grid_hash={grid_hash_value}\n")
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in sorted(records, key=lambda x: x.sort_key()):
            c = r.config
            writer.writerow([
                r.class_name, r.backbone, c.family, c.level, c.subbands.key,
                repr(float(c.sigma)), repr(float(c.cov_reg)),
                _fmt_float(r.image_auc), _fmt_float(r.pixel_auc),
                repr(float(r.fit_s)) if timings else "0.0",
                repr(float(r.score_s)) if timings else "0.0",
                r.status,
            ])
    tmp.replace(path)


def read_results_csv(path: str | Path):
    """Returns (records, grid_hash or None)."""
    import csv

    path = Path(path)
    ghash = None
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("# grid_hash="):
            ghash = first.strip().split("=", 1)[1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise ConfigError(f"{path}: unexpected results header {header}")
        records = []
        for row in reader:
            vals = dict(zip(RESULT_COLUMNS, row))
            cfg = WaveletConfig(
                family=vals["wavelet"],
                level=int(vals["level"]),
                subbands=SubbandSet.parse(vals["subbands"]),
                sigma=float(vals["sigma"]),
                cov_reg=float(vals["cov_reg"]),
            )
            records.append(SweepRecord(
                class_name=vals["class"],
                backbone=vals["backbone"],
                config=cfg,
                image_auc=float(vals["image_auc"]) if vals["image_auc"] else None,
                pixel_auc=float(vals["pixel_auc"]) if vals["pixel_auc"] else None,
                fit_s=float(vals["fit_s"]),
                score_s=float(vals["score_s"]),
                status=vals["status"],
            ))
    return records, ghash


# ---------------------------------------------------------------------------
# aggregation and statistics

def _metric(record: SweepRecord, metric: str) -> float:
    value = getattr(record, metric)
    if value is None:
        raise MetricUndefinedError(f"record has no {metric}")
    return value


def _sample_std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def aggregate_by_subband(records) -> list[dict]:
    """Mean/std of both AUCs per subband combination, best image AUC first."""
    ok = [r for r in records if r.ok]
    if not ok:
        raise MetricUndefinedError("no successful records to aggregate")
    groups: dict[str, list[SweepRecord]] = {}
    for r in ok:
        groups.setdefault(r.config.subbands.key, []).append(r)
    rows = []
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.sort_key())  # input-order independent
        image = np.array([r.image_auc for r in recs])
        pixel = np.array([r.pixel_auc for r in recs])
        rows.append({
            "subbands": key,
            "image_mean": float(image.mean()),
            "image_std": _sample_std(image),
            "pixel_mean": float(pixel.mean()),
            "pixel_std": _sample_std(pixel),
            "n": len(recs),
        })
    rows.sort(key=lambda row: (-row["image_mean"], row["subbands"]))
    return rows


def welch_p_value(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Welch t-test p-value with degenerate-variance handling."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    if va == 0.0 and vb == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(_scipy_stats.ttest_ind(a, b, equal_var=False).pvalue)


@dataclass(frozen=True)
class ImpactRow:
    component: str
    metric: str
    mean_with: float
    mean_without: float
    difference: float
    p_value: float
    n_with: int
    n_without: int


def component_impact(records, component: str, metric: str) -> ImpactRow:
    """Mean metric with vs without a subband across successful records."""
    ok = [r for r in records if r.ok]
    with_vals = np.array([_metric(r, metric) for r in ok
                          if component in r.config.subbands])
    without_vals = np.array([_metric(r, metric) for r in ok
                             if component not in r.config.subbands])
    if with_vals.size == 0 or without_vals.size == 0:
        raise MetricUndefinedError(
            f"component {component}: empty partition "
            f"({with_vals.size} with, {without_vals.size} without)"
        )
    mean_with = float(with_vals.mean())
    mean_without = float(without_vals.mean())
    return ImpactRow(
        component=component,
        metric=metric,
        mean_with=mean_with,
        mean_without=mean_without,
        difference=mean_with - mean_without,
        p_value=welch_p_value(with_vals, without_vals),
        n_with=int(with_vals.size),
        n_without=int(without_vals.size),
    )


def best_per_class(records, primary: str = "image_auc",
                   tiebreak: str = "pixel_auc"):
    """Per class, the record maximizing (primary, tiebreak) lexicographically.

    Returns (rows, averages): rows sorted by primary descending, and the
    column means over the selected rows (primary first, coupled metric next).
    """
    ok = [r for r in records if r.ok]
    if not ok:
        raise MetricUndefinedError("no successful records")
    def _better(a: SweepRecord, b: SweepRecord) -> bool:
        ka = (_metric(a, primary), _metric(a, tiebreak))
        kb = (_metric(b, primary), _metric(b, tiebreak))
        if ka != kb:
            return ka > kb
        return a.sort_key() < b.sort_key()  # full tie: fixed canonical choice

    best: dict[str, SweepRecord] = {}
    for r in ok:
        cur = best.get(r.class_name)
        if cur is None or _better(r, cur):
            best[r.class_name] = r
    rows = sorted(best.values(),
                  key=lambda r: (-_metric(r, primary), r.class_name))
    averages = {
        primary: float(np.mean([_metric(r, primary) for r in rows])),
        tiebreak: float(np.mean([_metric(r, tiebreak) for r in rows])),
    }
    return rows, averages
