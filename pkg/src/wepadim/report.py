"""Aligned-text report tables over sweep results.

Four table kinds: best average configuration per backbone (image- and
pixel-optimized), aggregate statistics per subband combination, per-component
impact, and per-class best configurations with an Average footer.
"""

from __future__ import annotations

import numpy as np

from .embed import SUBBAND_ORDER
from .errors import MetricUndefinedError
from .evaluation import (
    SweepRecord,
    aggregate_by_subband,
    best_per_class,
    component_impact,
)

_METRIC_TITLES = {"image_auc": "Image AUC", "pixel_auc": "Pixel AUC"}


def format_table(headers, rows) -> str:
    """Left-aligned text columns, two-space gutters."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _f(value: float) -> str:
    return f"{value:.4f}"


def backbone_best_table(records, metric: str = "image_auc") -> str:
    """Best mean-(metric) configuration per backbone, averaged over classes."""
    ok = [r for r in records if r.ok]
    if not ok:
        raise MetricUndefinedError("no successful records")
    other = "pixel_auc" if metric == "image_auc" else "image_auc"
    groups: dict[tuple, list[SweepRecord]] = {}
    for r in ok:
        c = r.config
        key = (r.backbone, c.family, c.level, c.subbands.key, c.sigma, c.cov_reg)
        groups.setdefault(key, []).append(r)
    best: dict[str, tuple] = {}
    for key, recs in groups.items():
        mean_primary = float(np.mean([getattr(r, metric) for r in recs]))
        mean_other = float(np.mean([getattr(r, other) for r in recs]))
        backbone = key[0]
        cur = best.get(backbone)
        if cur is None or (mean_primary, mean_other) > (cur[0], cur[1]):
            best[backbone] = (mean_primary, mean_other, key)
    rows = []
    for backbone in sorted(best, key=lambda b: -best[b][0]):
        mean_primary, mean_other, key = best[backbone]
        _, family, level, sbands, sigma, eps = key
        rows.append([backbone, _f(mean_primary), _f(mean_other), family, level,
                     sbands, sigma, eps])
    title = _METRIC_TITLES[metric]
    other_title = _METRIC_TITLES[other]
    table = format_table(
        ["Backbone", f"Avg. {title}", f"Avg. {other_title}", "Wavelet", "Level",
         "Subbands", "Sigma", "Cov. Reg."],
        rows,
    )
    return f"Best average {title} configuration by backbone\n{table}"


def subband_table(records) -> str:
    rows = [
        [row["subbands"], _f(row["image_mean"]), _f(row["image_std"]),
         _f(row["pixel_mean"]), _f(row["pixel_std"]), row["n"]]
        for row in aggregate_by_subband(records)
    ]
    table = format_table(
        ["Subbands", "Image AUC Mean", "Image AUC Std", "Pixel AUC Mean",
         "Pixel AUC Std", "N"],
        rows,
    )
    return f"Performance statistics by subband combination\n{table}"


def component_impact_table(records) -> str:
    rows = []
    for metric in ("image_auc", "pixel_auc"):
        for component in SUBBAND_ORDER:
            try:
                row = component_impact(records, component, metric)
            except MetricUndefinedError:
                continue  # component absent from (or present in) every record
            rows.append([
                _METRIC_TITLES[metric], component, _f(row.mean_with),
                _f(row.mean_without), f"{row.difference:+.4f}",
                f"{row.p_value:.4g}", row.n_with, row.n_without,
            ])
    table = format_table(
        ["Metric", "Component", "Mean with", "Mean without", "Difference",
         "p-value", "N with", "N without"],
        rows,
    )
    return f"Component impact (with vs without each subband)\n{table}"


def best_per_class_table(records, primary: str = "image_auc") -> str:
    tiebreak = "pixel_auc" if primary == "image_auc" else "image_auc"
    rows_rec, averages = best_per_class(records, primary, tiebreak)
    rows = []
    for r in rows_rec:
        c = r.config
        rows.append([
            r.class_name, _f(getattr(r, primary)), _f(getattr(r, tiebreak)),
            r.backbone, c.family, c.level, c.subbands.key, c.sigma, c.cov_reg,
        ])
    rows.append([
        "Average", _f(averages[primary]), _f(averages[tiebreak]),
        "", "", "", "", "", "",
    ])
    table = format_table(
        ["Class", _METRIC_TITLES[primary], _METRIC_TITLES[tiebreak], "Backbone",
         "Wavelet", "Level", "Subbands", "Sigma", "Cov. Reg."],
        rows,
    )
    title = _METRIC_TITLES[primary]
    return f"Best configuration per class (optimized for {title})\n{table}"


def full_report(records) -> str:
    """All report tables, separated by blank lines."""
    sections = [
        backbone_best_table(records, "image_auc"),
        backbone_best_table(records, "pixel_auc"),
        subband_table(records),
        component_impact_table(records),
        best_per_class_table(records, "image_auc"),
        best_per_class_table(records, "pixel_auc"),
    ]
    return "\n\n".join(sections) + "\n"
