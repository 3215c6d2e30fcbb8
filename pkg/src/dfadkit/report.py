"""Report tables, plot data and figures.

Two summary tables (run-length metrics in whole tonnes/days, attraction
and departure times with one decimal), never-colonized rates per basin,
and the box/violin numbers behind the figures. OR is a fraction in the
sample rows but reported as a percentage in the summary table.

Figures are rendered from the exported numbers, never from raw samples,
so the PNG content is exactly what the CSVs say.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stats import summarize

METRIC_ORDER = ("ST", "CT", "aCRT", "aCAT", "OR")
BASIN_ORDER = ("Atlantic", "Indian", "Pacific")
VIOLIN_GRID_POINTS = 128
WHISKER_FACTOR = 1.5

SUMMARY_BINARY_HEADER = ["metric", "basin", "count", "mean", "sd", "median", "iqr"]
SUMMARY_ATDT_HEADER = [
    "basin",
    "at_count", "at_mean", "at_sd", "at_median", "at_iqr",
    "dt_count", "dt_mean", "dt_sd", "dt_median", "dt_iqr",
]
NEVER_COLONIZED_HEADER = ["basin", "deployment_segments", "never_colonized", "rate_pct"]
BOX_HEADER = [
    "metric", "basin", "count", "whisker_low", "q1", "median", "q3",
    "whisker_high", "outliers",
]
VIOLIN_HEADER = ["metric", "basin", "x", "density", "q1", "median", "q3"]


def basin_sort_key(basin: str):
    try:
        return (0, BASIN_ORDER.index(basin))
    except ValueError:
        return (1, basin)


def group_samples(samples) -> dict[tuple[str, str], list[float]]:
    by: dict[tuple[str, str], list[float]] = {}
    for s in samples:
        by.setdefault((s.metric, s.basin), []).append(s.value)
    return by


def _cells(by, metric):
    basins = sorted({b for m, b in by if m == metric}, key=basin_sort_key)
    return [(b, by[(metric, b)]) for b in basins]


def _fmt_int(x: float) -> str:
    return str(int(round(x)))


def _fmt1(x: float) -> str:
    return f"{x:.1f}"


def build_summary_binary(by) -> list[list[str]]:
    """Rows for the run-length metric table; sd blank when undefined."""
    rows = []
    for metric in METRIC_ORDER:
        for basin, values in _cells(by, metric):
            if metric == "OR":
                values = [100.0 * v for v in values]
            s = summarize(values)
            sd = "" if math.isnan(s.sd) else _fmt_int(s.sd)
            rows.append(
                [metric, basin, str(s.n), _fmt_int(s.mean), sd,
                 _fmt1(s.median), _fmt1(s.q3 - s.q1)]
            )
    return rows


def build_summary_atdt(by) -> list[list[str]]:
    basins = sorted(
        {b for m, b in by if m in ("AT", "DT")}, key=basin_sort_key
    )
    rows = []
    for basin in basins:
        cols = [basin]
        for metric in ("AT", "DT"):
            values = by.get((metric, basin))
            if not values:
                cols += ["0", "", "", "", ""]
                continue
            s = summarize(values)
            sd = "" if math.isnan(s.sd) else _fmt1(s.sd)
            cols += [str(s.n), _fmt1(s.mean), sd, _fmt1(s.median), _fmt1(s.q3 - s.q1)]
        rows.append(cols)
    return rows


def build_never_colonized(metric_basin_pairs) -> list[list[str]]:
    """metric_basin_pairs: (BinaryMetrics, basin label) for every segment."""
    per: dict[str, list[int]] = {}
    for m, basin in metric_basin_pairs:
        if not m.deployment_started:
            continue
        cell = per.setdefault(basin, [0, 0])
        cell[0] += 1
        cell[1] += 0 if m.colonized else 1
    rows = []
    for basin in sorted(per, key=basin_sort_key):
        total, never = per[basin]
        rows.append([basin, str(total), str(never), _fmt1(100.0 * never / total)])
    return rows


@dataclass(slots=True, frozen=True)
class BoxStats:
    count: int
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float
    outliers: tuple[float, ...]


def box_stats(values) -> BoxStats:
    """Five-number box with 1.5 IQR whiskers snapped to data points."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
    span = WHISKER_FACTOR * (q3 - q1)
    inside = v[(v >= q1 - span) & (v <= q3 + span)]
    lo, hi = float(inside[0]), float(inside[-1])
    out = tuple(float(x) for x in v[(v < lo) | (v > hi)])
    return BoxStats(int(v.size), lo, q1, med, q3, hi, out)


def silverman_bandwidth(v: np.ndarray) -> float:
    if v.size < 2:
        return 0.0
    sd = float(np.std(v, ddof=1))
    iqr = float(np.quantile(v, 0.75) - np.quantile(v, 0.25))
    scale = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    return 0.9 * scale * v.size ** (-0.2)


def violin_data(values):
    """Gaussian-kernel density on a 128-point grid, or None when the
    sample is too small or degenerate for a bandwidth."""
    v = np.asarray(list(values), dtype=float)
    bw = silverman_bandwidth(v)
    if bw <= 0.0:
        return None
    grid = np.linspace(v.min() - 3.0 * bw, v.max() + 3.0 * bw, VIOLIN_GRID_POINTS)
    z = (grid[:, None] - v[None, :]) / bw
    dens = np.exp(-0.5 * z * z).mean(axis=1) / (bw * math.sqrt(2.0 * math.pi))
    q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
    return grid, dens, q1, med, q3


def build_box_rows(by) -> list[list[str]]:
    rows = []
    for metric in METRIC_ORDER + ("AT", "DT"):
        for basin, values in _cells(by, metric):
            b = box_stats(values)
            rows.append(
                [metric, basin, str(b.count), f"{b.whisker_low:.6g}",
                 f"{b.q1:.6g}", f"{b.median:.6g}", f"{b.q3:.6g}",
                 f"{b.whisker_high:.6g}",
                 ";".join(f"{x:.6g}" for x in b.outliers)]
            )
    return rows


def build_violin_rows(by) -> list[list[str]]:
    rows = []
    for metric in METRIC_ORDER + ("AT", "DT"):
        for basin, values in _cells(by, metric):
            vd = violin_data(values)
            if vd is None:
                continue
            grid, dens, q1, med, q3 = vd
            for x, d in zip(grid, dens):
                rows.append(
                    [metric, basin, f"{x:.6g}", f"{d:.6g}",
                     f"{q1:.6g}", f"{med:.6g}", f"{q3:.6g}"]
                )
    return rows


def render_figures(by, fig_dir) -> list[str]:
    """Box and violin PNGs per metric, basins side by side. Built from
    box_stats/violin_data output and written without volatile metadata,
    so rerendering is byte-identical."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    written = []
    for metric in METRIC_ORDER + ("AT", "DT"):
        cells = _cells(by, metric)
        if not cells:
            continue

        stats = []
        for basin, values in cells:
            b = box_stats(values)
            stats.append(
                {
                    "label": basin,
                    "whislo": b.whisker_low,
                    "q1": b.q1,
                    "med": b.median,
                    "q3": b.q3,
                    "whishi": b.whisker_high,
                    "fliers": list(b.outliers),
                }
            )
        fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(cells), 3.6))
        ax.bxp(stats, showfliers=True)
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} by ocean")
        path = str(fig_dir / f"box_{metric}.png")
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(path)

        violins = [(b, violin_data(values)) for b, values in cells]
        violins = [(b, vd) for b, vd in violins if vd is not None]
        if not violins:
            continue
        fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(violins), 3.6))
        for pos, (basin, (grid, dens, q1, med, q3)) in enumerate(violins, start=1):
            top = float(dens.max())
            if top <= 0.0:
                continue
            half = 0.4 * dens / top
            ax.fill_betweenx(grid, pos - half, pos + half, alpha=0.7, lw=0.5)
            ax.hlines([q1, med, q3], pos - 0.08, pos + 0.08, lw=0.8, color="black")
        ax.set_xticks(range(1, len(violins) + 1))
        ax.set_xticklabels([b for b, _ in violins])
        ax.set_ylabel(metric)
        ax.set_title(f"{metric} by ocean")
        path = str(fig_dir / f"violin_{metric}.png")
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
