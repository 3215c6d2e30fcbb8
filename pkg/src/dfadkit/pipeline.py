"""Stage orchestration over flat CSV artifacts.

Every stage reads the previous stage's files from the output directory,
writes its own through a ``.partial`` temporary that is renamed only on
success (an interrupted stage leaves the marker behind), and updates
``manifest.json`` with its row counts. The manifest carries the config
echo and counts only, nothing volatile, so reruns are byte-identical.

Stage order: clean -> estimate -> segment -> smooth -> metrics -> stats
-> report. ``synth`` produces pipeline inputs with known ground truth.
"""

from __future__ import annotations

import csv
import json
import os
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace
from datetime import date, timedelta
from pathlib import Path

from .data_model import (
    BUOY_HEADER,
    BasinBounds,
    DEFAULT_BASIN_BOUNDS,
    assign_basin,
    dedupe_and_drop_missing,
    filter_depth,
    filter_velocity,
    format_utc,
    parse_bathymetry,
    parse_buoy_csv,
    parse_logbook_csv,
)
from .estimation import (
    DEFAULT_SERIES_MAX_MISSING,
    DEFAULT_TONNAGE_THRESHOLD,
    DEFAULT_WINDOW_MAX_MISSING,
    DailySeries,
    aggregate_daily,
    fill_gaps,
    hourly_series,
    impute_zero,
    load_external_estimates,
)
from .metrics import (
    DEFAULT_EDGE_DAYS,
    DEFAULT_MIN_SEGMENT_DAYS,
    collect_samples,
    compute_binary_metrics,
    detect_episodes,
)
from .report import (
    BOX_HEADER,
    NEVER_COLONIZED_HEADER,
    SUMMARY_ATDT_HEADER,
    SUMMARY_BINARY_HEADER,
    VIOLIN_HEADER,
    build_box_rows,
    build_never_colonized,
    build_summary_atdt,
    build_summary_binary,
    build_violin_rows,
    group_samples,
    render_figures,
)
from .segmentation import generate_segments, slice_days
from .smoothing import DEFAULT_LAMBDA_GRID, select_lambda_gcv, smooth_binary
from .stats import dunn_posthoc, kruskal_wallis, mann_whitney
from .synthgen import SynthConfig, generate_dataset

CLEANED_FILE = "cleaned.csv"
REJECTS_FILE = "rejects.csv"
DAILY_FILE = "daily.csv"
SEGMENTS_FILE = "segments.csv"
SEGMENT_DAILY_FILE = "segment_daily.csv"
SMOOTHED_FILE = "smoothed.csv"
SAMPLES_FILE = "samples.csv"
EPISODES_FILE = "episodes.csv"
TESTS_FILE = "tests.csv"
SUMMARY_BINARY_FILE = "summary_binary.csv"
SUMMARY_ATDT_FILE = "summary_atdt.csv"
NEVER_COLONIZED_FILE = "never_colonized.csv"
BOX_FILE = "box.csv"
VIOLIN_FILE = "violin.csv"
FIGURES_DIR = "figures"
MANIFEST_FILE = "manifest.json"

SYNTH_BUOY_FILE = "buoys.csv"
SYNTH_LOGBOOK_FILE = "logbook.csv"
SYNTH_TRUTH_FILE = "ground_truth.csv"
SYNTH_BATHY_FILE = "bathymetry.txt"

REJECTS_HEADER = ["stage", "detail", "rows_removed"]
DAILY_HEADER = ["buoy_id", "date", "binary", "tonnage", "imputed_flag"]
SEGMENTS_HEADER = [
    "segment_id", "buoy_id", "start", "end", "start_cause", "end_cause",
    "basin", "first_day", "n_days",
]
SEGMENT_DAILY_HEADER = ["segment_id", "date", "binary", "tonnage"]
SMOOTHED_HEADER = [
    "segment_id", "date", "binary_raw", "binary_smooth",
    "tonnage_raw", "tonnage_smooth",
]
EPISODES_HEADER = [
    "segment_id", "run_start", "peak_day", "run_end", "peak_tonnage",
    "at", "dt", "at_censored", "dt_censored",
]
SAMPLES_HEADER = ["metric", "basin", "segment_id", "value"]
TESTS_HEADER = [
    "test", "metric", "group_a", "group_b", "statistic",
    "p_raw", "p_adjusted", "exact",
]

NAMED_BASINS = ("Atlantic", "Indian", "Pacific")
UNASSIGNED_BASIN = "unassigned"

MIN_SPLINE_DAYS = 10


class PipelineInputError(Exception):
    """Unreadable or malformed input; the CLI maps this to exit code 2."""


class StageFailure(Exception):
    """A stage blew up mid-flight; exit code 3. Carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    buoy_path: str | None = None
    logbook_path: str | None = None
    bathymetry_path: str | None = None
    estimates_path: str | None = None
    out_dir: str = "out"
    tonnage_threshold: float = DEFAULT_TONNAGE_THRESHOLD
    max_speed_knots: float = 3.0
    min_depth_m: float = 200.0
    gap_hours: float = 24.0
    min_segment_hours: float = 72.0
    window_max_missing: float = DEFAULT_WINDOW_MAX_MISSING
    series_max_missing: float = DEFAULT_SERIES_MAX_MISSING
    edge_days: int = DEFAULT_EDGE_DAYS
    min_segment_days: int = DEFAULT_MIN_SEGMENT_DAYS
    basin_bounds: BasinBounds = DEFAULT_BASIN_BOUNDS
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    dunn_adjust: str = "holm"
    workers: int = 1

    def out(self, name: str) -> Path:
        return Path(self.out_dir) / name


def config_to_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    d["lambda_grid"] = [float(v) for v in cfg.lambda_grid]
    return d


def config_from_dict(data: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise PipelineInputError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    if "basin_bounds" in kwargs and isinstance(kwargs["basin_bounds"], dict):
        kwargs["basin_bounds"] = BasinBounds(**kwargs["basin_bounds"])
    if "lambda_grid" in kwargs:
        kwargs["lambda_grid"] = tuple(float(v) for v in kwargs["lambda_grid"])
    return replace(cfg, **kwargs)


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise PipelineInputError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise PipelineInputError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise PipelineInputError(f"config {path} must hold a JSON object")
    return config_from_dict(data, base)


@contextmanager
def atomic_write(path: Path):
    """Write through <path>.partial; rename on success only, so a crashed
    stage is visible as a stray .partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".partial")
    fh = open(tmp, "w", encoding="utf-8", newline="")
    try:
        yield fh
    except BaseException:
        fh.close()
        raise
    fh.close()
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> int:
    n = 0
    with atomic_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
            n += 1
    return n


def _read_csv(path: Path, header: list[str]) -> list[list[str]]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise PipelineInputError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise PipelineInputError(f"{path} has header {got!r}, expected {header!r}")
        return [row for row in reader if row]


def update_manifest(cfg: PipelineConfig, stage: str, counts: dict) -> None:
    path = cfg.out(MANIFEST_FILE)
    manifest = {"config": config_to_dict(cfg), "stages": {}}
    if path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            old = json.load(fh)
        manifest["stages"] = old.get("stages", {})
    manifest["config"] = config_to_dict(cfg)
    manifest["stages"][stage] = counts
    with atomic_write(path) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- synth


def stage_synth(cfg: PipelineConfig, synth: SynthConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = generate_dataset(
        synth,
        out / SYNTH_BUOY_FILE,
        out / SYNTH_LOGBOOK_FILE,
        out / SYNTH_TRUTH_FILE,
        out / SYNTH_BATHY_FILE,
        workers=cfg.workers,
    )
    update_manifest(cfg, "synth", counts)
    return counts


# ---------------------------------------------------------------- clean


def stage_clean(cfg: PipelineConfig) -> dict:
    if not cfg.buoy_path:
        raise PipelineInputError("clean: no buoy file configured")
    try:
        records, parse_rejects = parse_buoy_csv(cfg.buoy_path)
        events_count = 0
        logbook_rejects = []
        if cfg.logbook_path:
            events, logbook_rejects = parse_logbook_csv(cfg.logbook_path)
            events_count = len(events)
        grid = parse_bathymetry(cfg.bathymetry_path) if cfg.bathymetry_path else None
    except OSError as e:
        raise PipelineInputError(str(e)) from e
    except ValueError as e:
        raise PipelineInputError(str(e)) from e

    rows_in = len(records) + len(parse_rejects)
    deduped = dedupe_and_drop_missing(records)
    n_dupe = len(records) - len(deduped)

    n_unknown_depth = 0
    if grid is not None:
        depth_kept, n_unknown_depth = filter_depth(deduped, grid, cfg.min_depth_m)
    else:
        depth_kept = deduped
    n_shallow = len(deduped) - len(depth_kept)

    by_buoy: dict[str, list] = {}
    for r in depth_kept:
        by_buoy.setdefault(r.buoy_id, []).append(r)
    cleaned = []
    for bid in sorted(by_buoy):
        recs = sorted(by_buoy[bid], key=lambda r: r.timestamp)
        cleaned.extend(filter_velocity(recs, cfg.max_speed_knots))
    n_fast = len(depth_kept) - len(cleaned)

    def cleaned_rows():
        for r in cleaned:
            if r.layers is None:
                tail = "," * 10
            else:
                tail = "".join("," + _fmt(v) for v in r.layers)
            yield (
                f"{r.buoy_id},{format_utc(r.timestamp)},"
                f"{_fmt(r.lat)},{_fmt(r.lon)}{tail}"
            )

    with atomic_write(cfg.out(CLEANED_FILE)) as fh:
        fh.write(",".join(BUOY_HEADER) + "\n")
        for row in cleaned_rows():
            fh.write(row + "\n")

    reject_rows = []
    for lineno, reason in parse_rejects:
        reject_rows.append(["parse", f"buoy line {lineno}: {reason}", "1"])
    for lineno, reason in logbook_rejects:
        reject_rows.append(["parse", f"logbook line {lineno}: {reason}", "1"])
    if n_dupe:
        reject_rows.append(["dedupe", "duplicate row or missing buoy_id", str(n_dupe)])
    if n_shallow:
        reject_rows.append(["depth", f"shallower than {cfg.min_depth_m:g} m", str(n_shallow)])
    if n_fast:
        reject_rows.append(["velocity", f"day mean over {cfg.max_speed_knots:g} kn", str(n_fast)])
    _write_csv(cfg.out(REJECTS_FILE), REJECTS_HEADER, reject_rows)

    counts = {
        "rows_in": rows_in,
        "parse_rejects": len(parse_rejects) + len(logbook_rejects),
        "after_dedupe": len(deduped),
        "after_depth": len(depth_kept),
        "after_velocity": len(cleaned),
        "rows_out": len(cleaned),
        "unknown_depth_kept": n_unknown_depth,
        "logbook_events": events_count,
    }
    update_manifest(cfg, "clean", counts)
    return counts


# ------------------------------------------------------------- estimate


def _estimate_task(args):
    bid, records, threshold, window_max_missing = args
    est = hourly_series(
        impute_zero(records),
        threshold=threshold,
        max_missing_fraction=window_max_missing,
    )
    return bid, aggregate_daily(est), len(est)


def stage_estimate(cfg: PipelineConfig) -> dict:
    records, rejects = parse_buoy_csv(cfg.out(CLEANED_FILE))
    if rejects:
        raise StageFailure("estimate", ValueError(f"{len(rejects)} bad rows in cleaned file"))
    external = {}
    n_external_rejects = 0
    if cfg.estimates_path:
        try:
            loaded, est_rejects = load_external_estimates(cfg.estimates_path)
        except (OSError, ValueError) as e:
            raise PipelineInputError(str(e)) from e
        n_external_rejects = len(est_rejects)
        for e in loaded:
            external.setdefault(e.buoy_id, []).append(e)
    by_buoy: dict[str, list] = {}
    for r in records:
        by_buoy.setdefault(r.buoy_id, []).append(r)

    n_hourly = 0
    dailies: list[DailySeries] = []
    tasks = [
        (bid, by_buoy[bid], cfg.tonnage_threshold, cfg.window_max_missing)
        for bid in sorted(by_buoy)
        if bid not in external
    ]
    results = []
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_estimate_task, tasks, chunksize=4))
    else:
        results = [_estimate_task(t) for t in tasks]
    for bid, daily, n_est in results:
        n_hourly += n_est
        if daily is not None:
            dailies.append(daily)
    # ready-made estimates replace the window estimator for their buoys
    for bid in sorted(external):
        daily = aggregate_daily(sorted(external[bid], key=lambda e: e.timestamp))
        n_hourly += len(external[bid])
        if daily is not None:
            dailies.append(daily)
    dailies.sort(key=lambda d: d.buoy_id)

    def daily_rows():
        for d in dailies:
            for i in range(len(d)):
                b = d.binary[i]
                t = d.tonnage[i]
                yield (
                    f"{d.buoy_id},{d.day(i).isoformat()},"
                    f"{'' if b is None else b},"
                    f"{'' if t is None else _fmt(t)},"
                    f"{1 if d.imputed[i] else 0}"
                )

    n_rows = 0
    with atomic_write(cfg.out(DAILY_FILE)) as fh:
        fh.write(",".join(DAILY_HEADER) + "\n")
        for row in daily_rows():
            fh.write(row + "\n")
            n_rows += 1

    counts = {
        "buoys": len(by_buoy),
        "hourly_estimates": n_hourly,
        "daily_rows": n_rows,
        "buoys_with_series": len(dailies),
        "external_rejects": n_external_rejects,
    }
    update_manifest(cfg, "estimate", counts)
    return counts


def _load_daily(cfg: PipelineConfig) -> dict[str, DailySeries]:
    rows = _read_csv(cfg.out(DAILY_FILE), DAILY_HEADER)
    acc: dict[str, list[tuple[date, int | None, float | None, bool]]] = {}
    for bid, day_s, b_s, t_s, imp_s in rows:
        acc.setdefault(bid, []).append(
            (
                date.fromisoformat(day_s),
                None if b_s == "" else int(b_s),
                None if t_s == "" else float(t_s),
                imp_s == "1",
            )
        )
    out: dict[str, DailySeries] = {}
    for bid, items in acc.items():
        items.sort(key=lambda x: x[0])
        d0, d1 = items[0][0], items[-1][0]
        n = (d1 - d0).days + 1
        binary: list[int | None] = [None] * n
        tonnage: list[float | None] = [None] * n
        imputed = [False] * n
        for day, b, t, imp in items:
            i = (day - d0).days
            binary[i], tonnage[i], imputed[i] = b, t, imp
        out[bid] = DailySeries(bid, d0, binary, tonnage, imputed)
    return out


# -------------------------------------------------------------- segment


def stage_segment(cfg: PipelineConfig) -> dict:
    records, _ = parse_buoy_csv(cfg.out(CLEANED_FILE))
    events = []
    if cfg.logbook_path:
        try:
            events, _ = parse_logbook_csv(cfg.logbook_path)
        except (OSError, ValueError) as e:
            raise PipelineInputError(str(e)) from e
    dailies = _load_daily(cfg)

    by_buoy: dict[str, list] = {}
    for r in records:
        by_buoy.setdefault(r.buoy_id, []).append(r)
    events_by: dict[str, list] = {}
    for e in events:
        events_by.setdefault(e.buoy_id, []).append(e)

    n_candidates = 0
    seg_rows = []
    seg_daily_rows = []
    n_dropped_coverage = 0
    for bid in sorted(by_buoy):
        recs = sorted(by_buoy[bid], key=lambda r: r.timestamp)
        times = [r.timestamp for r in recs]
        cands = generate_segments(
            times,
            sorted(events_by.get(bid, []), key=lambda e: e.timestamp),
            gap_hours=cfg.gap_hours,
            min_segment_hours=cfg.min_segment_hours,
        )
        n_candidates += len(cands)
        daily = dailies.get(bid)
        if daily is None:
            continue
        kept = 0
        for cand in cands:
            sliced = slice_days(cand, daily)
            if sliced is None:
                continue
            first_day, binary, tonnage = sliced
            filled = fill_gaps(binary, tonnage, cfg.series_max_missing)
            if filled is None:
                n_dropped_coverage += 1
                continue
            fb, ft = filled
            seg_id = f"{bid}-S{kept:02d}"
            kept += 1
            pos = next((r for r in recs if r.timestamp >= cand.start), recs[-1])
            basin = assign_basin(pos.lat, pos.lon, cfg.basin_bounds)
            label = basin.value if basin is not None else UNASSIGNED_BASIN
            seg_rows.append(
                [
                    seg_id, bid, format_utc(cand.start), format_utc(cand.end),
                    cand.start_cause.value, cand.end_cause.value, label,
                    first_day.isoformat(), str(len(fb)),
                ]
            )
            for i, (b, t) in enumerate(zip(fb, ft)):
                d = first_day + timedelta(days=i)
                seg_daily_rows.append([seg_id, d.isoformat(), str(b), _fmt(t)])

    _write_csv(cfg.out(SEGMENTS_FILE), SEGMENTS_HEADER, seg_rows)
    _write_csv(cfg.out(SEGMENT_DAILY_FILE), SEGMENT_DAILY_HEADER, seg_daily_rows)
    counts = {
        "candidates": n_candidates,
        "segments": len(seg_rows),
        "dropped_low_coverage": n_dropped_coverage,
        "segment_days": len(seg_daily_rows),
    }
    update_manifest(cfg, "segment", counts)
    return counts


# --------------------------------------------------------------- smooth


def _load_segment_daily(cfg: PipelineConfig):
    rows = _read_csv(cfg.out(SEGMENT_DAILY_FILE), SEGMENT_DAILY_HEADER)
    out: dict[str, list[tuple[str, int, float]]] = {}
    order: list[str] = []
    for seg_id, day_s, b_s, t_s in rows:
        if seg_id not in out:
            out[seg_id] = []
            order.append(seg_id)
        out[seg_id].append((day_s, int(b_s), float(t_s)))
    return order, out


def _smooth_task(args):
    seg_id, days, binary, tonnage, lambda_grid = args
    b_smooth = smooth_binary(binary)
    if len(tonnage) >= MIN_SPLINE_DAYS:
        fit = select_lambda_gcv(tonnage, grid=lambda_grid)
        t_smooth = [float(v) for v in fit.fitted]
    else:
        # too short for a stable spline; the raw series passes through
        t_smooth = [float(v) for v in tonnage]
    return seg_id, days, binary, b_smooth, tonnage, t_smooth


def stage_smooth(cfg: PipelineConfig) -> dict:
    order, seg_daily = _load_segment_daily(cfg)
    tasks = []
    for seg_id in order:
        items = seg_daily[seg_id]
        tasks.append(
            (
                seg_id,
                [d for d, _, _ in items],
                [b for _, b, _ in items],
                [t for _, _, t in items],
                tuple(cfg.lambda_grid),
            )
        )
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_smooth_task, tasks, chunksize=16))
    else:
        results = [_smooth_task(t) for t in tasks]

    n_rows = 0
    with atomic_write(cfg.out(SMOOTHED_FILE)) as fh:
        fh.write(",".join(SMOOTHED_HEADER) + "\n")
        for seg_id, days, b_raw, b_sm, t_raw, t_sm in results:
            for d, br, bs, tr, ts in zip(days, b_raw, b_sm, t_raw, t_sm):
                fh.write(f"{seg_id},{d},{br},{bs},{_fmt(tr)},{_fmt(ts)}\n")
                n_rows += 1

    counts = {"segments": len(tasks), "rows": n_rows}
    update_manifest(cfg, "smooth", counts)
    return counts


# -------------------------------------------------------------- metrics


def _load_segment_meta(cfg: PipelineConfig) -> dict[str, tuple[str, str, str]]:
    """segment_id -> (buoy_id, start_cause, basin)."""
    rows = _read_csv(cfg.out(SEGMENTS_FILE), SEGMENTS_HEADER)
    return {r[0]: (r[1], r[4], r[6]) for r in rows}


def _load_smoothed(cfg: PipelineConfig):
    rows = _read_csv(cfg.out(SMOOTHED_FILE), SMOOTHED_HEADER)
    out: dict[str, dict[str, list]] = {}
    order: list[str] = []
    for seg_id, _day, _br, bs, _tr, ts in rows:
        if seg_id not in out:
            out[seg_id] = {"binary": [], "tonnage": []}
            order.append(seg_id)
        out[seg_id]["binary"].append(int(bs))
        out[seg_id]["tonnage"].append(float(ts))
    return order, out


def stage_metrics(cfg: PipelineConfig) -> dict:
    meta = _load_segment_meta(cfg)
    order, smoothed = _load_smoothed(cfg)

    metric_pairs = []
    episode_pairs = []
    episode_rows = []
    for seg_id in order:
        if seg_id not in meta:
            raise StageFailure(
                "metrics", ValueError(f"{seg_id} in smoothed file but not in segments file")
            )
        _bid, start_cause, basin = meta[seg_id]
        series = smoothed[seg_id]
        m = compute_binary_metrics(seg_id, series["binary"], start_cause == "deployment")
        metric_pairs.append((m, basin))
        eps = detect_episodes(
            seg_id,
            series["tonnage"],
            threshold=cfg.tonnage_threshold,
            edge_days=cfg.edge_days,
            min_segment_days=cfg.min_segment_days,
        )
        episode_pairs.append((eps, basin))
        for e in eps:
            episode_rows.append(
                [
                    seg_id, str(e.run_start), str(e.peak_day), str(e.run_end),
                    _fmt(e.peak_tonnage),
                    "" if e.at_days is None else str(e.at_days),
                    "" if e.dt_days is None else str(e.dt_days),
                    "1" if e.at_censored else "0",
                    "1" if e.dt_censored else "0",
                ]
            )

    samples = collect_samples(metric_pairs, episode_pairs)
    sample_rows = [
        [s.metric, s.basin, s.segment_id, _fmt(s.value)] for s in samples
    ]
    _write_csv(cfg.out(SAMPLES_FILE), SAMPLES_HEADER, sample_rows)
    _write_csv(cfg.out(EPISODES_FILE), EPISODES_HEADER, episode_rows)
    counts = {
        "segments": len(order),
        "samples": len(sample_rows),
        "episodes": len(episode_rows),
    }
    update_manifest(cfg, "metrics", counts)
    return counts


# ---------------------------------------------------------------- stats


Sample = namedtuple("Sample", ["metric", "basin", "segment_id", "value"])

ALL_METRICS = ("ST", "CT", "aCRT", "aCAT", "OR", "AT", "DT")
PAIRWISE_METRICS = ("aCRT", "aCAT")


def _load_samples(cfg: PipelineConfig) -> list[Sample]:
    rows = _read_csv(cfg.out(SAMPLES_FILE), SAMPLES_HEADER)
    return [Sample(m, b, s, float(v)) for m, b, s, v in rows]


def stage_stats(cfg: PipelineConfig) -> dict:
    samples = _load_samples(cfg)
    by = group_samples(samples)
    test_rows = []
    for metric in ALL_METRICS:
        groups = {
            basin: by[(metric, basin)]
            for basin in NAMED_BASINS
            if by.get((metric, basin))
        }
        total_n = sum(len(v) for v in groups.values())
        if len(groups) >= 2 and total_n >= 3:
            kw = kruskal_wallis(groups.values())
            test_rows.append(
                [
                    "kruskal_wallis", metric, "all", "", _fmt(kw.statistic),
                    _fmt(kw.p_value), _fmt(kw.p_value),
                    "1" if kw.method == "exact" else "0",
                ]
            )
            for pr in dunn_posthoc(groups, adjust=cfg.dunn_adjust):
                test_rows.append(
                    [
                        "dunn", metric, pr.group_a, pr.group_b, _fmt(pr.statistic),
                        _fmt(pr.p_raw), _fmt(pr.p_adjusted), "0",
                    ]
                )
        if metric in PAIRWISE_METRICS and len(groups) >= 2:
            labels = list(groups)
            for i in range(len(labels)):
                for j in range(i + 1, len(labels)):
                    mw = mann_whitney(groups[labels[i]], groups[labels[j]])
                    test_rows.append(
                        [
                            "mann_whitney", metric, labels[i], labels[j],
                            _fmt(mw.statistic), _fmt(mw.p_value), _fmt(mw.p_value),
                            "1" if mw.method == "exact" else "0",
                        ]
                    )
    _write_csv(cfg.out(TESTS_FILE), TESTS_HEADER, test_rows)
    counts = {"tests": len(test_rows)}
    update_manifest(cfg, "stats", counts)
    return counts


# --------------------------------------------------------------- report


def stage_report(cfg: PipelineConfig) -> dict:
    samples = _load_samples(cfg)
    by = group_samples(samples)
    meta = _load_segment_meta(cfg)
    order, smoothed = _load_smoothed(cfg)

    metric_pairs = []
    for seg_id in order:
        if seg_id not in meta:
            raise StageFailure(
                "report", ValueError(f"{seg_id} in smoothed file but not in segments file")
            )
        _bid, start_cause, basin = meta[seg_id]
        m = compute_binary_metrics(
            seg_id, smoothed[seg_id]["binary"], start_cause == "deployment"
        )
        metric_pairs.append((m, basin))

    _write_csv(cfg.out(SUMMARY_BINARY_FILE), SUMMARY_BINARY_HEADER, build_summary_binary(by))
    _write_csv(cfg.out(SUMMARY_ATDT_FILE), SUMMARY_ATDT_HEADER, build_summary_atdt(by))
    _write_csv(
        cfg.out(NEVER_COLONIZED_FILE), NEVER_COLONIZED_HEADER,
        build_never_colonized(metric_pairs),
    )
    _write_csv(cfg.out(BOX_FILE), BOX_HEADER, build_box_rows(by))
    _write_csv(cfg.out(VIOLIN_FILE), VIOLIN_HEADER, build_violin_rows(by))
    fig_dir = cfg.out(FIGURES_DIR)
    fig_dir.mkdir(parents=True, exist_ok=True)
    figures = render_figures(by, fig_dir)
    counts = {"samples": len(samples), "figures": len(figures)}
    update_manifest(cfg, "report", counts)
    return counts


# ------------------------------------------------------------------ run


STAGES = (
    ("clean", stage_clean),
    ("estimate", stage_estimate),
    ("segment", stage_segment),
    ("smooth", stage_smooth),
    ("metrics", stage_metrics),
    ("stats", stage_stats),
    ("report", stage_report),
)


def run_stage(name: str, cfg: PipelineConfig) -> dict:
    fn = dict(STAGES)[name]
    try:
        return fn(cfg)
    except (PipelineInputError, StageFailure):
        raise
    except Exception as e:
        raise StageFailure(name, e) from e


def run_pipeline(cfg: PipelineConfig) -> dict[str, dict]:
    """All stages in order; returns each stage's manifest counts."""
    results = {}
    for name, _fn in STAGES:
        results[name] = run_stage(name, cfg)
    return results
