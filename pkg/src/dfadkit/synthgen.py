"""Synthetic buoy fleets with known aggregation dynamics.

Each buoy drifts slowly inside one ocean basin and reports hourly. The
biomass signal alternates absence and presence episodes: during a
presence episode of duration D the noise-free envelope rises linearly
from 10 t to a sampled peak over rise_fraction * D, falls back to 10 t
over the rest, and ramps 10 t -> 0 t over 48 h shoulders on both sides.
Absence is 0 t. Hours whose signal lands under 1 t transmit GPS only
(no echo-sounder block), so the zero-imputation path gets exercised.

Ground truth is the noise-free signal pushed through the same
quantization the estimator applies (72 h centred window mean, then
daily medians); episodes are detected on that unsmoothed daily truth.
Per-buoy substreams come from (seed, buoy index), so serial and
parallel generation emit identical bytes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import lru_cache

import numpy as np

from .data_model import (
    BUOY_HEADER,
    LOGBOOK_HEADER,
    BuoyRecord,
    EventKind,
    LogbookEvent,
    format_utc,
)
from .estimation import DailySeries, aggregate_daily, hourly_series, impute_zero
from .metrics import Episode, detect_episodes

GROUND_TRUTH_HEADER = [
    "buoy_id", "episode_idx", "start", "peak_day", "end", "true_at", "true_dt",
]

EMISSION_FLOOR_T = 1.0
SHOULDER_HOURS = 48.0
MAX_TOTAL_T = 63.0

# basin slots cycled over buoy index: centre longitude sampling range
_BASIN_LON_RANGES = ((-60.0, -30.0), (55.0, 95.0), (-170.0, -120.0))


@dataclass(slots=True, frozen=True)
class SynthConfig:
    n_buoys: int = 10
    days_per_buoy: int = 90
    presence_median_days: float = 6.0
    presence_sigma: float = 0.5
    absence_median_days: float = 10.0
    absence_sigma: float = 0.5
    peak_min_tonnage: float = 15.0
    peak_max_tonnage: float = 40.0
    rise_fraction: float = 0.4
    noise_sd: float = 1.0
    diel_amplitude: float = 0.0
    event_rate: float = 0.0  # sets per 100 buoy-days
    seed: int = 0
    start: datetime = datetime(2022, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self):
        if self.n_buoys < 1 or self.days_per_buoy < 1:
            raise ValueError("need at least one buoy and one day")
        if self.presence_median_days <= 0 or self.absence_median_days <= 0:
            raise ValueError("duration medians must be positive")
        if self.presence_sigma < 0 or self.absence_sigma < 0:
            raise ValueError("duration sigmas must be non-negative")
        if not 0.0 < self.rise_fraction < 1.0:
            raise ValueError("rise_fraction must be in (0, 1)")
        if not 0.0 < self.peak_min_tonnage <= self.peak_max_tonnage:
            raise ValueError("bad peak tonnage range")
        if self.noise_sd < 0 or self.diel_amplitude < 0 or self.event_rate < 0:
            raise ValueError("noise, diel and event rate must be non-negative")
        if self.start.utcoffset() is None:
            raise ValueError("start must be timezone-aware")

    @property
    def total_hours(self) -> int:
        return self.days_per_buoy * 24


def buoy_ident(index: int) -> str:
    return f"SB{index:04d}"


def _rng_for(cfg: SynthConfig, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, index])


def sample_lognormal(rng, median: float, sigma: float, size=None):
    """Lognormal parameterized by its median (not the log-space mean)."""
    return rng.lognormal(math.log(median), sigma, size)


def _draw_track(cfg: SynthConfig, rng, index: int):
    """Start position and per-hour drift. Drift stays under 0.01 deg/h
    (~0.6 kn) and under 4 degrees total, so the track never leaves its
    basin or the tropical band and never trips the speed filter."""
    lon_lo, lon_hi = _BASIN_LON_RANGES[index % len(_BASIN_LON_RANGES)]
    lat0 = rng.uniform(-24.0, 24.0)
    lon0 = rng.uniform(lon_lo, lon_hi)
    cap = min(4.0 / cfg.total_hours, 0.01)
    dlat = rng.uniform(-cap, cap)
    dlon = rng.uniform(-cap, cap)
    return lat0, lon0, dlat, dlon


def _draw_episodes(cfg: SynthConfig, rng) -> list[tuple[float, float, float]]:
    """Alternating absence/presence spans; returns (start_h, end_h, peak_t)
    for each presence episode, the last possibly truncated by series end."""
    out = []
    h = float(cfg.total_hours)
    t = sample_lognormal(rng, cfg.absence_median_days, cfg.absence_sigma) * 24.0
    while t < h:
        dur = sample_lognormal(rng, cfg.presence_median_days, cfg.presence_sigma) * 24.0
        peak = rng.uniform(cfg.peak_min_tonnage, cfg.peak_max_tonnage)
        out.append((t, t + dur, peak))
        t += dur + sample_lognormal(rng, cfg.absence_median_days, cfg.absence_sigma) * 24.0
    return out


def _draw_sets(cfg: SynthConfig, rng) -> list[float]:
    n = int(rng.poisson(cfg.event_rate * cfg.days_per_buoy / 100.0))
    return sorted(float(v) for v in rng.uniform(0.0, cfg.total_hours, n))


def _envelope(cfg: SynthConfig, episodes, set_times) -> np.ndarray:
    """Noise-free hourly tonnage (diel excluded) on the hour grid."""
    hours = np.arange(cfg.total_hours, dtype=float)
    env = np.zeros(cfg.total_hours)
    for s, e, peak in episodes:
        pk = s + cfg.rise_fraction * (e - s)
        piece = np.zeros(cfg.total_hours)
        m = (hours >= s - SHOULDER_HOURS) & (hours < s)
        piece[m] = 10.0 * (hours[m] - (s - SHOULDER_HOURS)) / SHOULDER_HOURS
        m = (hours >= s) & (hours < pk)
        piece[m] = 10.0 + (peak - 10.0) * (hours[m] - s) / (pk - s)
        m = (hours >= pk) & (hours <= e)
        piece[m] = peak + (10.0 - peak) * (hours[m] - pk) / (e - pk)
        m = (hours > e) & (hours <= e + SHOULDER_HOURS)
        piece[m] = 10.0 * (1.0 - (hours[m] - e) / SHOULDER_HOURS)
        # a set empties the aggregation for the rest of the episode
        for ts in set_times:
            if s - SHOULDER_HOURS <= ts < e + SHOULDER_HOURS:
                piece[hours >= ts] = 0.0
                break
        env = np.maximum(env, piece)
    return env


def _signal(cfg: SynthConfig, env: np.ndarray, rng=None) -> np.ndarray:
    """Envelope + diel + optional noise, clipped, emission floor applied."""
    hours = np.arange(cfg.total_hours, dtype=float)
    sig = env.copy()
    if cfg.diel_amplitude > 0.0:
        sig = sig + cfg.diel_amplitude * np.sin(2.0 * np.pi * hours / 24.0)
    if rng is not None:
        sig = sig + rng.normal(0.0, cfg.noise_sd, cfg.total_hours)
    sig = np.clip(sig, 0.0, MAX_TOTAL_T)
    sig[sig < EMISSION_FLOOR_T] = 0.0
    return sig


@lru_cache(maxsize=4)
def _hour_strings(start: datetime, total_hours: int) -> tuple[str, ...]:
    return tuple(
        format_utc(start + timedelta(hours=h)) for h in range(total_hours)
    )


def _daily_from_signal(cfg: SynthConfig, bid: str, sig: np.ndarray) -> DailySeries | None:
    """Run a signal through the estimator's own quantization."""
    records = []
    for h in range(cfg.total_hours):
        v = sig[h]
        layers = None if v == 0.0 else (round(v / 10.0, 3),) * 10
        records.append(BuoyRecord(bid, cfg.start + timedelta(hours=h), 0.0, 0.0, layers))
    return aggregate_daily(hourly_series(impute_zero(records)))


def true_daily_series(cfg: SynthConfig, index: int) -> DailySeries | None:
    """Quantized noise-free daily truth for one buoy: the exact series the
    estimator would produce from a zero-noise transmission stream."""
    rng = _rng_for(cfg, index)
    _draw_track(cfg, rng, index)
    episodes = _draw_episodes(cfg, rng)
    sets = _draw_sets(cfg, rng)
    sig = _signal(cfg, _envelope(cfg, episodes, sets))
    return _daily_from_signal(cfg, buoy_ident(index), sig)


def ground_truth_episodes(cfg: SynthConfig, index: int) -> list[Episode]:
    daily = true_daily_series(cfg, index)
    if daily is None:
        return []
    return detect_episodes(buoy_ident(index), [float(t) for t in daily.tonnage])


def generate_buoy(cfg: SynthConfig, index: int) -> tuple[list[str], list[LogbookEvent], list[str]]:
    """One buoy's CSV rows, logbook events and ground-truth rows."""
    rng = _rng_for(cfg, index)
    lat0, lon0, dlat, dlon = _draw_track(cfg, rng, index)
    episodes = _draw_episodes(cfg, rng)
    sets = _draw_sets(cfg, rng)
    env = _envelope(cfg, episodes, sets)
    sig = _signal(cfg, env, rng)  # noise drawn last, after all layout draws

    bid = buoy_ident(index)
    stamps = _hour_strings(cfg.start, cfg.total_hours)
    rows = []
    for h in range(cfg.total_hours):
        lat = lat0 + dlat * h
        lon = lon0 + dlon * h
        v = sig[h]
        if v == 0.0:
            tail = "," * 10
        else:
            lv = f"{v / 10.0:.3f}"
            tail = ("," + lv) * 10
        rows.append(f"{bid},{stamps[h]},{lat:.5f},{lon:.5f}{tail}")

    events = [LogbookEvent(bid, cfg.start, lat0, lon0, EventKind.DEPLOYMENT)]
    for ts in sets:
        events.append(
            LogbookEvent(
                bid,
                cfg.start + timedelta(hours=ts),
                lat0 + dlat * ts,
                lon0 + dlon * ts,
                EventKind.SET,
            )
        )

    gt_rows = []
    daily = _daily_from_signal(cfg, bid, _signal(cfg, env))
    if daily is not None:
        found = detect_episodes(bid, [float(t) for t in daily.tonnage])
        for i, ep in enumerate(found):
            at = "" if ep.at_days is None else str(ep.at_days)
            dt = "" if ep.dt_days is None else str(ep.dt_days)
            gt_rows.append(
                f"{bid},{i},{ep.run_start},{ep.peak_day},{ep.run_end},{at},{dt}"
            )
    return rows, events, gt_rows


def _event_row(e: LogbookEvent) -> str:
    lat = "" if e.lat is None else f"{e.lat:.5f}"
    lon = "" if e.lon is None else f"{e.lon:.5f}"
    return f"{e.buoy_id},{format_utc(e.timestamp)},{lat},{lon},{e.kind.value}"


def write_flat_bathymetry(path, depth_m: float = 4000.0) -> None:
    """A 30-degree global grid with one uniform depth."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("-90 -180 30 30 7 13\n")
        row = " ".join([f"{depth_m:.1f}"] * 13)
        for _ in range(7):
            fh.write(row + "\n")


def _buoy_task(args) -> tuple[list[str], list[LogbookEvent], list[str]]:
    return generate_buoy(*args)


def generate_dataset(
    cfg: SynthConfig,
    buoy_path,
    logbook_path,
    truth_path,
    bathymetry_path=None,
    *,
    workers: int = 1,
) -> dict[str, int]:
    """Write the full fleet; returns row counts per file. Buoys are
    generated on per-buoy substreams and merged in index order, so any
    worker count gives identical files."""
    counts = {"buoy_rows": 0, "logbook_rows": 0, "truth_rows": 0}
    with open(buoy_path, "w", encoding="utf-8", newline="") as bf, open(
        logbook_path, "w", encoding="utf-8", newline=""
    ) as lf, open(truth_path, "w", encoding="utf-8", newline="") as tf:
        bf.write(",".join(BUOY_HEADER) + "\n")
        lf.write(",".join(LOGBOOK_HEADER) + "\n")
        tf.write(",".join(GROUND_TRUTH_HEADER) + "\n")

        def consume(result):
            rows, events, gt_rows = result
            if rows:
                bf.write("\n".join(rows) + "\n")
            for e in events:
                lf.write(_event_row(e) + "\n")
            if gt_rows:
                tf.write("\n".join(gt_rows) + "\n")
            counts["buoy_rows"] += len(rows)
            counts["logbook_rows"] += len(events)
            counts["truth_rows"] += len(gt_rows)

        if workers <= 1:
            for idx in range(cfg.n_buoys):
                consume(generate_buoy(cfg, idx))
        else:
            tasks = [(cfg, idx) for idx in range(cfg.n_buoys)]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(_buoy_task, tasks, chunksize=8):
                    consume(result)
    if bathymetry_path is not None:
        write_flat_bathymetry(bathymetry_path)
    return counts
