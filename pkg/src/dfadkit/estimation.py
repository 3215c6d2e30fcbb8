"""Hourly biomass estimation and daily series construction.

The window estimator turns raw layer readings into hourly tonnage and a
presence flag (tonnage >= 10 t). Estimates are attached to every hour slot
whose surrounding 72-hour window has enough records; the window is centred
on the slot ((t-36h, t+36h] in slot terms) so crossings and peaks keep
their timing instead of lagging behind a trailing mean. Hourly estimates
then collapse into one value per UTC day, and per-segment gaps are filled
before smoothing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta, timezone
from enum import Enum

import numpy as np

from .data_model import BuoyRecord, parse_utc

WINDOW_HOURS = 72
DEFAULT_TONNAGE_THRESHOLD = 10.0
DEFAULT_WINDOW_MAX_MISSING = 0.2
DEFAULT_SERIES_MAX_MISSING = 0.8

ESTIMATE_HEADER = ["buoy_id", "timestamp", "binary", "tonnage"]


class EstimateSource(Enum):
    BASELINE = "baseline"
    EXTERNAL = "external"
    IMPUTED = "imputed"


@dataclass(slots=True, frozen=True)
class HourlyEstimate:
    buoy_id: str
    timestamp: datetime  # top of the hour, UTC
    tonnage: float
    binary: bool
    source: EstimateSource


@dataclass
class DailySeries:
    """Contiguous per-day series for one buoy; None marks days without any
    hourly estimate. ``imputed`` flags days whose estimates all came from
    zero-imputed records."""

    buoy_id: str
    start: date
    binary: list[int | None]
    tonnage: list[float | None]
    imputed: list[bool]

    def __len__(self) -> int:
        return len(self.tonnage)

    def day(self, i: int) -> date:
        return self.start + timedelta(days=i)

    def index_of(self, d: date) -> int:
        return (d - self.start).days


def impute_zero(records: list[BuoyRecord]) -> list[BuoyRecord]:
    """Records with a GPS fix but no layer block become all-zero layers,
    flagged imputed. The buoy transmits position regardless; silence from
    the echo-sounder means nothing above the reporting floor."""
    zeros = (0.0,) * 10
    return [
        replace(r, layers=zeros, imputed=True) if r.layers is None else r
        for r in records
    ]


def estimate_baseline(
    buoy_id: str,
    hour: datetime,
    window_sums: list[float | None],
    *,
    threshold: float = DEFAULT_TONNAGE_THRESHOLD,
    max_missing_fraction: float = DEFAULT_WINDOW_MAX_MISSING,
) -> HourlyEstimate | None:
    """Estimate tonnage for one hour from its 72 hourly layer sums.

    window_sums holds one entry per hour slot, None where no record exists.
    Returns None when more than max_missing_fraction of the window is
    missing; otherwise tonnage is the mean of the present sums and the
    presence flag is tonnage >= threshold.
    """
    if len(window_sums) != WINDOW_HOURS:
        raise ValueError(f"window must have {WINDOW_HOURS} slots")
    present = [v for v in window_sums if v is not None]
    missing = WINDOW_HOURS - len(present)
    if missing > max_missing_fraction * WINDOW_HOURS:
        return None
    tonnage = float(sum(present) / len(present))
    return HourlyEstimate(buoy_id, hour, tonnage, tonnage >= threshold, EstimateSource.BASELINE)


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _slot_of(ts: datetime) -> int:
    return int(ts.timestamp() // 3600)


def _slot_time(slot: int) -> datetime:
    return _EPOCH + timedelta(hours=slot)


def hourly_slot_sums(records: list[BuoyRecord]) -> tuple[int, np.ndarray, np.ndarray]:
    """Bucket one buoy's records into hour slots.

    Returns (first_slot, sums, all_imputed): sums[i] is the mean layer sum
    of records in slot first_slot+i (NaN when empty), all_imputed[i] is
    True when the slot is non-empty and every record in it is imputed.
    Records without layers are ignored (run impute_zero first if they
    should count as zero).
    """
    slots = []
    for r in records:
        if r.layers is None:
            continue
        slots.append((_slot_of(r.timestamp), r.layer_sum(), r.imputed))
    if not slots:
        return 0, np.empty(0), np.empty(0, bool)
    first = min(s for s, _, _ in slots)
    last = max(s for s, _, _ in slots)
    n = last - first + 1
    total = np.zeros(n)
    count = np.zeros(n)
    n_imputed = np.zeros(n)
    for s, v, imp in slots:
        i = s - first
        total[i] += v
        count[i] += 1
        n_imputed[i] += imp
    with np.errstate(invalid="ignore"):
        sums = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    sums[count == 0] = np.nan
    all_imputed = (count > 0) & (n_imputed == count)
    return first, sums, all_imputed


def hourly_series(
    records: list[BuoyRecord],
    *,
    threshold: float = DEFAULT_TONNAGE_THRESHOLD,
    max_missing_fraction: float = DEFAULT_WINDOW_MAX_MISSING,
) -> list[HourlyEstimate]:
    """Run the window estimator over one buoy's records (time order not
    required; slots are absolute). Equivalent to calling estimate_baseline
    on every slot's centred window, but vectorized."""
    if not records:
        return []
    buoy_id = records[0].buoy_id
    first, sums, all_imputed = hourly_slot_sums(records)
    n = len(sums)
    if n == 0:
        return []
    # centred window: slot h takes slots [h-36, h+35], i.e. (t-36h, t+36h]
    half = WINDOW_HOURS // 2
    present = ~np.isnan(sums)
    vals = np.where(present, sums, 0.0)
    cs_v = np.concatenate([[0.0], np.cumsum(vals)])
    cs_c = np.concatenate([[0], np.cumsum(present)])
    cs_i = np.concatenate([[0], np.cumsum(all_imputed)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half - 1, n - 1) + 1  # exclusive
    wsum = cs_v[hi] - cs_v[lo]
    wcount = (cs_c[hi] - cs_c[lo]).astype(int)
    wimp = (cs_i[hi] - cs_i[lo]).astype(int)
    need = WINDOW_HOURS - int(max_missing_fraction * WINDOW_HOURS)
    out: list[HourlyEstimate] = []
    for i in np.nonzero(wcount >= need)[0]:
        tonnage = wsum[i] / wcount[i]
        source = EstimateSource.IMPUTED if wimp[i] == wcount[i] else EstimateSource.BASELINE
        out.append(
            HourlyEstimate(
                buoy_id, _slot_time(first + int(i)), float(tonnage),
                bool(tonnage >= threshold), source,
            )
        )
    return out


def load_external_estimates(path) -> tuple[list[HourlyEstimate], list[tuple[int, str]]]:
    """Read a ready-made hourly estimate CSV (buoy_id, timestamp, binary,
    tonnage); schema errors are rejected row-wise."""
    estimates: list[HourlyEstimate] = []
    rejects: list[tuple[int, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header") from None
        if [c.strip().lower() for c in header] != ESTIMATE_HEADER:
            raise ValueError(f"malformed estimate header: {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                rejects.append((lineno, "wrong field count"))
                continue
            buoy_id = row[0].strip()
            if not buoy_id:
                rejects.append((lineno, "missing buoy_id"))
                continue
            try:
                ts = parse_utc(row[1])
            except ValueError:
                rejects.append((lineno, "bad timestamp"))
                continue
            if row[2] not in ("0", "1"):
                rejects.append((lineno, "binary not 0/1"))
                continue
            try:
                tonnage = float(row[3])
            except ValueError:
                rejects.append((lineno, "bad tonnage"))
                continue
            if not np.isfinite(tonnage) or tonnage < 0.0:
                rejects.append((lineno, "tonnage out of range"))
                continue
            estimates.append(
                HourlyEstimate(buoy_id, ts, tonnage, row[2] == "1", EstimateSource.EXTERNAL)
            )
    return estimates, rejects


def aggregate_daily(estimates: list[HourlyEstimate]) -> DailySeries | None:
    """Collapse one buoy's hourly estimates into a contiguous daily series.

    Daily tonnage is the median of the day's hourly tonnages; the daily
    flag is the majority of hourly flags, ties resolved to the most recent
    non-missing daily flag (0 when there is none). Days without estimates
    stay missing.
    """
    if not estimates:
        return None
    buoy_id = estimates[0].buoy_id
    by_day: dict[date, list[HourlyEstimate]] = {}
    for e in estimates:
        by_day.setdefault(e.timestamp.date(), []).append(e)
    d0, d1 = min(by_day), max(by_day)
    n = (d1 - d0).days + 1
    binary: list[int | None] = [None] * n
    tonnage: list[float | None] = [None] * n
    imputed = [False] * n
    last_flag = 0
    have_prev = False
    for i in range(n):
        day = d0 + timedelta(days=i)
        todays = by_day.get(day)
        if not todays:
            continue
        tonnage[i] = float(np.median([e.tonnage for e in todays]))
        ones = sum(e.binary for e in todays)
        zeros = len(todays) - ones
        if ones > zeros:
            flag = 1
        elif zeros > ones:
            flag = 0
        else:
            flag = last_flag if have_prev else 0
        binary[i] = flag
        last_flag, have_prev = flag, True
        imputed[i] = all(e.source is EstimateSource.IMPUTED for e in todays)
    return DailySeries(buoy_id, d0, binary, tonnage, imputed)


def fill_gaps(
    binary: list[int | None],
    tonnage: list[float | None],
    max_missing_fraction: float = DEFAULT_SERIES_MAX_MISSING,
) -> tuple[list[int], list[float]] | None:
    """Fill missing days of a segment-scoped series, or reject it.

    Returns None when the missing fraction exceeds max_missing_fraction
    (the caller drops the segment). Tonnage is linearly interpolated
    between the nearest valid days, copied from the nearest valid value at
    the edges; the presence flag is forward-filled, with leading gaps
    back-filled from the first valid day.
    """
    if len(binary) != len(tonnage):
        raise ValueError("binary/tonnage length mismatch")
    n = len(tonnage)
    if n == 0:
        return None
    # a day counts as present only when both values are there
    present = [i for i in range(n) if tonnage[i] is not None and binary[i] is not None]
    if (n - len(present)) > max_missing_fraction * n:
        return None
    xp = np.array(present, dtype=float)
    fp = np.array([tonnage[i] for i in present], dtype=float)
    filled_t = np.interp(np.arange(n, dtype=float), xp, fp).tolist()
    filled_b: list[int] = [0] * n
    first_valid = present[0]
    last = int(binary[first_valid])
    for i in range(n):
        v = binary[i]
        if v is not None and tonnage[i] is not None and i >= first_valid:
            last = int(v)
        filled_b[i] = last
    return filled_b, filled_t
