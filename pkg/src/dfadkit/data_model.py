"""Record types, CSV parsing and cleaning for echo-sounder buoy data.

Buoy CSVs carry one acoustic sample per row: id, UTC timestamp, GPS fix and
ten depth-layer readings in tonnes (all ten present or all ten empty).
Cleaning operations take record lists and return order-preserving
subsequences; they never modify records in place.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
KM_PER_NMI = 1.852
N_LAYERS = 10
LAYER_MAX_T = 63.0

BUOY_HEADER = ["buoy_id", "timestamp", "lat", "lon"] + [
    f"layer_{i}" for i in range(1, N_LAYERS + 1)
]
LOGBOOK_HEADER = ["buoy_id", "timestamp", "lat", "lon", "event_type"]


class EventKind(Enum):
    DEPLOYMENT = "deployment"
    SET = "set"
    RETRIEVAL_AT_SEA = "retrieval_at_sea"
    RECOVERY_AT_PORT = "recovery_at_port"
    LOSS = "loss"
    VISIT = "visit"
    MODIFICATION = "modification"


# Kinds that terminate/open a virgin segment; Visit and Modification do not.
SEGMENT_GENERATING = frozenset(
    {
        EventKind.DEPLOYMENT,
        EventKind.SET,
        EventKind.RETRIEVAL_AT_SEA,
        EventKind.RECOVERY_AT_PORT,
        EventKind.LOSS,
    }
)


class OceanBasin(Enum):
    ATLANTIC = "Atlantic"
    INDIAN = "Indian"
    PACIFIC = "Pacific"


@dataclass(slots=True, frozen=True)
class BuoyRecord:
    """One acoustic/GPS sample. ``layers`` is None when the echo-sounder
    block was not transmitted; ``imputed`` marks layers filled in later."""

    buoy_id: str
    timestamp: datetime
    lat: float
    lon: float
    layers: tuple[float, ...] | None
    imputed: bool = False

    def layer_sum(self) -> float | None:
        return None if self.layers is None else float(sum(self.layers))


@dataclass(slots=True, frozen=True)
class LogbookEvent:
    buoy_id: str
    timestamp: datetime
    lat: float | None
    lon: float | None
    kind: EventKind


@dataclass(frozen=True)
class BasinBounds:
    """Longitude splits for basin assignment, degrees east, applied within
    the |lat| <= max_abs_lat band."""

    atlantic_west: float = -70.0
    atlantic_east: float = 20.0
    indian_east: float = 146.0
    max_abs_lat: float = 30.0


DEFAULT_BASIN_BOUNDS = BasinBounds()


def normalize_lon(lon: float) -> float:
    """Map a longitude to [-180, 180)."""
    return ((lon + 180.0) % 360.0) - 180.0


def assign_basin(lat: float, lon: float, bounds: BasinBounds = DEFAULT_BASIN_BOUNDS) -> OceanBasin | None:
    """Assign a position to an ocean basin, or None outside the tropical band.

    Atlantic spans [atlantic_west, atlantic_east), Indian
    [atlantic_east, indian_east), Pacific everything else.
    """
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    if abs(lat) > bounds.max_abs_lat:
        return None
    x = normalize_lon(lon)
    if bounds.atlantic_west <= x < bounds.atlantic_east:
        return OceanBasin.ATLANTIC
    if bounds.atlantic_east <= x < bounds.indian_east:
        return OceanBasin.INDIAN
    return OceanBasin.PACIFIC


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km on a sphere of radius 6371 km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def haversine_km_vec(lat1, lon1, lat2, lon2):
    """Vectorized haversine, same sphere as :func:`haversine_km`."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))


@dataclass
class BathymetryGrid:
    """Regular lat/lon grid of ocean depth in metres (positive down,
    values <= 0 are land). Lookup is nearest cell centre; positions off
    the grid have unknown depth."""

    lat0: float
    lon0: float
    dlat: float
    dlon: float
    depths: np.ndarray  # (nrows, ncols)

    def depth_at(self, lat: float, lon: float) -> float | None:
        i = round((lat - self.lat0) / self.dlat)
        j = round((lon - self.lon0) / self.dlon)
        if 0 <= i < self.depths.shape[0] and 0 <= j < self.depths.shape[1]:
            return float(self.depths[i, j])
        return None

    def depths_at(self, lats, lons) -> np.ndarray:
        """Vectorized lookup; NaN where the position is off the grid."""
        i = np.rint((np.asarray(lats, float) - self.lat0) / self.dlat).astype(int)
        j = np.rint((np.asarray(lons, float) - self.lon0) / self.dlon).astype(int)
        ok = (i >= 0) & (i < self.depths.shape[0]) & (j >= 0) & (j < self.depths.shape[1])
        out = np.full(i.shape, np.nan)
        out[ok] = self.depths[i[ok], j[ok]]
        return out


def parse_bathymetry(path) -> BathymetryGrid:
    """Read the plain-text grid: a header line
    ``lat0 lon0 dlat dlon nrows ncols`` followed by nrows rows of ncols
    depth values."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ValueError(f"bathymetry header needs 6 fields, got {len(header)}")
        lat0, lon0, dlat, dlon = (float(v) for v in header[:4])
        nrows, ncols = int(header[4]), int(header[5])
        if nrows <= 0 or ncols <= 0 or dlat == 0.0 or dlon == 0.0:
            raise ValueError("bathymetry grid is degenerate")
        depths = np.loadtxt(fh, dtype=float, ndmin=2)
    if depths.shape != (nrows, ncols):
        raise ValueError(f"bathymetry body is {depths.shape}, header says {(nrows, ncols)}")
    return BathymetryGrid(lat0, lon0, dlat, dlon, depths)


_UTC = timezone.utc


def parse_utc(s: str) -> datetime:
    """Parse an ISO-8601 UTC instant. Fast path for 'YYYY-MM-DDTHH:MM:SSZ';
    otherwise defer to datetime.fromisoformat (Z normalized, any offset
    converted to UTC, naive values taken as UTC)."""
    if len(s) == 20 and s[10] == "T" and s[19] == "Z":
        return datetime(
            int(s[0:4]), int(s[5:7]), int(s[8:10]),
            int(s[11:13]), int(s[14:16]), int(s[17:19]),
            tzinfo=_UTC,
        )
    dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        return dt.replace(tzinfo=_UTC)
    return dt.astimezone(_UTC)


def format_utc(dt: datetime) -> str:
    return dt.astimezone(_UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def _check_header(got: list[str], want: list[str], what: str) -> None:
    if [c.strip().lower() for c in got] != want:
        raise ValueError(f"malformed {what} header: {got!r}")


def parse_buoy_csv(path) -> tuple[list[BuoyRecord], list[tuple[int, str]]]:
    """Parse a buoy CSV.

    Returns (records, rejects). Rejects are (line_number, reason) pairs,
    line numbers counted from 1 including the header. Rows must carry all
    ten layers or none; layer values outside [0, 63], coordinates off the
    globe and unparseable timestamps are rejected row-wise. An empty
    buoy_id parses fine; dropping it is the cleaning step's job.
    """
    records: list[BuoyRecord] = []
    rejects: list[tuple[int, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header") from None
        _check_header(header, BUOY_HEADER, "buoy file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(BUOY_HEADER):
                rejects.append((lineno, "wrong field count"))
                continue
            try:
                ts = parse_utc(row[1])
            except ValueError:
                rejects.append((lineno, "bad timestamp"))
                continue
            try:
                lat, lon = float(row[2]), float(row[3])
            except ValueError:
                rejects.append((lineno, "bad coordinate"))
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                rejects.append((lineno, "coordinate out of range"))
                continue
            raw_layers = row[4:]
            n_blank = sum(1 for v in raw_layers if v == "")
            if n_blank == N_LAYERS:
                layers = None
            elif n_blank:
                rejects.append((lineno, "partial layer block"))
                continue
            else:
                try:
                    layers = tuple(float(v) for v in raw_layers)
                except ValueError:
                    rejects.append((lineno, "bad layer value"))
                    continue
                if any(not (0.0 <= v <= LAYER_MAX_T) for v in layers):
                    rejects.append((lineno, "layer out of range"))
                    continue
            records.append(BuoyRecord(row[0].strip(), ts, lat, normalize_lon(lon), layers))
    return records, rejects


def parse_logbook_csv(path) -> tuple[list[LogbookEvent], list[tuple[int, str]]]:
    """Parse logbook events; unknown event types and missing ids are
    rejected row-wise. Positions may be blank."""
    events: list[LogbookEvent] = []
    rejects: list[tuple[int, str]] = []
    kinds = {k.value: k for k in EventKind}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header") from None
        _check_header(header, LOGBOOK_HEADER, "logbook file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LOGBOOK_HEADER):
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
            lat = lon = None
            if row[2] != "" or row[3] != "":
                try:
                    lat, lon = float(row[2]), float(row[3])
                except ValueError:
                    rejects.append((lineno, "bad coordinate"))
                    continue
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                    rejects.append((lineno, "coordinate out of range"))
                    continue
                lon = normalize_lon(lon)
            kind = kinds.get(row[4].strip().lower())
            if kind is None:
                rejects.append((lineno, "unknown event type"))
                continue
            events.append(LogbookEvent(buoy_id, ts, lat, lon, kind))
    return events, rejects


def dedupe_and_drop_missing(records: list[BuoyRecord]) -> list[BuoyRecord]:
    """Drop exact duplicate rows (first occurrence wins) and records with
    an empty buoy_id. Order preserved."""
    seen: set[tuple] = set()
    kept: list[BuoyRecord] = []
    for r in records:
        if not r.buoy_id:
            continue
        key = (r.buoy_id, r.timestamp, r.lat, r.lon, r.layers)
        if key in seen:
            continue
        seen.add(key)
        kept.append(r)
    return kept


def filter_depth(
    records: list[BuoyRecord],
    grid: BathymetryGrid,
    min_depth_m: float = 200.0,
) -> tuple[list[BuoyRecord], int]:
    """Remove records over water shallower than min_depth_m; land cells
    (depth <= 0) go with them. Positions off the grid have unknown depth
    and are retained; their count is returned for reporting."""
    if not records:
        return [], 0
    depths = grid.depths_at([r.lat for r in records], [r.lon for r in records])
    unknown = np.isnan(depths)
    keep = unknown | (depths >= min_depth_m)
    n_unknown = int(unknown.sum())
    if n_unknown:
        log.warning("depth filter: %d records over unknown cells retained", n_unknown)
    return [r for r, k in zip(records, keep) if k], n_unknown


def _day_index(epoch_s: float) -> int:
    return int(epoch_s // 86400.0)


def filter_velocity(records: list[BuoyRecord], max_knots: float = 3.0) -> list[BuoyRecord]:
    """Drop every record of UTC days on which the buoy moved too fast.

    A leg joins consecutive fixes of the (time-sorted) input; it contributes
    its great-circle distance and elapsed time to every UTC day its time
    interval intersects. A day's mean velocity is total distance over total
    time of its legs; days exceeding max_knots lose all their records.
    Days with no legs (single isolated fix) are kept. Zero-elapsed legs
    carry no speed information and are skipped, as are legs longer than
    24 h: the buoy's path over a whole silent day is unknown, such
    silences split segments anyway, and ignoring them keeps the filter
    idempotent (a removed day's bridging leg cannot taint its neighbors).
    """
    n = len(records)
    if n < 2:
        return list(records)
    ts = np.array([r.timestamp.timestamp() for r in records])
    if np.any(np.diff(ts) < 0):
        raise ValueError("records must be time-sorted")
    lat = np.array([r.lat for r in records])
    lon = np.array([r.lon for r in records])
    dist = haversine_km_vec(lat[:-1], lon[:-1], lat[1:], lon[1:])
    dt = np.diff(ts)

    day_km: dict[int, float] = {}
    day_s: dict[int, float] = {}
    # closed interval [t_i, t_{i+1}]: a leg ending exactly at midnight still
    # taints the arrival day
    d0 = ts[:-1] // 86400.0
    d1 = ts[1:] // 86400.0
    for i in range(n - 1):
        if dt[i] <= 0.0 or dt[i] > 86400.0:
            continue
        for day in range(int(d0[i]), int(max(d0[i], d1[i])) + 1):
            day_km[day] = day_km.get(day, 0.0) + dist[i]
            day_s[day] = day_s.get(day, 0.0) + dt[i]
    bad = {
        day
        for day, km in day_km.items()
        if (km / KM_PER_NMI) / (day_s[day] / 3600.0) > max_knots
    }
    if not bad:
        return list(records)
    return [r for r, t in zip(records, ts) if _day_index(t) not in bad]
