"""Virgin segment generation.

A virgin segment is a stretch of one buoy's record timeline during which
the aggregation under it evolved undisturbed: it is cut at deployments,
sets, retrievals, port recoveries and losses (visits and modifications do
not cut), and additionally wherever the buoy went silent for more than 24
hours. Adjacent segments share their boundary instant: the earlier one is
closed at it, the later one opens at it. Candidates lasting 72 hours or
less are discarded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import Enum

from .data_model import SEGMENT_GENERATING, EventKind, LogbookEvent, OceanBasin
from .estimation import DailySeries

log = logging.getLogger(__name__)

DEFAULT_GAP_HOURS = 24.0
DEFAULT_MIN_SEGMENT_HOURS = 72.0


class SegmentCause(Enum):
    DEPLOYMENT = "deployment"
    SET = "set"
    RETRIEVAL_AT_SEA = "retrieval_at_sea"
    RECOVERY_AT_PORT = "recovery_at_port"
    LOSS = "loss"
    GAP_START = "gap_start"
    GAP_END = "gap_end"
    SERIES_START = "series_start"
    SERIES_END = "series_end"


_EVENT_CAUSE = {
    EventKind.DEPLOYMENT: SegmentCause.DEPLOYMENT,
    EventKind.SET: SegmentCause.SET,
    EventKind.RETRIEVAL_AT_SEA: SegmentCause.RETRIEVAL_AT_SEA,
    EventKind.RECOVERY_AT_PORT: SegmentCause.RECOVERY_AT_PORT,
    EventKind.LOSS: SegmentCause.LOSS,
}


@dataclass(slots=True, frozen=True)
class SegmentCandidate:
    start: datetime
    end: datetime
    start_cause: SegmentCause
    end_cause: SegmentCause


@dataclass
class VirginSegment:
    segment_id: str
    buoy_id: str
    start: datetime
    end: datetime
    start_cause: SegmentCause
    end_cause: SegmentCause
    basin: OceanBasin | None
    first_day: date
    n_days: int


def generate_segments(
    record_times: list[datetime],
    events: list[LogbookEvent],
    *,
    gap_hours: float = DEFAULT_GAP_HOURS,
    min_segment_hours: float = DEFAULT_MIN_SEGMENT_HOURS,
) -> list[SegmentCandidate]:
    """Cut one buoy's timeline into candidate segments.

    record_times are the buoy's cleaned transmission timestamps, sorted
    ascending; any transmission counts toward the gap rule, whether or not
    it carried layers. Events outside the record span are ignored (with a
    warning); visits and modifications are ignored by design. Candidates
    come back time-ordered, pairwise disjoint, each strictly longer than
    min_segment_hours.
    """
    if not record_times:
        return []
    times = record_times
    for a, b in zip(times, times[1:]):
        if b < a:
            raise ValueError("record times must be sorted")
    t_first, t_last = times[0], times[-1]

    # cut items: (time, order, payload); events sort before a gap starting
    # at the same instant so the more informative cause wins
    cuts: list[tuple[datetime, int, tuple]] = []
    n_outside = 0
    for k, ev in enumerate(events):
        if ev.kind not in SEGMENT_GENERATING:
            continue
        if ev.timestamp < t_first or ev.timestamp > t_last:
            n_outside += 1
            continue
        cuts.append((ev.timestamp, 0, ("event", k, _EVENT_CAUSE[ev.kind])))
    if n_outside:
        log.warning("%d segment-generating events outside the record span ignored", n_outside)

    gap = timedelta(hours=gap_hours)
    for a, b in zip(times, times[1:]):
        if b - a > gap:
            cuts.append((a, 1, ("gap", b)))
    cuts.sort(key=lambda c: (c[0], c[1], c[2][1] if c[2][0] == "event" else -1))

    candidates: list[SegmentCandidate] = []
    cur_start = t_first
    cur_cause = SegmentCause.SERIES_START

    def close(end: datetime, end_cause: SegmentCause) -> None:
        candidates.append(SegmentCandidate(cur_start, end, cur_cause, end_cause))

    for when, _, payload in cuts:
        if when < cur_start:
            continue  # falls inside a silent stretch already cut out
        if payload[0] == "event":
            close(when, payload[2])
            cur_start, cur_cause = when, payload[2]
        else:
            close(when, SegmentCause.GAP_START)
            cur_start, cur_cause = payload[1], SegmentCause.GAP_END
    close(t_last, SegmentCause.SERIES_END)

    min_len = timedelta(hours=min_segment_hours)
    return [c for c in candidates if c.end - c.start > min_len]


def slice_days(
    candidate: SegmentCandidate, series: DailySeries
) -> tuple[date, list[int | None], list[float | None]] | None:
    """Cut the daily values covered by a candidate segment.

    A day belongs to the segment iff its whole [d, d+1) interval lies
    inside [start, end]. Days in range but outside the series (or without
    estimates) come back as None and count as missing downstream. Returns
    None when no whole day fits.
    """
    start, end = candidate.start, candidate.end
    first = start.date()
    if datetime.combine(first, datetime.min.time(), tzinfo=start.tzinfo) < start:
        first = first + timedelta(days=1)
    # last day d with d+1 <= end
    last_candidate = end.date()
    if datetime.combine(last_candidate, datetime.min.time(), tzinfo=end.tzinfo) + timedelta(days=1) > end:
        last_candidate = last_candidate - timedelta(days=1)
    n = (last_candidate - first).days + 1
    if n <= 0:
        return None
    binary: list[int | None] = [None] * n
    tonnage: list[float | None] = [None] * n
    for i in range(n):
        j = series.index_of(first + timedelta(days=i))
        if 0 <= j < len(series):
            binary[i] = series.binary[j]
            tonnage[i] = series.tonnage[j]
    return first, binary, tonnage
