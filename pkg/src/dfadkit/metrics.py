"""Aggregation metrics on smoothed segment series.

Binary metrics (per segment):
  ST   days in the segment (deployment-started segments only downstream)
  CT   index of the first presence day (colonization time)
  aCRT length of each maximal presence run, boundary-touching included
  aCAT length of each maximal absence run
  OR   presence days at or after CT over (ST - CT)

Tonnage episodes (per >10 t run of the smoothed series):
  AT   days from the last sub-threshold day before the run to its peak,
       peak - run_start + 1; censored when the run opens the segment
  DT   days from the peak to the first sub-threshold day after the run,
       run_end + 1 - peak; censored when the run closes the segment

AT and DT both count peak-to-absence-boundary days, so reversing a series
swaps them exactly, censoring flags included.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_EPISODE_THRESHOLD = 10.0
DEFAULT_EDGE_DAYS = 5
DEFAULT_MIN_SEGMENT_DAYS = 10


@dataclass(slots=True, frozen=True)
class BinaryMetrics:
    segment_id: str
    deployment_started: bool
    st_days: int
    ct_days: int | None
    acrt_days: tuple[int, ...]
    acat_days: tuple[int, ...]
    or_fraction: float | None
    colonized: bool


@dataclass(slots=True, frozen=True)
class Episode:
    segment_id: str
    run_start: int
    peak_day: int
    run_end: int
    peak_tonnage: float
    at_days: int | None
    dt_days: int | None
    at_censored: bool
    dt_censored: bool


def runs_of(values, target) -> list[tuple[int, int]]:
    """Maximal runs of ``target`` as (start, length) pairs, left to right."""
    out = []
    start = None
    for i, v in enumerate(values):
        if v == target:
            if start is None:
                start = i
        elif start is not None:
            out.append((start, i - start))
            start = None
    if start is not None:
        out.append((start, len(values) - start))
    return out


def compute_binary_metrics(segment_id: str, binary, deployment_started: bool) -> BinaryMetrics:
    """Scan one segment's smoothed presence series.

    Every metric is well defined for any segment; callers restrict ST, CT
    and OR to deployment-started segments when collecting samples. The run
    lengths always satisfy sum(aCRT) + sum(aCAT) = ST.
    """
    b = [int(v) for v in binary]
    if not b:
        raise ValueError("empty binary series")
    if any(v not in (0, 1) for v in b):
        raise ValueError("binary series must be 0/1")
    n = len(b)
    ones = runs_of(b, 1)
    zeros = runs_of(b, 0)
    ct = ones[0][0] if ones else None
    colonized = ct is not None
    if colonized:
        n_present_after = sum(length for s, length in ones if s >= ct)
        or_fraction = n_present_after / (n - ct)
    else:
        or_fraction = None
    return BinaryMetrics(
        segment_id,
        deployment_started,
        n,
        ct,
        tuple(length for _, length in ones),
        tuple(length for _, length in zeros),
        or_fraction,
        colonized,
    )


def never_colonized_rate(metrics) -> float:
    """Fraction of deployment-started segments that never saw presence."""
    dep = [m for m in metrics if m.deployment_started]
    if not dep:
        raise ValueError("no deployment-started segments")
    return sum(1 for m in dep if not m.colonized) / len(dep)


def detect_episodes(
    segment_id: str,
    tonnage,
    *,
    threshold: float = DEFAULT_EPISODE_THRESHOLD,
    edge_days: int = DEFAULT_EDGE_DAYS,
    min_segment_days: int = DEFAULT_MIN_SEGMENT_DAYS,
) -> list[Episode]:
    """Find aggregation episodes on a smoothed tonnage series.

    An episode is a maximal run of days strictly above the threshold; its
    peak is the earliest day reaching the run maximum. Episodes whose peak
    falls within the first or last edge_days of the segment are dropped,
    as are whole segments shorter than min_segment_days. AT (DT) is absent
    when the run touches the segment start (end) and the true crossing is
    unobservable.
    """
    v = list(tonnage)
    n = len(v)
    if n < min_segment_days:
        return []
    episodes = []
    for start, length in runs_of([x > threshold for x in v], True):
        end = start + length - 1
        peak = max(range(start, end + 1), key=lambda i: (v[i], -i))
        if peak < edge_days or peak >= n - edge_days:
            continue
        at_censored = start == 0
        dt_censored = end == n - 1
        episodes.append(
            Episode(
                segment_id,
                start,
                peak,
                end,
                float(v[peak]),
                None if at_censored else peak - start + 1,
                None if dt_censored else end + 1 - peak,
                at_censored,
                dt_censored,
            )
        )
    return episodes


@dataclass(slots=True, frozen=True)
class MetricSample:
    metric: str
    basin: str
    segment_id: str
    value: float


def collect_samples(
    segment_metrics: list[tuple[BinaryMetrics, str]],
    episode_lists: list[tuple[list[Episode], str]],
) -> list[MetricSample]:
    """Flatten metrics into long-format samples for the statistics stage.

    Inputs pair each BinaryMetrics / episode list with its basin label.
    ST, CT and OR rows are emitted for deployment-started segments only
    (CT and OR additionally need the segment colonized); aCRT and aCAT
    rows cover every run of every segment; AT and DT rows skip censored
    values.
    """
    samples: list[MetricSample] = []
    for m, basin in segment_metrics:
        if m.deployment_started:
            samples.append(MetricSample("ST", basin, m.segment_id, float(m.st_days)))
            if m.ct_days is not None:
                samples.append(MetricSample("CT", basin, m.segment_id, float(m.ct_days)))
            if m.or_fraction is not None:
                samples.append(MetricSample("OR", basin, m.segment_id, float(m.or_fraction)))
        for length in m.acrt_days:
            samples.append(MetricSample("aCRT", basin, m.segment_id, float(length)))
        for length in m.acat_days:
            samples.append(MetricSample("aCAT", basin, m.segment_id, float(length)))
    for episodes, basin in episode_lists:
        for e in episodes:
            if e.at_days is not None:
                samples.append(MetricSample("AT", basin, e.segment_id, float(e.at_days)))
            if e.dt_days is not None:
                samples.append(MetricSample("DT", basin, e.segment_id, float(e.dt_days)))
    return samples
