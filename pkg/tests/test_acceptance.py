"""Acceptance gate: eight end-to-end guarantees, one verdict line each.

Every test prints ``ACCEPTANCE n: PASS/FAIL`` through the capture-disabled
channel so the verdicts are visible in a plain pytest run, then asserts.
Oracles are independent reimplementations (brute-force scanners, full
permutation enumerations), never the code under test.
"""

import itertools
import json
import math
import shutil
import time
from dataclasses import replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from dfadkit.data_model import SEGMENT_GENERATING, EventKind, LogbookEvent
from dfadkit.metrics import compute_binary_metrics, detect_episodes
from dfadkit.pipeline import (
    EPISODES_FILE,
    MANIFEST_FILE,
    PipelineConfig,
    SAMPLES_FILE,
    SEGMENTS_FILE,
    SYNTH_BATHY_FILE,
    SYNTH_BUOY_FILE,
    SYNTH_LOGBOOK_FILE,
    SYNTH_TRUTH_FILE,
    run_pipeline,
    stage_synth,
)
from dfadkit.segmentation import generate_segments
from dfadkit.smoothing import (
    DEFAULT_LAMBDA_GRID,
    fit_nonneg_pspline,
    select_lambda_gcv,
    smooth_binary,
)
from dfadkit.stats import kruskal_wallis, mann_whitney
from dfadkit.synthgen import SynthConfig, true_daily_series

UTC = timezone.utc
T0 = datetime(2022, 1, 1, tzinfo=UTC)


def _verdict(capfd, num, ok, detail):
    with capfd.disabled():
        print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)


# ---------------------------------------------------------------- 1


def brute_binary(b):
    """Independent run scanner: (st, ct, acrt, acat, or_fraction)."""
    n = len(b)
    runs = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and b[j + 1] == b[i]:
            j += 1
        runs.append((b[i], j - i + 1, i))
        i = j + 1
    acrt = tuple(ln for v, ln, _ in runs if v == 1)
    acat = tuple(ln for v, ln, _ in runs if v == 0)
    ct = next((s for v, _, s in runs if v == 1), None)
    if ct is None:
        orf = None
    else:
        orf = sum(1 for v in b[ct:] if v == 1) / (n - ct)
    return n, ct, acrt, acat, orf


def test_criterion_1_binary_metrics(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    bad = []
    for rep in range(1000):
        n = int(rng.integers(1, 200))
        b = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int).tolist()
        m = compute_binary_metrics("S", b, True)
        st, ct, acrt, acat, orf = brute_binary(b)
        if (m.st_days, m.ct_days, m.acrt_days, m.acat_days) != (st, ct, acrt, acat):
            bad.append(rep)
        elif (m.or_fraction is None) != (orf is None):
            bad.append(rep)
        elif orf is not None and m.or_fraction != orf:
            bad.append(rep)
        elif sum(m.acrt_days) + sum(m.acat_days) != n:
            bad.append(rep)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 5.0
    _verdict(capfd, 1, ok, f"1000 series vs brute scanner, {elapsed:.2f}s < 5s")
    assert not bad, f"mismatches at reps {bad[:5]}"
    assert elapsed < 5.0


# ---------------------------------------------------------------- 2


def test_criterion_2_episode_reversal(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    bad = []
    for rep in range(1000):
        n = int(rng.integers(10, 120))
        v = rng.uniform(0.0, 25.0, n)
        if rng.random() < 0.3:
            v[: int(rng.integers(1, n))] += 15.0  # run touching the left edge
        if rng.random() < 0.3:
            v[-int(rng.integers(1, n)) :] += 15.0
        v = v.tolist()
        fwd = detect_episodes("S", v)
        rev = detect_episodes("S", v[::-1])
        if len(fwd) != len(rev):
            bad.append(rep)
            continue
        for e, r in zip(fwd, rev[::-1]):
            if (
                r.run_start != n - 1 - e.run_end
                or r.run_end != n - 1 - e.run_start
                or r.peak_day != n - 1 - e.peak_day
                or r.peak_tonnage != e.peak_tonnage
                or r.at_days != e.dt_days
                or r.dt_days != e.at_days
                or r.at_censored != e.dt_censored
                or r.dt_censored != e.at_censored
            ):
                bad.append(rep)
                break
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 5.0
    _verdict(capfd, 2, ok, f"1000 series, AT/DT swap exact, {elapsed:.2f}s < 5s")
    assert not bad, f"mismatches at reps {bad[:5]}"
    assert elapsed < 5.0


# ---------------------------------------------------------------- 3


def test_criterion_3_spline_fits(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    neg, line_bad, rss_bad = [], [], []
    for rep in range(200):
        n = int(rng.integers(10, 75))
        d = np.arange(n, dtype=float)
        if rep % 5 == 0:
            # exact non-negative line (min kept well above zero)
            a = rng.uniform(0.5, 20.0)
            b = rng.uniform(-a / (n + 4), 1.5)
            y = a + b * d
            is_line = True
        else:
            y = np.full(n, rng.uniform(0.0, 8.0))
            for _ in range(int(rng.integers(0, 3))):
                c, w, amp = rng.uniform(0, n), rng.uniform(2, 12), rng.uniform(5, 30)
                y = y + amp * np.exp(-0.5 * ((d - c) / w) ** 2)
            y = np.clip(y + rng.normal(0.0, 1.5, n), 0.0, None)
            is_line = False
        fit = select_lambda_gcv(y)
        refined = np.linspace(0.0, n - 1.0, 10 * (n - 1) + 1)
        if float(fit.evaluate(refined).min()) < -1e-12:
            neg.append(rep)
        if is_line and not np.allclose(fit.fitted, y, rtol=1e-6, atol=0.0):
            line_bad.append(rep)
        rss = [
            float(np.sum((y - fit_nonneg_pspline(y, lam).fitted) ** 2))
            for lam in sorted(DEFAULT_LAMBDA_GRID, reverse=True)
        ]
        for hi, lo in zip(rss, rss[1:]):
            if lo > hi + 1e-6 * max(1.0, hi):
                rss_bad.append(rep)
                break
    elapsed = time.perf_counter() - t0
    ok = not (neg or line_bad or rss_bad) and elapsed < 30.0
    _verdict(
        capfd, 3, ok,
        f"200 segments: refined grid >= -1e-12, lines rtol 1e-6, "
        f"RSS monotone 1e-6, {elapsed:.1f}s < 30s",
    )
    assert not neg, f"negative fits at reps {neg[:5]}"
    assert not line_bad, f"line reproduction failed at reps {line_bad[:5]}"
    assert not rss_bad, f"RSS not monotone at reps {rss_bad[:5]}"
    assert elapsed < 30.0


# ---------------------------------------------------------------- 4


def brute_mw_p(x, y):
    nx, ny = len(x), len(y)
    pooled = sorted(x + y)
    ranks = {v: i + 1 for i, v in enumerate(pooled)}
    ux = sum(ranks[v] for v in x) - nx * (nx + 1) / 2.0
    u = min(ux, nx * ny - ux)
    hits = total = 0
    for combo in itertools.combinations(range(nx + ny), nx):
        w = sum(i + 1 for i in combo) - nx * (nx + 1) / 2.0
        total += 1
        if w <= u or w >= nx * ny - u:
            hits += 1
    return hits / total


def test_criterion_4_rank_tests(capfd):
    t0 = time.perf_counter()
    failures = []

    kw = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    if abs(kw.statistic - 7.2) > 1e-12:
        failures.append(f"KW H {kw.statistic!r}")
    if abs(kw.p_value - math.exp(-3.6)) > 1e-10:
        failures.append(f"KW p {kw.p_value!r}")

    rng = np.random.default_rng(104)
    for nx in range(1, 7):
        for ny in range(1, 7):
            vals = rng.permutation(np.arange(1.0, nx + ny + 1.0))
            x, y = vals[:nx].tolist(), vals[nx:].tolist()
            r = mann_whitney(x, y)
            if r.method != "exact":
                failures.append(f"MW {nx},{ny} not exact")
            elif abs(r.p_value - brute_mw_p(x, y)) > 1e-12:
                failures.append(f"MW {nx},{ny} p off")

    for rep in range(100):
        if rep % 2 == 0:
            vals = rng.permutation(np.arange(1.0, 11.0))
            x, y = vals[:5].tolist(), vals[5:].tolist()
            base = mann_whitney(x, y)
            warp = mann_whitney([math.exp(v / 3) for v in x], [math.exp(v / 3) for v in y])
            same = (base.statistic, base.p_value) == (warp.statistic, warp.p_value)
        else:
            groups = [rng.uniform(0.0, 9.0, int(rng.integers(3, 7))) for _ in range(3)]
            base = kruskal_wallis(groups)
            warp = kruskal_wallis([np.power(g, 3) for g in groups])
            same = (base.statistic, base.p_value) == (warp.statistic, warp.p_value)
        if not same:
            failures.append(f"rank invariance rep {rep}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10.0
    _verdict(
        capfd, 4, ok,
        f"KW oracle 1e-12/1e-10, MW exact vs enumeration nx,ny<=6 at 1e-12, "
        f"100 monotone transforms, {elapsed:.2f}s < 10s",
    )
    assert not failures, failures[:5]
    assert elapsed < 10.0


# ---------------------------------------------------------------- 5


def _read_rows(path):
    lines = Path(path).read_text().splitlines()
    return [line.split(",") for line in lines[1:]]


def test_criterion_5_synthetic_recovery(capfd, tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "fleet"
    cfg = PipelineConfig(
        buoy_path=str(out / SYNTH_BUOY_FILE),
        logbook_path=str(out / SYNTH_LOGBOOK_FILE),
        bathymetry_path=str(out / SYNTH_BATHY_FILE),
        out_dir=str(out),
    )
    synth = SynthConfig(
        n_buoys=500,
        presence_median_days=6.0,
        presence_sigma=0.5,
        absence_median_days=10.0,
        absence_sigma=0.5,
        peak_min_tonnage=15.0,
        peak_max_tonnage=40.0,
        noise_sd=1.0,
        seed=20220,
    )
    stage_synth(cfg, synth)
    run_pipeline(cfg)

    values = {"aCRT": [], "aCAT": []}
    for metric, _basin, _seg, value in _read_rows(out / SAMPLES_FILE):
        if metric in values:
            values[metric].append(float(value))
    med_crt = float(np.median(values["aCRT"]))
    med_cat = float(np.median(values["aCAT"]))
    med_ok = 5.1 <= med_crt <= 6.9 and 8.5 <= med_cat <= 11.5

    # detected episodes in absolute dates, grouped by buoy
    seg_meta = {r[0]: (r[1], date.fromisoformat(r[7])) for r in _read_rows(out / SEGMENTS_FILE)}
    detected = {}
    for r in _read_rows(out / EPISODES_FILE):
        seg_id, run_start, _pk, run_end, _tons, at, dt = r[0], *map(int, r[1:4]), r[4], r[5], r[6]
        bid, day0 = seg_meta[seg_id]
        detected.setdefault(bid, []).append(
            (
                day0 + timedelta(days=run_start),
                day0 + timedelta(days=run_end),
                None if at == "" else int(at),
                None if dt == "" else int(dt),
            )
        )

    truth_by_buoy = {}
    for r in _read_rows(out / SYNTH_TRUTH_FILE):
        truth_by_buoy.setdefault(r[0], []).append(r)
    day_zero = synth.start.date()
    eligible = recovered = 0
    for idx in range(synth.n_buoys):
        bid = f"SB{idx:04d}"
        rows = truth_by_buoy.get(bid, [])
        if not rows:
            continue
        truth = true_daily_series(synth, idx)
        for _bid, _ei, s, pk, e, true_at, true_dt in rows:
            if true_at == "" or true_dt == "":
                continue  # censored in truth: crossing unobservable
            s, pk, e = int(s), int(pk), int(e)
            if float(truth.tonnage[pk]) <= 12.0:
                continue
            eligible += 1
            ts, te = day_zero + timedelta(days=s), day_zero + timedelta(days=e)
            for ds, de, at, dt in detected.get(bid, []):
                if de < ts or te < ds or at is None or dt is None:
                    continue
                if abs(at - int(true_at)) <= 1 and abs(dt - int(true_dt)) <= 1:
                    recovered += 1
                    break
    rate = recovered / eligible if eligible else 0.0
    elapsed = time.perf_counter() - t0
    ok = med_ok and eligible > 0 and rate >= 0.9 and elapsed < 120.0
    _verdict(
        capfd, 5, ok,
        f"500 buoys: median aCRT {med_crt:.2f} in [5.1,6.9], "
        f"aCAT {med_cat:.2f} in [8.5,11.5], recovery {rate:.3f} >= 0.9 "
        f"({recovered}/{eligible}), {elapsed:.0f}s < 120s",
    )
    assert med_ok, (med_crt, med_cat)
    assert eligible > 0
    assert rate >= 0.9, f"{recovered}/{eligible}"
    assert elapsed < 120.0


# ---------------------------------------------------------------- 6


def random_layout(rng):
    n_hours = int(rng.integers(10, 60)) * 24
    present = np.ones(n_hours, bool)
    for _ in range(int(rng.integers(0, 4))):
        g0 = int(rng.integers(0, n_hours - 1))
        present[g0 : g0 + int(rng.integers(1, 90))] = False
    present[0] = present[-1] = True
    times = [T0 + timedelta(hours=int(h)) for h in np.flatnonzero(present)]
    kinds = [
        EventKind.DEPLOYMENT, EventKind.SET, EventKind.RETRIEVAL_AT_SEA,
        EventKind.RECOVERY_AT_PORT, EventKind.LOSS,
    ]
    events = []
    for _ in range(int(rng.integers(0, 5))):
        at = T0 + timedelta(hours=float(rng.uniform(-24.0, n_hours + 24.0)))
        events.append(LogbookEvent("B", at, 0.0, 0.0, kinds[int(rng.integers(len(kinds)))]))
    events.sort(key=lambda e: e.timestamp)
    return times, events


def test_criterion_6_segment_layouts(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    bad = []
    for rep in range(1000):
        times, events = random_layout(rng)
        segs = generate_segments(times, events)
        for seg in segs:
            if seg.end - seg.start <= timedelta(hours=72):
                bad.append((rep, "short"))
            if any(
                e.kind in SEGMENT_GENERATING and seg.start < e.timestamp < seg.end
                for e in events
            ):
                bad.append((rep, "interior event"))
            inside = [t for t in times if seg.start <= t <= seg.end]
            if any(
                b - a > timedelta(hours=24) for a, b in zip(inside, inside[1:])
            ):
                bad.append((rep, "interior gap"))
        extras = [
            LogbookEvent(
                "B",
                T0 + timedelta(hours=float(rng.uniform(0, 1000))),
                0.0, 0.0,
                EventKind.VISIT if rng.random() < 0.5 else EventKind.MODIFICATION,
            )
            for _ in range(3)
        ]
        merged = sorted(events + extras, key=lambda e: e.timestamp)
        if generate_segments(times, merged) != segs:
            bad.append((rep, "visit changed output"))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 5.0
    _verdict(
        capfd, 6, ok,
        f"1000 layouts: >72h, no interior cut causes, visits inert, {elapsed:.2f}s < 5s",
    )
    assert not bad, bad[:5]
    assert elapsed < 5.0


# ---------------------------------------------------------------- 7


def n_runs(b):
    return sum(1 for i, v in enumerate(b) if i == 0 or v != b[i - 1])


def test_criterion_7_binary_smoother(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(107)
    bad = []
    if smooth_binary([1, 0, 1, 0, 1]) != [1, 1, 1, 1, 1]:
        bad.append("alternating oracle")
    for rep in range(10000):
        n = int(rng.integers(1, 40))
        b = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int).tolist()
        out = smooth_binary(b)
        if smooth_binary(out) != out:
            bad.append(rep)
        elif n_runs(out) > n_runs(b):
            bad.append(rep)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 2.0
    _verdict(
        capfd, 7, ok,
        f"10000 series: fixed point, run count never grows, {elapsed:.2f}s < 2s",
    )
    assert not bad, bad[:5]
    assert elapsed < 2.0


# ---------------------------------------------------------------- 8


def _snapshot(root):
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.glob("**/*"))
        if p.is_file()
    }


def _full_run(out, workers):
    cfg = PipelineConfig(
        buoy_path=str(out / SYNTH_BUOY_FILE),
        logbook_path=str(out / SYNTH_LOGBOOK_FILE),
        bathymetry_path=str(out / SYNTH_BATHY_FILE),
        out_dir=str(out),
        workers=workers,
    )
    stage_synth(cfg, SynthConfig(n_buoys=6, days_per_buoy=60, seed=5, event_rate=5.0))
    run_pipeline(cfg)
    return _snapshot(out)


def test_criterion_8_deterministic_bundles(capfd, tmp_path):
    failures = []
    serial_dir = tmp_path / "serial"
    first = _full_run(serial_dir, workers=1)
    shutil.rmtree(serial_dir)
    second = _full_run(serial_dir, workers=1)
    if first != second:
        diff = [k for k in first if first.get(k) != second.get(k)]
        failures.append(f"serial rerun differs: {diff[:4]}")

    parallel_dir = tmp_path / "parallel"
    p_first = _full_run(parallel_dir, workers=2)
    shutil.rmtree(parallel_dir)
    p_second = _full_run(parallel_dir, workers=2)
    if p_first != p_second:
        diff = [k for k in p_first if p_first.get(k) != p_second.get(k)]
        failures.append(f"parallel rerun differs: {diff[:4]}")

    # serial and parallel agree on every artifact; the manifest echoes the
    # differing workers/out_dir config and is excluded
    keys_s = {k for k in first if k != MANIFEST_FILE}
    keys_p = {k for k in p_first if k != MANIFEST_FILE}
    if keys_s != keys_p:
        failures.append("file sets differ")
    else:
        diff = [k for k in sorted(keys_s) if first[k] != p_first[k]]
        if diff:
            failures.append(f"parallel content differs: {diff[:4]}")
    man_s = json.loads(first[MANIFEST_FILE])
    man_p = json.loads(p_first[MANIFEST_FILE])
    if man_s["stages"] != man_p["stages"]:
        failures.append("stage counts differ between serial and parallel")

    ok = not failures
    _verdict(capfd, 8, ok, "same seed/config reruns byte-identical, serial == parallel")
    assert not failures, failures
