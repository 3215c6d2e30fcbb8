"""Synthetic fleet generator: envelopes, truth series, file output."""

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from dfadkit.data_model import (
    BUOY_HEADER,
    EventKind,
    parse_bathymetry,
    parse_buoy_csv,
    parse_logbook_csv,
)
from dfadkit.estimation import aggregate_daily, hourly_series, impute_zero
from dfadkit.synthgen import (
    GROUND_TRUTH_HEADER,
    SynthConfig,
    _envelope,
    _signal,
    buoy_ident,
    generate_buoy,
    generate_dataset,
    ground_truth_episodes,
    sample_lognormal,
    true_daily_series,
    write_flat_bathymetry,
)

UTC = timezone.utc


def cfg_of(**kw):
    return SynthConfig(**kw)


def parse_rows(rows, tmp_path):
    p = tmp_path / "rows.csv"
    p.write_text(",".join(BUOY_HEADER) + "\n" + "\n".join(rows) + "\n")
    return parse_buoy_csv(p)


# -------------------------------------------------------------- SynthConfig


def test_config_validation():
    for bad in (
        dict(n_buoys=0),
        dict(days_per_buoy=0),
        dict(presence_median_days=0.0),
        dict(absence_median_days=-1.0),
        dict(presence_sigma=-0.1),
        dict(rise_fraction=0.0),
        dict(rise_fraction=1.0),
        dict(peak_min_tonnage=0.0),
        dict(peak_min_tonnage=30.0, peak_max_tonnage=20.0),
        dict(noise_sd=-1.0),
        dict(event_rate=-0.5),
        dict(start=datetime(2022, 1, 1)),
    ):
        with pytest.raises(ValueError):
            cfg_of(**bad)
    assert cfg_of(days_per_buoy=90).total_hours == 2160


def test_buoy_ident():
    assert buoy_ident(7) == "SB0007"
    assert buoy_ident(512) == "SB0512"


def test_sample_lognormal_median():
    rng = np.random.default_rng(0)
    draws = sample_lognormal(rng, 6.0, 0.5, 4000)
    assert abs(float(np.median(draws)) - 6.0) < 0.5
    assert float(sample_lognormal(rng, 6.0, 0.0)) == 6.0


# ----------------------------------------------------------------- envelope


def test_envelope_oracle():
    cfg = cfg_of(days_per_buoy=30, rise_fraction=0.4)
    env = _envelope(cfg, [(240.0, 480.0, 30.0)], [])
    # 10-day episode, peak 30 t reached 4 days in (hour 336)
    assert env[336] == 30.0
    assert int(np.argmax(env)) == 336
    assert env[240] == 10.0
    assert env[288] == 20.0
    assert env[480] == 10.0
    # 48 h shoulders ramp 0 -> 10 -> 0
    assert env[192] == 0.0
    assert env[216] == 5.0
    assert env[504] == 5.0
    assert env[528] == 0.0
    assert env[191] == 0.0 and env[529] == 0.0


def test_envelope_set_empties_rest_of_episode():
    cfg = cfg_of(days_per_buoy=30)
    quiet = _envelope(cfg, [(240.0, 480.0, 30.0)], [300.0])
    assert quiet[299] > 0.0
    assert not quiet[300:].any()
    # a set after the episode's shoulder changes nothing
    late = _envelope(cfg, [(240.0, 480.0, 30.0)], [600.0])
    full = _envelope(cfg, [(240.0, 480.0, 30.0)], [])
    assert np.array_equal(late, full)


def test_envelope_overlap_takes_max():
    cfg = cfg_of(days_per_buoy=30)
    a = _envelope(cfg, [(100.0, 300.0, 20.0)], [])
    b = _envelope(cfg, [(250.0, 450.0, 35.0)], [])
    both = _envelope(cfg, [(100.0, 300.0, 20.0), (250.0, 450.0, 35.0)], [])
    assert np.array_equal(both, np.maximum(a, b))


def test_signal_floor_clip_diel():
    cfg = cfg_of(days_per_buoy=2, diel_amplitude=5.0)
    env = np.full(48, 20.0)
    sig = _signal(cfg, env)
    assert sig[6] == 25.0  # diel crest
    assert sig[18] == 15.0
    low = _signal(cfg_of(days_per_buoy=2), np.full(48, 0.6))
    assert not low.any()  # under the 1 t emission floor
    high = _signal(cfg_of(days_per_buoy=2), np.full(48, 80.0))
    assert (high == 63.0).all()


# -------------------------------------------------------------- generate_buoy


def test_generate_buoy_deterministic():
    cfg = cfg_of(n_buoys=2, days_per_buoy=20, seed=42)
    a = generate_buoy(cfg, 1)
    b = generate_buoy(cfg, 1)
    assert a == b
    c = generate_buoy(cfg, 0)
    assert c[0] != a[0]


def test_generate_buoy_rows_parse_clean(tmp_path):
    cfg = cfg_of(days_per_buoy=20, seed=3)
    rows, events, _ = generate_buoy(cfg, 0)
    assert len(rows) == cfg.total_hours
    records, rejects = parse_rows(rows, tmp_path)
    assert rejects == []
    assert len(records) == len(rows)
    # absence hours transmit GPS only
    assert any(r.layers is None for r in records)
    assert any(r.layers is not None for r in records)
    assert events[0].kind is EventKind.DEPLOYMENT
    assert events[0].timestamp == cfg.start


def test_event_rate_zero_means_deployment_only():
    cfg = cfg_of(days_per_buoy=30, event_rate=0.0)
    _, events, _ = generate_buoy(cfg, 0)
    assert [e.kind for e in events] == [EventKind.DEPLOYMENT]


def test_event_rate_draws_sets():
    cfg = cfg_of(days_per_buoy=60, event_rate=20.0, seed=5)
    _, events, _ = generate_buoy(cfg, 0)
    sets = [e for e in events if e.kind is EventKind.SET]
    assert sets
    stamps = [e.timestamp for e in sets]
    assert stamps == sorted(stamps)
    assert all(cfg.start <= t < cfg.start + timedelta(hours=cfg.total_hours) for t in stamps)


def test_noise_free_rows_reproduce_truth(tmp_path):
    cfg = cfg_of(days_per_buoy=30, noise_sd=0.0, seed=11)
    rows, _, gt_rows = generate_buoy(cfg, 0)
    records, rejects = parse_rows(rows, tmp_path)
    assert rejects == []
    daily = aggregate_daily(hourly_series(impute_zero(records)))
    truth = true_daily_series(cfg, 0)
    assert daily is not None and truth is not None
    assert daily.start == truth.start
    assert daily.tonnage == truth.tonnage
    assert daily.binary == truth.binary
    # the shipped ground-truth rows describe exactly these episodes
    eps = ground_truth_episodes(cfg, 0)
    assert len(gt_rows) == len(eps)
    for row, ep in zip(gt_rows, eps):
        bid, idx, s, pk, e, at, dt = row.split(",")
        assert (int(s), int(pk), int(e)) == (ep.run_start, ep.peak_day, ep.run_end)
        assert at == ("" if ep.at_days is None else str(ep.at_days))
        assert dt == ("" if ep.dt_days is None else str(ep.dt_days))


def test_truth_ignores_noise_draws():
    noisy = cfg_of(days_per_buoy=30, noise_sd=3.0, seed=11)
    clean = cfg_of(days_per_buoy=30, noise_sd=0.0, seed=11)
    a, b = true_daily_series(noisy, 0), true_daily_series(clean, 0)
    assert a.tonnage == b.tonnage


# ------------------------------------------------------------ dataset files


def test_generate_dataset_files(tmp_path):
    cfg = cfg_of(n_buoys=3, days_per_buoy=15, seed=7)
    paths = [tmp_path / n for n in ("b.csv", "l.csv", "t.csv", "bathy.txt")]
    counts = generate_dataset(cfg, *paths)
    btext = paths[0].read_text()
    assert btext.count("\n") - 1 == counts["buoy_rows"] == 3 * cfg.total_hours
    assert paths[1].read_text().count("\n") - 1 == counts["logbook_rows"]
    ttext = paths[2].read_text()
    assert ttext.splitlines()[0] == ",".join(GROUND_TRUTH_HEADER)
    assert ttext.count("\n") - 1 == counts["truth_rows"]
    records, rejects = parse_buoy_csv(paths[0])
    assert rejects == [] and len(records) == counts["buoy_rows"]
    events, erej = parse_logbook_csv(paths[1])
    assert erej == [] and len(events) == counts["logbook_rows"]
    grid = parse_bathymetry(paths[3])
    assert grid.depth_at(records[0].lat, records[0].lon) == 4000.0


def test_generate_dataset_parallel_identical(tmp_path):
    cfg = cfg_of(n_buoys=4, days_per_buoy=10, seed=9)
    serial = [tmp_path / f"s{i}" for i in range(3)]
    parallel = [tmp_path / f"p{i}" for i in range(3)]
    c1 = generate_dataset(cfg, *serial)
    c2 = generate_dataset(cfg, *parallel, workers=2)
    assert c1 == c2
    for a, b in zip(serial, parallel):
        assert a.read_bytes() == b.read_bytes()


def test_write_flat_bathymetry(tmp_path):
    path = tmp_path / "flat.txt"
    write_flat_bathymetry(path, 2500.0)
    grid = parse_bathymetry(path)
    assert grid.depth_at(0.0, 0.0) == 2500.0
    assert grid.depth_at(80.0, 170.0) == 2500.0
