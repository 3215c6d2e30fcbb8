"""Command line front end.

One subcommand per pipeline stage plus ``synth`` (dataset generation)
and ``run`` (all stages). Configuration comes from defaults, then an
optional JSON ``--config`` file, then explicit flags, in that order.
Exit codes: 0 success, 2 unreadable or malformed input, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data_model import BasinBounds, parse_utc
from .pipeline import (
    PipelineConfig,
    PipelineInputError,
    StageFailure,
    config_from_dict,
    load_config,
    run_pipeline,
    run_stage,
    stage_synth,
)
from .synthgen import SynthConfig

_CONFIG_FLAGS = [
    # (flag, config field, type)
    ("--buoys", "buoy_path", str),
    ("--logbook", "logbook_path", str),
    ("--bathymetry", "bathymetry_path", str),
    ("--estimates", "estimates_path", str),
    ("--out", "out_dir", str),
    ("--tonnage-threshold", "tonnage_threshold", float),
    ("--max-speed-knots", "max_speed_knots", float),
    ("--min-depth-m", "min_depth_m", float),
    ("--gap-hours", "gap_hours", float),
    ("--min-segment-hours", "min_segment_hours", float),
    ("--window-max-missing", "window_max_missing", float),
    ("--series-max-missing", "series_max_missing", float),
    ("--edge-days", "edge_days", int),
    ("--min-segment-days", "min_segment_days", int),
    ("--dunn-adjust", "dunn_adjust", str),
    ("--workers", "workers", int),
]

_SYNTH_FLAGS = [
    ("--n-buoys", "n_buoys", int),
    ("--days-per-buoy", "days_per_buoy", int),
    ("--presence-median", "presence_median_days", float),
    ("--presence-sigma", "presence_sigma", float),
    ("--absence-median", "absence_median_days", float),
    ("--absence-sigma", "absence_sigma", float),
    ("--peak-min", "peak_min_tonnage", float),
    ("--peak-max", "peak_max_tonnage", float),
    ("--rise-fraction", "rise_fraction", float),
    ("--noise-sd", "noise_sd", float),
    ("--diel-amplitude", "diel_amplitude", float),
    ("--event-rate", "event_rate", float),
    ("--seed", "seed", int),
]

STAGE_COMMANDS = ("clean", "estimate", "segment", "smooth", "metrics", "stats", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfadkit",
        description="Echo-sounder buoy aggregation analytics pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    for flag, dest, typ in _CONFIG_FLAGS:
        common.add_argument(flag, dest=dest, type=typ, default=None)
    common.add_argument(
        "--lambda-grid", dest="lambda_grid", default=None,
        help="comma-separated penalty weights",
    )
    common.add_argument("--atlantic-west", dest="atlantic_west", type=float, default=None)
    common.add_argument("--atlantic-east", dest="atlantic_east", type=float, default=None)
    common.add_argument("--indian-east", dest="indian_east", type=float, default=None)
    common.add_argument("--max-abs-lat", dest="max_abs_lat", type=float, default=None)

    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic fleet")
    for flag, dest, typ in _SYNTH_FLAGS:
        synth.add_argument(flag, dest=dest, type=typ, default=None)
    synth.add_argument("--start", dest="start", default=None, help="first hour (ISO 8601 UTC)")

    for name in STAGE_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return parser


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    for _flag, dest, _typ in _CONFIG_FLAGS:
        value = getattr(args, dest)
        if value is not None:
            overrides[dest] = value
    if args.lambda_grid is not None:
        try:
            overrides["lambda_grid"] = [float(v) for v in args.lambda_grid.split(",")]
        except ValueError as e:
            raise PipelineInputError(f"bad --lambda-grid: {e}") from e
    bounds_over = {
        k: getattr(args, k)
        for k in ("atlantic_west", "atlantic_east", "indian_east", "max_abs_lat")
        if getattr(args, k) is not None
    }
    if bounds_over:
        merged = {**vars(cfg.basin_bounds), **bounds_over}
        overrides["basin_bounds"] = BasinBounds(**merged)
    return config_from_dict(overrides, cfg)


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    kwargs = {}
    for _flag, dest, _typ in _SYNTH_FLAGS:
        value = getattr(args, dest)
        if value is not None:
            kwargs[dest] = value
    if args.start is not None:
        try:
            kwargs["start"] = parse_utc(args.start)
        except ValueError as e:
            raise PipelineInputError(f"bad --start: {e}") from e
    try:
        return SynthConfig(**kwargs)
    except ValueError as e:
        raise PipelineInputError(str(e)) from e


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _pipeline_config(args)
        if args.command == "synth":
            counts = stage_synth(cfg, _synth_config(args))
        elif args.command == "run":
            counts = run_pipeline(cfg)
        else:
            counts = run_stage(args.command, cfg)
    except PipelineInputError as e:
        print(f"dfadkit: input error: {e}", file=sys.stderr)
        return 2
    except StageFailure as e:
        print(f"dfadkit: {e}", file=sys.stderr)
        return 3
    json.dump(counts, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
