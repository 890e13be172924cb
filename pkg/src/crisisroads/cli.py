"""Command-line interface: ``crisisroads <subcommand> [options]``.

Exit codes: 0 success, 1 fatal data error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .ingest import IngestError, load_region, plan_grid
from .pipeline import (
    DATA_ERRORS,
    STAGES,
    ConfigError,
    PipelineConfig,
    StageFailure,
    fmt9,
    run,
)
from .testkit import HazardField, OKC_CENTER, gen_scenario, write_bundle
from .textproc import _data_path

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="flat key = value config file", **(d or {"default": None}))
    parser.add_argument("--out-dir", help="output directory (default: out)", **(d or {"default": "out"}))
    parser.add_argument("--seed", type=int, help="random seed (sets rng_seed)", **(d or {"default": None}))
    parser.add_argument("--verbose", action="store_true", help="debug logging", **(d or {"default": False}))


def _config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (same names as config keys)")
    for f in fields(PipelineConfig):
        if f.name == "base_dir":
            continue
        names = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            names.append(f"--{f.name}")
        if f.type == "bool":
            group.add_argument(*names, dest=f"cfg_{f.name}", action="store_const", const="true", default=None)
        else:
            group.add_argument(*names, dest=f"cfg_{f.name}", default=None, metavar=f.name.upper())


def _timings_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--timings", default=None, metavar="PATH", help="write per-stage wall-clock seconds here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crisisroads", description="Map crisis-post sentiment onto a road network and compare edge centralities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-grid", parents=[common], help="write the point-radius coverage lattice")
    p.add_argument("--region", default=None, help="region GeoJSON (default: bundled Oklahoma outline)")
    p.add_argument("--radius-miles", type=float, default=25.0)
    p.add_argument("--spacing-miles", type=float, default=25.0)

    for stage in STAGES:
        p = sub.add_parser(stage, parents=[common], help=f"run only the {stage} stage")
        _timings_flag(p)
        _config_flags(p)

    p = sub.add_parser("run", parents=[common], help="run the full pipeline")
    p.add_argument("--from", dest="from_stage", default="ingest", choices=STAGES, help="resume at this stage")
    _timings_flag(p)
    _config_flags(p)

    p = sub.add_parser("validate", parents=[common], help="check a config without running it")
    _config_flags(p)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic input bundle")
    p.add_argument("--n-posts", type=int, default=2000)
    p.add_argument("--noise-sd", type=float, default=0.25)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--decay-m", type=float, default=4000.0)
    p.add_argument("--center-lon", type=float, default=OKC_CENTER[0])
    p.add_argument("--center-lat", type=float, default=OKC_CENTER[1])
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig(base_dir=str(Path.cwd()))
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.seed is not None:
        overrides["rng_seed"] = str(args.seed)
    if args.config:
        # flag paths are relative to the working directory, not the config file
        for key in list(overrides):
            if key in ("posts", "region", "nodes", "edges", "lexicon", "boosters", "negators", "emoji",
                       "stopwords", "lemmas", "relevance"):  # fmt: skip
                overrides[key] = str(Path(overrides[key]).resolve())
    return cfg.with_overrides(overrides)


def _cmd_plan_grid(args) -> int:
    region = load_region(args.region or _data_path("oklahoma.geojson"))
    grid = plan_grid(region, args.radius_miles, args.spacing_miles)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "coverage_grid.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("center_id,lon,lat\n")
        for i, (lon, lat) in enumerate(grid.centers):
            fh.write(f"{i},{fmt9(lon)},{fmt9(lat)}\n")
    print(f"{len(grid)} centers ({grid.nx} x {grid.ny}) written to {path}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    hazard = HazardField(args.center_lon, args.center_lat, args.peak, args.decay_m)
    seed = args.seed if args.seed is not None else 0
    scenario = gen_scenario(seed, n_posts=args.n_posts, hazard=hazard, noise_sd=args.noise_sd)
    paths = write_bundle(scenario, args.out_dir)
    print(f"bundle written; run with: crisisroads run --config {paths['config']}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    problems = load_config(args).validate()
    for p in problems:
        print(p)
    if not problems:
        print("config ok")
    return EXIT_CONFIG if problems else EXIT_OK


def _cmd_run(args, only: str | None = None) -> int:
    cfg = load_config(args)
    manifest = run(cfg, args.out_dir, getattr(args, "from_stage", "ingest"), only, args.timings)
    for s in manifest.stages:
        print(f"{s['name']:<11} {json.dumps(s['counts'], sort_keys=True)}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "plan-grid":
            return _cmd_plan_grid(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_run(args, only=args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IngestError, *DATA_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
