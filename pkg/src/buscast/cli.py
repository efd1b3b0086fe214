"""Command-line entry point.

Subcommands mirror the pipeline stages; `run` executes everything. Any
config-file key can be overridden by a flag of the same name. Exit codes:
0 success, 2 config error, 3 data error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from .config import RunConfig, build_config, parse_config_file
from .errors import ConfigError, DataError

STAGES = [
    "ingest", "clean", "features", "regionalize", "train", "evaluate",
    "importance", "run", "synth",
]


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None, metavar="V")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buscast",
        description="Batch forecasting of stop-level bus ridership",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        if name == "synth":
            p = sub.add_parser(name, help="generate a synthetic city dataset")
            p.add_argument("--out", required=True)
            p.add_argument("--n-stops", type=int, default=120)
            p.add_argument("--n-routes", type=int, default=4)
            p.add_argument("--days", type=int, default=60)
            p.add_argument("--seed", type=int, default=7)
            p.add_argument("--start", default="2023-01-01")
        else:
            p = sub.add_parser(name, help=f"run the pipeline through `{name}`")
            _add_config_flags(p)
    return parser


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return build_config(file_values, overrides)


def _cmd_synth(args) -> int:
    from datetime import date

    from .synth import generate_synthetic_city

    paths = generate_synthetic_city(
        args.out, n_stops=args.n_stops, n_routes=args.n_routes,
        days=args.days, seed=args.seed, start=date.fromisoformat(args.start),
    )
    for key in sorted(paths):
        print(f"{key}: {paths[key]}")
    return 0


def _cmd_stage(command: str, cfg: RunConfig) -> int:
    from pathlib import Path

    from . import report
    from .pipeline import Pipeline

    pipe = Pipeline(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipe._check_manifest()

    if command == "run":
        pipe.run()
        print(f"report written to {out}")
        return 0

    if command == "ingest":
        events = pipe.inputs()["events"]
        events.to_csv(out / "events.csv", index=False)
        print(f"{len(events)} events -> {out / 'events.csv'}")
    elif command == "clean":
        cleaned = pipe.cleaned()
        report.write_cleaning(out, cleaned, [])
        cleaned["events"].to_csv(out / "events_clean.csv", index=False)
        print(
            f"kept {len(cleaned['events'])} events; "
            f"dropped {len(cleaned['negative_keys'])} negative, "
            f"{len(cleaned['capacity_keys'])} capacity rides"
        )
    elif command == "features":
        # first split only: snapshot dump plus the feature registry
        plan = pipe.plans()[0]
        result = pipe.prepare_split(plan, keep_snapshots=True)
        report.write_snapshot_dump(out, result.snapshots, result.label)
        registry = result.matrices["train"].registry
        (out / "feature_registry.txt").write_text("\n".join(registry) + "\n")
        print(f"snapshot dump + registry ({len(registry)} columns) -> {out}")
    elif command == "regionalize":
        results = [pipe.prepare_split(p) for p in pipe.plans()]
        report.write_partitions(out, results)
        report.write_splits(out, results)
        print(f"partitions for {len(results)} splits -> {out / 'partitions'}")
    elif command == "train":
        results = [pipe.run_split(p) for p in pipe.plans()]
        report.write_models(out, results)
        print(f"model artifacts -> {out / 'models'}")
    elif command == "evaluate":
        results = [pipe.run_split(p) for p in pipe.plans()]
        metrics_df = report.write_metrics(out, results)
        report.write_stratified(out, results)
        report.write_monthly(out, results)
        report.write_tests(out, metrics_df, cfg)
        report.write_diagnostics(out, results)
        report.write_error_demand(out, results, pipe)
        if cfg.figures:
            report.render_figures(out, results, metrics_df, None)
        print(f"evaluation tables -> {out}")
    elif command == "importance":
        results = [pipe.run_split(p) for p in pipe.plans()]
        imp = pipe._importance(results)
        if imp is None:
            raise DataError("no trained model available for importance")
        imp.to_csv(out / "importance.csv", index=False)
        print(f"importance table -> {out / 'importance.csv'}")
    pipe._write_manifest()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        cfg = _config_from_args(args)
        return _cmd_stage(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # stage failure
        print(f"stage failure ({args.command}): {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
