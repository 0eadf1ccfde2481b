"""Command line: run experiments, recompute metrics, export terrain."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (ARENAS, VARIANTS, ExperimentConfig, arena_config, load_trials,
                         run_experiment, summarize, write_report)
from .terrain import ConfigurationError, TerrainConfig, generate_terrain


class CliError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _seed_list(text: str) -> list[int]:
    try:
        return [int(p) for p in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _selection(values: list[str] | None) -> list[str] | None:
    if not values:
        return None
    return [item for v in values for item in _csv_list(v)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="terrain-explorer",
                                     description="Confidence-aware exploration experiments on synthetic lunar terrain.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment matrix")
    run.add_argument("config", nargs="?", help="experiment YAML (defaults apply when omitted)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed-list", type=_seed_list, help="comma-separated trial seeds")
    run.add_argument("--trials", type=int, help="use the first N seeds")
    run.add_argument("--variant", action="append", help=f"one of {', '.join(VARIANTS)}; repeatable")
    run.add_argument("--arena", action="append", help=f"arena name, e.g. {', '.join(ARENAS)}; repeatable")
    run.add_argument("--quiet", action="store_true", help="no per-trial progress lines")

    metrics = sub.add_parser("metrics", help="recompute the report from stored records")
    metrics.add_argument("records", help="directory written by `run`")
    metrics.add_argument("--out", help="where to write the report (default: the records directory)")
    metrics.add_argument("--tail", type=float, default=0.05, help="low-confidence tail mass")
    metrics.add_argument("--curve-dt", type=float, default=10.0)
    metrics.add_argument("--horizon", type=float, default=2400.0)
    metrics.add_argument("--variant", action="append", help="restrict to these variants")
    metrics.add_argument("--arena", action="append", help="restrict to these arenas")

    terrain = sub.add_parser("terrain", help="export a ground-truth heightfield as CSV")
    terrain.add_argument("arena", help="arena name or terrain YAML path")
    terrain.add_argument("--out", required=True, help="CSV path")
    terrain.add_argument("--resolution", type=float, default=0.5)
    terrain.add_argument("--seed", type=int, help="override the terrain seed")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        data = dataclass_dict(ExperimentConfig.load(args.config))
    if args.seed_list:
        data["seeds"] = args.seed_list
    if args.trials is not None:
        if args.trials < 1:
            raise CliError("--trials must be at least 1")
        seeds = data.get("seeds") or list(range(args.trials))
        if len(seeds) < args.trials:
            raise CliError(f"--trials {args.trials} exceeds the {len(seeds)} seeds given")
        data["seeds"] = seeds[:args.trials]
    if _selection(args.variant):
        data["variants"] = _selection(args.variant)
    if _selection(args.arena):
        data["arenas"] = _selection(args.arena)
    return ExperimentConfig.from_dict(data)


def dataclass_dict(cfg: ExperimentConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


def _print_table(report: dict, stream) -> None:
    theta = report["derived_threshold"]
    stream.write(f"derived low-confidence threshold: {theta}\n")
    stream.write(f"{'arena':<10} {'variant':<14} {'success':>8} {'avg time s':>11} {'low-conf %':>11}\n")
    for arena, variants in report["arenas"].items():
        for variant, e in variants.items():
            ratio = e["low_confidence_ratio_pct"]
            ratio_s = "n/a" if ratio is None else f"{ratio:.2f}"
            stream.write(f"{arena:<10} {variant:<14} {e['success_rate']:>8} "
                         f"{e['average_time_s']:>11.1f} {ratio_s:>11}\n")


def cmd_run(args) -> int:
    config = _experiment_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(trial):
        if args.quiet:
            return
        if trial.record is None:
            sys.stderr.write(f"{trial.key}: error: {trial.error}\n")
        else:
            r = trial.record
            sys.stderr.write(f"{trial.key}: {r.termination} at {r.duration:.1f} s "
                             f"({r.wall_clock:.1f} s wall)\n")

    report = run_experiment(config, out, progress)
    _print_table(report, sys.stdout)
    return 0


def cmd_metrics(args) -> int:
    trials = load_trials(args.records)
    variants, arenas = _selection(args.variant), _selection(args.arena)
    trials = [t for t in trials if (variants is None or t.variant in variants)
              and (arenas is None or t.arena in arenas)]
    if not trials:
        raise CliError("no trials match the selection")
    report = summarize(trials, args.tail, args.curve_dt, args.horizon)
    write_report(report, args.out or args.records)
    _print_table(report, sys.stdout)
    return 0


def cmd_terrain(args) -> int:
    if args.arena in ARENAS:
        cfg = arena_config(args.arena)
    elif Path(args.arena).exists():
        cfg = TerrainConfig.load(args.arena)
    else:
        raise CliError(f"{args.arena!r} is neither a known arena nor a file")
    if args.resolution <= 0:
        raise CliError("--resolution must be positive")
    terrain = generate_terrain(cfg, args.seed)
    terrain.export_csv(args.out, args.resolution)
    return 0


COMMANDS = {"run": cmd_run, "metrics": cmd_metrics, "terrain": cmd_terrain}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CliError, ConfigurationError, FileNotFoundError, ValueError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(record) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
