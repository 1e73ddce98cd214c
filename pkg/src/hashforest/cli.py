"""Command-line entry point: ``hashforest {prepare,run,sweep,table}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import report
from .dataset import DatasetError, SplitSpec, balance_classes, info_gain_rank, load_csv
from .forest import ForestConfig
from .hashens import EnsembleConfig
from .pipeline import DEFAULT_SEED, ExperimentConfig, run_experiment, run_sweep
from .poison import Perturbation, PoisonSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3


def _percent(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 100:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 100]")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return v


def _kind(text: str) -> Perturbation:
    try:
        return Perturbation.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hashforest",
        description="Poison tabular training sets and compare random forests with "
                    "hash-partitioned forest ensembles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="load, balance and feature-reduce a CSV dataset")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--label", required=True, help="name of the label column")
    p.add_argument("--balance", action="store_true", help="subsample the majority class")
    p.add_argument("--infogain", type=_positive, metavar="K",
                   help="keep the K features with the highest information gain")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("run", help="evaluate one configuration")
    parser.run_parser = p
    p.add_argument("--dataset", required=True, type=Path,
                   help="prepared CSV; the last column is the label")
    p.add_argument("--perturbation", required=True, type=_kind,
                   help="zeroing | noising | out-of-ranging | label-flipping")
    p.add_argument("--epsilon-points", required=True, type=_percent, metavar="P")
    p.add_argument("--epsilon-features", type=_percent, metavar="F",
                   help="required except for label-flipping")
    p.add_argument("--n-models", required=True, type=_positive, metavar="N")
    p.add_argument("--repetitions", type=_positive, default=5, metavar="R")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, metavar="S")
    p.add_argument("--threads", type=_positive, default=1, help="worker processes")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sweep", help="evaluate every coordinate of a grid file")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--grid", required=True, type=Path)
    p.add_argument("--repetitions", type=_positive, default=None, metavar="R")
    p.add_argument("--seed", type=int, default=None, metavar="S")
    p.add_argument("--threads", type=_positive, default=1, help="worker processes")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("table", help="print Table-2-style results of a sweep or run")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--metric", choices=("delta", "accuracy"), default="delta")
    return parser


def cmd_prepare(args) -> int:
    d = load_csv(args.dataset, args.label)
    n0, n1 = d.class_counts()
    print(f"loaded {len(d)} points, {d.n_features} features; "
          f"{d.class_names[0]}={n0} {d.class_names[1]}={n1}")
    if args.balance:
        d = balance_classes(d, args.seed)
    if args.infogain is not None:
        keep = sorted(info_gain_rank(d, args.infogain))
        d = d.select_features(keep)
    n0, n1 = d.class_counts()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    d.to_csv(args.out)
    print(f"wrote {len(d)} points, {d.n_features} features; "
          f"{d.class_names[0]}={n0} {d.class_names[1]}={n1} -> {args.out}")
    return EXIT_OK


def _base_config(dataset: Path, kind: Perturbation, eps_p: float, eps_f: float, n_models: int,
                 repetitions: int, seed: int, n_trees: int = 100,
                 test_fraction: float = 0.2) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=dataset,
        poison=PoisonSpec(kind, eps_p, eps_f),
        ensemble=EnsembleConfig(n_models, forest_config=ForestConfig(n_trees=n_trees)),
        split=SplitSpec(test_fraction=test_fraction),
        repetitions=repetitions, seed=seed)


def cmd_run(args) -> int:
    cfg = _base_config(args.dataset, args.perturbation, args.epsilon_points,
                       args.epsilon_features or 0.0, args.n_models, args.repetitions, args.seed)
    rep = run_experiment(cfg, workers=args.threads)
    report.write_run(args.out, rep)
    print(report.summary_line(rep))
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid, settings = report.parse_grid(args.grid.read_text(encoding="utf-8"))
    repetitions = args.repetitions or settings.get("repetitions", 5)
    seed = args.seed if args.seed is not None else settings.get("seed", DEFAULT_SEED)
    base = _base_config(args.dataset, grid.perturbations[0], 0.0, 0.0, 1, repetitions, seed,
                        settings.get("n_trees", 100), settings.get("test_fraction", 0.2))
    total = len(grid.coordinates())
    done = [0]

    def progress(key):
        done[0] += 1
        print(f"[{done[0]}/{total}] {key}", file=sys.stderr)

    outcome = run_sweep(grid, base, args.out, workers=args.threads, progress=progress)
    if outcome.skipped:
        print(f"skipped {len(outcome.skipped)} finished coordinates", file=sys.stderr)
    if outcome.reports:
        report.write_sweep(args.out, outcome.reports)
    failures_path = args.out / "failures.json"
    if outcome.failures:
        args.out.mkdir(parents=True, exist_ok=True)
        failures_path.write_text(json.dumps(outcome.failures, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        for key, msg in sorted(outcome.failures.items()):
            print(f"failed: {key}: {msg}", file=sys.stderr)
    elif failures_path.exists():
        failures_path.unlink()
    print(f"{len(outcome.reports)}/{total} coordinates complete -> {args.out}")
    if not outcome.reports:
        return EXIT_FAIL
    return EXIT_PARTIAL if outcome.failures else EXIT_OK


def cmd_table(args) -> int:
    rows = report.read_aggregate(args.in_dir)
    sys.stdout.write(report.render_table(rows, args.metric))
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "run": cmd_run, "sweep": cmd_sweep, "table": cmd_table}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if (args.command == "run" and args.perturbation.uses_features
            and args.epsilon_features is None):
        parser.run_parser.error(f"--epsilon-features is required for {args.perturbation.value}")
    logging.basicConfig(level=os.environ.get("HASHFOREST_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, DatasetError, ValueError) as exc:
        print(f"hashforest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
