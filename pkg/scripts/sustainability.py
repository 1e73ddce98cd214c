"""Training cost of monolithic and ensemble forests as N, the share of
training points and the share of features grow.

Writes one CSV per sweep axis (N, points, features) with wall time, CPU user
time and peak memory, ready for plotting.

    python3 scripts/sustainability.py --dataset data/spambase_balanced.csv --out results/cost
"""

from __future__ import annotations

import argparse
import os
from dataclasses import replace
from pathlib import Path

from hashforest import ForestConfig, SplitSpec, load_csv, split_train_test
from hashforest.pipeline import DEFAULT_SEED, run_scaling
from hashforest.report import write_scaling
from hashforest.seeding import SPLIT, derive_seed

N_VALUES = (1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21)
PERCENTS = (25, 50, 75, 100)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--repetitions", type=int, default=3)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--n-trees", type=int, default=100)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args(argv)

    data = load_csv(args.dataset)
    train, _ = split_train_test(data, replace(SplitSpec(), seed=derive_seed(args.seed, SPLIT)))
    common = dict(forest=ForestConfig(n_trees=args.n_trees), repetitions=args.repetitions,
                  workers=args.threads, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    sweeps = {
        "cost_vs_n.csv": dict(n_models=N_VALUES),
        "cost_vs_points.csv": dict(n_models=(1, 21), data_percents=PERCENTS),
        "cost_vs_features.csv": dict(n_models=(1, 21), feature_percents=PERCENTS),
    }
    for name, axes in sweeps.items():
        rows = run_scaling(train, **axes, **common)
        write_scaling(args.out / name, rows)
        for r in rows:
            print(f"{name}: N={r['n_models']} points={r['points']} features={r['features']} "
                  f"wall={r['wall_seconds']:.2f}s cpu={r['cpu_user_seconds']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
