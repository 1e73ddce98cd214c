"""Reading and writing experiment outputs.

Result files (``report.json``, ``runs.csv``, ``aggregate.csv``, ``table_*.csv``,
``series_*.csv``) depend only on data, configuration and seeds, so reruns are
byte-identical.  Wall-clock and resource measurements go to separate
``metering.*`` files.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .pipeline import Coordinate, EvaluationReport, Grid, STEPS
from .poison import Perturbation

COORD_DIR = "coordinates"

RUN_FIELDS = ["perturbation", "n_models", "epsilon_p", "epsilon_f", "repetition", "seed",
              "acc_clean_monolithic", "acc_poisoned_monolithic", "delta_monolithic",
              "acc_clean_ensemble", "acc_poisoned_ensemble", "delta_ensemble",
              "train_size", "test_size", "test_digest"]
AGG_FIELDS = ["perturbation", "n_models", "epsilon_p", "epsilon_f", "repetitions",
              "acc_clean_monolithic", "acc_poisoned_monolithic", "delta_monolithic",
              "acc_clean_ensemble", "acc_poisoned_ensemble", "delta_ensemble"]
METER_FIELDS = ["perturbation", "n_models", "epsilon_p", "epsilon_f", "repetition",
                *STEPS, "cpu_user_seconds", "peak_memory_bytes"]


def _coord_cells(c: Coordinate) -> list:
    return [c.kind.value, c.n_models, _fmt(c.epsilon_p), _fmt(c.epsilon_f)]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return str(int(x)) if x.is_integer() else repr(x)
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_rows(reports: Sequence[EvaluationReport]) -> list[list]:
    rows = []
    for rep in reports:
        for r in rep.repetitions:
            m, e = r.monolithic, r.ensemble
            rows.append([*_coord_cells(rep.coordinate), r.repetition, r.seed,
                         m.acc_clean, m.acc_poisoned, m.delta,
                         e.acc_clean, e.acc_poisoned, e.delta,
                         r.train_size, r.test_size, r.test_digest])
    return rows


def aggregate_rows(reports: Sequence[EvaluationReport]) -> list[list]:
    return [[*_coord_cells(rep.coordinate), len(rep.repetitions),
             rep.monolithic.acc_clean, rep.monolithic.acc_poisoned, rep.monolithic.delta,
             rep.ensemble.acc_clean, rep.ensemble.acc_poisoned, rep.ensemble.delta]
            for rep in reports]


def metering_rows(reports: Sequence[EvaluationReport]) -> list[list]:
    rows = []
    for rep in reports:
        for r in rep.repetitions:
            rows.append([*_coord_cells(rep.coordinate), r.repetition,
                         *(r.timings.get(s) for s in STEPS),
                         r.cpu_user_seconds, r.peak_memory_bytes])
    return rows


# -- single runs --------------------------------------------------------------

def write_run(out_dir, rep: EvaluationReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", rep.to_dict())
    _write_csv(out / "runs.csv", RUN_FIELDS, run_rows([rep]))
    _write_csv(out / "aggregate.csv", AGG_FIELDS, aggregate_rows([rep]))
    _write_json(out / "metering.json", rep.to_dict(metering=True))
    _write_csv(out / "metering.csv", METER_FIELDS, metering_rows([rep]))


def summary_line(rep: EvaluationReport) -> str:
    c = rep.coordinate
    return (f"{c.kind.value} eps_p={_fmt(c.epsilon_p)} eps_f={_fmt(c.epsilon_f)} "
            f"N={c.n_models}: monolithic delta={rep.monolithic.delta:.3f} "
            f"(acc {rep.monolithic.acc_poisoned:.3f}) | ensemble delta={rep.ensemble.delta:.3f} "
            f"(acc {rep.ensemble.acc_poisoned:.3f})")


# -- sweeps -----------------------------------------------------------------

def store_coordinate(out_dir, key: str, rep: EvaluationReport) -> None:
    d = Path(out_dir) / COORD_DIR
    d.mkdir(parents=True, exist_ok=True)
    tmp = d / f"{key}.json.tmp"
    _write_json(tmp, rep.to_dict(metering=True))
    tmp.replace(d / f"{key}.json")


def load_coordinate(out_dir, key: str) -> EvaluationReport | None:
    path = Path(out_dir) / COORD_DIR / f"{key}.json"
    if not path.is_file():
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            return EvaluationReport.from_dict(json.load(fh))
    except (ValueError, KeyError, TypeError):
        return None


def table_blocks(rows: Sequence[dict]) -> dict:
    """Group aggregate rows into Table-2-shaped blocks.

    Returns ``{(perturbation, epsilon_f): {"n": [...], "eps": [...],
    "delta": {(eps, n): v}, "acc": {(eps, n): v}}}``.  Column ``N = 1`` holds
    the monolithic model and row ``epsilon_p = 0`` the clean accuracies.
    """
    groups = defaultdict(list)
    for r in rows:
        groups[r["perturbation"], float(r["epsilon_f"])].append(r)
    blocks = {}
    for key, items in groups.items():
        ns = sorted({1} | {int(r["n_models"]) for r in items})
        eps = sorted({0.0} | {float(r["epsilon_p"]) for r in items})
        dlt, acc = {}, {}
        for r in items:
            ep, n = float(r["epsilon_p"]), int(r["n_models"])
            for col, which in ((1, "monolithic"), (n, "ensemble")):
                if col == 1 and (ep, 1) in dlt:
                    continue
                dlt[ep, col] = float(r[f"delta_{which}"])
                acc[ep, col] = float(r[f"acc_poisoned_{which}"])
                dlt.setdefault((0.0, col), 0.0)
                acc.setdefault((0.0, col), float(r[f"acc_clean_{which}"]))
        blocks[key] = {"n": ns, "eps": eps, "delta": dlt, "acc": acc}
    return blocks


def _block_name(kind: str, eps_f: float) -> str:
    if Perturbation(kind).uses_features:
        return f"table_{kind}_f{_fmt(eps_f)}"
    return f"table_{kind}"


def write_table_csvs(out_dir, rows: Sequence[dict]) -> list[Path]:
    paths = []
    for (kind, ef), b in sorted(table_blocks(rows).items()):
        body = []
        for ep in b["eps"]:
            for metric, cells in (("delta", b["delta"]), ("accuracy", b["acc"])):
                body.append([_fmt(ep), metric, *(cells.get((ep, n)) for n in b["n"])])
        path = Path(out_dir) / f"{_block_name(kind, ef)}.csv"
        _write_csv(path, ["epsilon_p", "metric", *(f"N={n}" for n in b["n"])], body)
        paths.append(path)
    return paths


def write_series(out_dir, rows: Sequence[dict]) -> None:
    """Plot-ready long tables: delta against epsilon_p per N, and accuracy
    against N averaged over the poisoning rates."""
    blocks = table_blocks(rows)
    delta_rows, acc_rows = [], []
    for (kind, ef), b in sorted(blocks.items()):
        for n in b["n"]:
            for ep in b["eps"]:
                if (ep, n) in b["delta"]:
                    delta_rows.append([kind, _fmt(ef), n, _fmt(ep), b["delta"][ep, n],
                                       b["acc"][ep, n]])
    by_kind_n = defaultdict(list)
    for (kind, _ef), b in blocks.items():
        for (ep, n), v in b["acc"].items():
            if ep > 0:
                by_kind_n[kind, n].append(v)
    for (kind, n), vals in sorted(by_kind_n.items()):
        acc_rows.append([kind, n, sum(vals) / len(vals), len(vals)])
    _write_csv(Path(out_dir) / "series_delta_vs_epsilon.csv",
               ["perturbation", "epsilon_f", "n_models", "epsilon_p", "delta", "acc_poisoned"],
               delta_rows)
    _write_csv(Path(out_dir) / "series_accuracy_vs_n.csv",
               ["perturbation", "n_models", "mean_acc_poisoned", "cells"], acc_rows)


def write_sweep(out_dir, reports: Sequence[EvaluationReport]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = sorted(reports, key=lambda r: r.coordinate)
    _write_csv(out / "runs.csv", RUN_FIELDS, run_rows(reports))
    _write_csv(out / "aggregate.csv", AGG_FIELDS, aggregate_rows(reports))
    _write_json(out / "report.json", [r.to_dict() for r in reports])
    _write_csv(out / "metering.csv", METER_FIELDS, metering_rows(reports))
    rows = read_aggregate(out)
    write_table_csvs(out, rows)
    write_series(out, rows)


def write_scaling(path, rows: Sequence[dict]) -> None:
    fields = ["n_models", "data_percent", "feature_percent", "points", "features",
              "wall_seconds", "cpu_user_seconds", "peak_memory_bytes"]
    _write_csv(Path(path), fields, ([r[f] for f in fields] for r in rows))


def read_aggregate(in_dir) -> list[dict]:
    path = Path(in_dir) / "aggregate.csv"
    if not path.is_file():
        raise FileNotFoundError(f"no aggregate.csv in {in_dir}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no results")
    missing = set(AGG_FIELDS) - set(rows[0])
    if missing:
        raise ValueError(f"{path} lacks columns {sorted(missing)}")
    for r in rows:
        Perturbation.parse(r["perturbation"])
        for f in AGG_FIELDS[1:]:
            float(r[f])
    return rows


def render_table(rows: Sequence[dict], metric: str = "delta") -> str:
    """Aligned text tables, one per perturbation (and epsilon_f): rows are
    epsilon_p, columns N.  ``delta`` prints delta with the poisoned accuracy
    on the line below; ``accuracy`` prints the accuracy alone."""
    if metric not in ("delta", "accuracy"):
        raise ValueError("metric must be 'delta' or 'accuracy'")
    out = []
    for (kind, ef), b in sorted(table_blocks(rows).items()):
        title = kind if not Perturbation(kind).uses_features else f"{kind}, eps_f={_fmt(ef)}"
        head = ["eps_p", *(f"N={n}" for n in b["n"])]
        lines = []
        for ep in b["eps"]:
            vals = [b["delta"].get((ep, n)) for n in b["n"]]
            accs = [b["acc"].get((ep, n)) for n in b["n"]]
            if metric == "delta":
                lines.append([_fmt(ep), *("" if v is None else f"{v:.3f}" for v in vals)])
                lines.append(["", *("" if v is None else f"{v:.3f}" for v in accs)])
            else:
                lines.append([_fmt(ep), *("" if v is None else f"{v:.3f}" for v in accs)])
        widths = [max(len(r[i]) for r in [head, *lines]) for i in range(len(head))]
        out.append(f"[{title}]")
        out.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
        out.extend("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in lines)
        out.append("")
    return "\n".join(out)


# -- grid files -------------------------------------------------------------

GRID_LISTS = {"n_models": int, "perturbations": str, "epsilon_points": float,
              "epsilon_features": float}
GRID_SCALARS = {"repetitions": int, "seed": int, "n_trees": int, "test_fraction": float}


def parse_grid(text: str) -> tuple[Grid, dict]:
    """Parse ``key = v1, v2, ...`` lines (``#`` starts a comment).

    List keys: n_models, perturbations, epsilon_points, epsilon_features.
    Optional scalar keys: repetitions, seed, n_trees, test_fraction.
    Returns the grid and a dict of the scalar settings present.
    """
    lists, scalars = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"grid line {lineno}: expected 'key = values'")
        key, _, value = (s.strip() for s in line.partition("="))
        if key in GRID_LISTS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if not items:
                raise ValueError(f"grid line {lineno}: {key} has no values")
            try:
                lists[key] = tuple(GRID_LISTS[key](v) for v in items)
            except ValueError:
                raise ValueError(f"grid line {lineno}: bad value in {key}") from None
        elif key in GRID_SCALARS:
            scalars[key] = GRID_SCALARS[key](value)
        else:
            raise ValueError(f"grid line {lineno}: unknown key {key!r}")
    for key in ("n_models", "perturbations", "epsilon_points"):
        if key not in lists:
            raise ValueError(f"grid file lacks {key}")
    grid = Grid(lists["n_models"], lists["perturbations"], lists["epsilon_points"],
                lists.get("epsilon_features", ()))
    return grid, scalars
