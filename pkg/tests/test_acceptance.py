"""End-to-end acceptance checks.

Each test records one PASS/FAIL line, printed in the terminal summary under
"acceptance criteria".  The Spambase checks train full 100-tree forests and
take several minutes in total.
"""

import csv
import itertools
import json
import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashforest import (DataPoint, EnsembleConfig, ExperimentConfig, ForestConfig, Grid,
                        HashAlgorithm, PoisonSpec, SplitSpec, accuracy, build_assignment,
                        poison, predict_ensemble, run_experiment,
                        run_sweep, select_targets, serialize_point, split_train_test,
                        train_ensemble, train_forest)
from hashforest import report, seeding
from hashforest.cli import main as cli_main
from hashforest.hashens import EnsembleModel
from hashforest.pipeline import DEFAULT_SEED, meter
from hashforest.poison import Perturbation, apply_label_flipping

from conftest import forest_of, make_dataset, record

SEEDS = 5
WORKERS = max(2, os.cpu_count() or 1)


def spambase_config(kind="label-flipping", ep=0.0, ef=0.0, n_models=1, reps=SEEDS):
    return ExperimentConfig(None, PoisonSpec(kind, ep, ef), EnsembleConfig(n_models),
                            repetitions=reps, seed=DEFAULT_SEED)


# -- 1 --------------------------------------------------------------------------

def test_golden_hash():
    text = serialize_point(DataPoint((0, 10, 15, 0, 1), 0))
    digest = HashAlgorithm.MD5.digest(text.encode()).hex()
    ok = text == "0101501" and digest == "adf5c364bc3a61133eb2360f7dd0b8f2"
    record(1, ok, f"golden hash: {text!r} -> {digest}")
    assert ok


# -- 2 --------------------------------------------------------------------------

def random_matrix(rng: np.random.Generator, n: int, f: int) -> np.ndarray:
    """Integers, short decimals and repeated rows mixed together."""
    X = rng.integers(-50, 50, size=(n, f)).astype(float)
    decimals = rng.random((n, f)) < 0.5
    X[decimals] = np.round(rng.normal(scale=100, size=decimals.sum()), 3)
    dup = rng.random(n) < 0.1
    X[dup] = X[rng.integers(0, n, size=dup.sum())]
    return X


@st.composite
def partition_cases(draw):
    n_models = draw(st.integers(1, 21))
    n = draw(st.integers(n_models, 500))
    rng = np.random.default_rng(draw(st.integers(0, 2**64 - 1)))
    X = random_matrix(rng, n, draw(st.integers(1, 8)))
    y = rng.integers(0, 2, n)
    return make_dataset(X, y), n_models, draw(st.floats(0, 100))


_partition_stats = {"cases": 0}


@settings(max_examples=1000, deadline=None, database=None)
@given(partition_cases())
def _check_partitions(case):
    d, n, flip = case
    cfg = EnsembleConfig(n, forest_config=ForestConfig(n_trees=1))
    a = build_assignment(d, cfg)
    sets = a.training_sets()
    members = np.concatenate(sets)
    assert members.size == len(d) and np.array_equal(np.sort(members), np.arange(len(d)))
    sizes = [s.size for s in sets]
    assert max(sizes) - min(sizes) <= 1
    t = select_targets(len(d), d.n_features, PoisonSpec("label-flipping", flip, seed=n))
    flipped = build_assignment(apply_label_flipping(d, t), cfg)
    assert np.array_equal(flipped.partition_of, a.partition_of)
    assert np.array_equal(flipped.training_set_of, a.training_set_of)
    _partition_stats["cases"] += 1


@pytest.mark.filterwarnings("ignore:n_models")
def test_partition_properties():
    _partition_stats["cases"] = 0
    try:
        _check_partitions()
        ok, detail = True, ""
    except AssertionError as exc:
        ok, detail = False, f" ({str(exc).splitlines()[0]})"
    record(2, ok, f"partition properties over {_partition_stats['cases']} random datasets "
                  f"(<= 500 points, N in 1..21){detail}")
    assert ok


# -- 3 --------------------------------------------------------------------------

@st.composite
def poison_cases(draw):
    n = draw(st.integers(2, 300))
    rng = np.random.default_rng(draw(st.integers(0, 2**64 - 1)))
    X = random_matrix(rng, n, draw(st.integers(1, 10)))
    y = rng.permutation(np.arange(n) % 2)
    spec = PoisonSpec(draw(st.sampled_from(list(Perturbation))), draw(st.floats(0, 100)),
                      draw(st.floats(0, 100)), draw(st.integers(0, 2**64 - 1)))
    return make_dataset(X, y), spec


@settings(max_examples=500, deadline=None, database=None)
@given(poison_cases())
def _check_perturbations(case):
    d, spec = case
    t = select_targets(len(d), d.n_features, spec)
    out = poison(d, spec, t)
    cells = np.zeros(d.X.shape, dtype=bool)
    if spec.kind.uses_features:
        cells[np.ix_(t.point_indices, t.feature_indices)] = True
    assert np.array_equal(out.X[~cells], d.X[~cells])
    lo, hi = d.X.min(axis=0), d.X.max(axis=0)
    for i, j in zip(*np.nonzero(cells)):
        v = out.X[i, j]
        if spec.kind is Perturbation.NOISING:
            other = d.X[d.y != d.y[i], j]
            assert other.min() <= v <= other.max()
        elif spec.kind is Perturbation.OUT_OF_RANGING:
            assert v < lo[j] or v > hi[j]
        elif spec.kind is Perturbation.ZEROING:
            assert v == 0
    if spec.kind is Perturbation.LABEL_FLIPPING:
        expected = seeding.round_half_up(seeding._exact(spec.epsilon_p) * len(d) / 100)
        assert int((out.y != d.y).sum()) == expected
        assert apply_label_flipping(out, t).same_content(d)
    else:
        assert np.array_equal(out.y, d.y)


def test_perturbation_invariants():
    try:
        _check_perturbations()
        ok, detail = True, ""
    except AssertionError as exc:
        ok, detail = False, f" ({str(exc).splitlines()[0]})"
    record(3, ok, "perturbation invariants: locality, noising containment, out-of-range "
                  f"exclusion, flip involution and Hamming count{detail}")
    assert ok


# -- 4 --------------------------------------------------------------------------

def test_vote_and_accuracy_oracle():
    """Every vote pattern of 1 to 7 member forests, against 20 labelled points."""
    rng = np.random.default_rng(4)
    test = make_dataset(rng.normal(size=(20, 2)), rng.integers(0, 2, 20))
    mismatches = checked = 0
    for n in range(1, 8):
        for pattern in itertools.product((0, 1), repeat=n):
            model = EnsembleModel(tuple(forest_of([v]) for v in pattern), None, None)
            expected = 1 if sum(pattern) > n - sum(pattern) else 0
            preds = [predict_ensemble(model, p) for p in test.points()]
            mismatches += sum(p != expected for p in preds)
            brute_acc = 100.0 * sum(expected == lbl for lbl in test.y.tolist()) / len(test)
            mismatches += accuracy(model, test) != brute_acc
            checked += 1
    # trained members disagreeing point by point
    d = make_dataset(rng.normal(size=(90, 2)), rng.integers(0, 2, 90))
    for n in (3, 5, 7):
        m = train_ensemble(d, EnsembleConfig(n, forest_config=ForestConfig(n_trees=3, seed=n)))
        votes = [[int(f.predict(np.array([p.features]))[0]) for f in m.forests]
                 for p in test.points()]
        brute = [1 if 2 * sum(v) > n else 0 for v in votes]
        mismatches += sum(int(predict_ensemble(m, p) != b) for p, b in zip(test.points(), brute))
        brute_acc = 100.0 * sum(b == lbl for b, lbl in zip(brute, test.y.tolist())) / len(test)
        mismatches += accuracy(m, test) != brute_acc
        checked += 1
    ok = mismatches == 0
    record(4, ok, f"vote/accuracy oracle: {checked} ensembles x 20 points, "
                  f"{mismatches} mismatches")
    assert ok


# -- 5 --------------------------------------------------------------------------

@pytest.mark.slow
def test_clean_model_quality(spambase_balanced):
    rep = run_experiment(spambase_config(), spambase_balanced)
    accs = [r.monolithic.acc_clean for r in rep.repetitions]
    mean = rep.monolithic.acc_clean
    ok = mean >= 90
    record(5, ok, f"clean monolithic accuracy on Spambase: {mean:.3f} over {len(accs)} seeds "
                  f"(min {min(accs):.3f}; target >= 90)")
    assert ok


# -- 6 --------------------------------------------------------------------------

@pytest.mark.slow
def test_label_flipping_trend(spambase_balanced):
    rep = run_experiment(spambase_config("label-flipping", 35, n_models=21), spambase_balanced)
    mono, ens = rep.monolithic.delta, rep.ensemble.delta
    gap = ens - mono
    ok = mono <= -10 and ens >= -3 and gap >= 8
    record(6, ok, f"label flipping eps_p=35: monolithic delta {mono:.3f} (<= -10), "
                  f"N=21 delta {ens:.3f} (>= -3), gap {gap:.3f} (>= 8)")
    assert ok


# -- 7 --------------------------------------------------------------------------

@pytest.mark.slow
def test_feature_perturbations_barely_matter(spambase_balanced):
    grid = Grid((1,), ("zeroing", "noising", "out-of-ranging"), (10, 35), (10, 35))
    out = run_sweep(grid, spambase_config(), data=spambase_balanced)
    deltas = {r.coordinate.key(): r.monolithic.delta for r in out.reports}
    worst_key = max(deltas, key=lambda k: abs(deltas[k]))
    ok = not out.failures and len(deltas) == 12 and all(abs(v) <= 5 for v in deltas.values())
    record(7, ok, f"feature perturbations, monolithic |delta| <= 5 on {len(deltas)} cells: "
                  f"mean {np.mean(list(deltas.values())):.3f}, "
                  f"worst {worst_key} = {deltas[worst_key]:.3f}")
    assert ok


# -- 8 --------------------------------------------------------------------------

@pytest.mark.slow
def test_delta_arithmetic(tmp_path, spambase_balanced):
    small = spambase_balanced.subset(np.arange(0, len(spambase_balanced), 6))
    base = replace(spambase_config(reps=2),
                   ensemble=EnsembleConfig(3, forest_config=ForestConfig(n_trees=10)))
    grid = Grid((1, 3), tuple(Perturbation), (0, 25), (30,))
    reports = run_sweep(grid, base, data=small).reports
    report.write_sweep(tmp_path, reports)
    bad = zero_bad = 0
    for entry in json.loads((tmp_path / "report.json").read_text()):
        blocks = [entry[m] for m in ("monolithic", "ensemble")]
        blocks += [r[m] for r in entry["repetitions"] for m in ("monolithic", "ensemble")]
        for b in blocks:
            bad += b["delta"] != b["acc_poisoned"] - b["acc_clean"]
            zero_bad += entry["epsilon_p"] == 0 and b["delta"] != 0
    for row in csv.DictReader((tmp_path / "runs.csv").open()):
        for m in ("monolithic", "ensemble"):
            p, c = float(row[f"acc_poisoned_{m}"]), float(row[f"acc_clean_{m}"])
            bad += float(row[f"delta_{m}"]) != p - c
            zero_bad += float(row["epsilon_p"]) == 0 and float(row[f"delta_{m}"]) != 0
    ok = bad == 0 and zero_bad == 0 and len(reports) == 2 * 2 * 4
    record(8, ok, f"delta arithmetic over {len(reports)} reports: {bad} inexact deltas, "
                  f"{zero_bad} nonzero deltas at eps_p=0")
    assert ok


# -- 9 --------------------------------------------------------------------------

@pytest.mark.slow
def test_outputs_do_not_depend_on_workers(tmp_path, spambase_balanced):
    data = tmp_path / "spambase.csv"
    spambase_balanced.to_csv(data)
    args = ["run", "--dataset", str(data), "--perturbation", "label-flipping",
            "--epsilon-points", "20", "--n-models", "5", "--repetitions", "2"]
    for workers in (1, WORKERS):
        assert cli_main([*args, "--threads", str(workers), "--out", str(tmp_path / f"w{workers}")]) == 0
    files = ("report.json", "runs.csv", "aggregate.csv")
    same = [(tmp_path / "w1" / f).read_bytes() == (tmp_path / f"w{WORKERS}" / f).read_bytes()
            for f in files]
    ok = all(same)
    record(9, ok, f"outputs with 1 and {WORKERS} workers byte-identical: "
                  + ", ".join(f"{f}={'same' if s else 'DIFFERENT'}" for f, s in zip(files, same)))
    assert ok


# -- 10 -------------------------------------------------------------------------

@pytest.mark.slow
def test_training_cost(spambase_balanced):
    split = SplitSpec(seed=seeding.derive_seed(DEFAULT_SEED, seeding.SPLIT))
    train, _ = split_train_test(spambase_balanced, split)
    forest = ForestConfig(seed=seeding.derive_seed(DEFAULT_SEED, seeding.FOREST))
    _, mono = meter(lambda: train_forest(train, forest, workers=WORKERS))
    ens_cfg = EnsembleConfig(21, forest_config=forest)
    assignment = build_assignment(train, ens_cfg)
    _, ens = meter(lambda: train_ensemble(train, ens_cfg, WORKERS, assignment))
    ratio = ens.wall_seconds / mono.wall_seconds
    cpu_ok = all(m.cpu_user_seconds is not None and m.cpu_user_seconds >= m.wall_seconds
                 for m in (mono, ens))
    ok = ratio <= 5 and cpu_ok
    record(10, ok, f"training cost with {WORKERS} workers on {os.cpu_count()} cpu(s): "
                   f"N=21 wall {ens.wall_seconds:.2f}s vs N=1 {mono.wall_seconds:.2f}s "
                   f"(ratio {ratio:.2f} <= 5); cpu user N=1 {mono.cpu_user_seconds:.2f}s, "
                   f"N=21 {ens.cpu_user_seconds:.2f}s (each >= its wall: {cpu_ok})")
    assert ok
