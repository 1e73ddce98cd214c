import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hashforest import Dataset, ForestConfig, RandomForest, balance_classes, load_csv
from hashforest.forest import DecisionTree
from hashforest.pipeline import DEFAULT_SEED

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
SPAMBASE = ROOT / "data" / "spambase.csv"


def make_dataset(X, y, **kw) -> Dataset:
    X = np.asarray(X, dtype=float)
    return Dataset(X, np.asarray(y), tuple(f"f{i}" for i in range(X.shape[1])), **kw)


def two_blobs(n=200, f=4, seed=0, shift=1.5) -> Dataset:
    """Two overlapping Gaussian classes, half each."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, f)) + shift * y[:, None]
    return make_dataset(np.round(X, 3), y)


def constant_tree(label: int, n_features: int = 2) -> DecisionTree:
    counts = [[0, 1]] if label else [[1, 0]]
    return DecisionTree(np.array([-1]), np.array([np.nan]), np.array([-1]), np.array([-1]),
                        np.array(counts), n_features)


def forest_of(labels, n_features=2) -> RandomForest:
    return RandomForest(tuple(constant_tree(c, n_features) for c in labels), ForestConfig(),
                        n_features)


@pytest.fixture
def tiny():
    # the running example point plus a few neighbours
    return make_dataset([[0, 10, 15, 0, 1],
                         [2, 20, 14, 1, 0],
                         [1, 40, 13, 0, 1],
                         [3, 30, 12, 1, 1]], [0, 1, 1, 1])


@pytest.fixture(scope="session")
def spambase():
    if not SPAMBASE.exists():
        pytest.skip("data/spambase.csv not present")
    return load_csv(SPAMBASE, "spam")


@pytest.fixture(scope="session")
def spambase_balanced(spambase):
    return balance_classes(spambase, DEFAULT_SEED)


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
