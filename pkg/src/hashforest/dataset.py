"""Tabular binary-classification datasets: loading, balancing, splitting and
InfoGain feature ranking."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .seeding import floor_fraction
from .splits import best_thresholds

ORIGINAL = "original"
POISONED = "poisoned"


class DatasetError(ValueError):
    pass


def format_number(value: float) -> str:
    """Canonical decimal text for a feature value.

    Integral values print without a decimal point (``10.0 -> "10"``); other
    values use the shortest positional decimal that round-trips.
    """
    v = float(value)
    if v.is_integer():
        return str(int(v))
    return np.format_float_positional(v, unique=True, trim="-")


@dataclass(frozen=True)
class DataPoint:
    features: tuple[float, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")
        if not all(np.isfinite(self.features)):
            raise DatasetError("feature values must be finite")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix ``X`` (points x features) with labels ``y`` in {0, 1}.

    Arrays are made read-only on construction; every transformation returns
    a new Dataset.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    provenance: str = ORIGINAL
    label_name: str = "label"
    class_names: tuple[str, str] = ("0", "1")
    _digest: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise DatasetError("X must be two-dimensional")
        if y.shape != (X.shape[0],):
            raise DatasetError("y must have one label per row of X")
        if X.shape[1] != len(self.feature_names):
            raise DatasetError(
                f"{X.shape[1]} feature columns but {len(self.feature_names)} feature names")
        if not np.all(np.isfinite(X)):
            raise DatasetError("feature values must be finite")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")
        if self.provenance not in (ORIGINAL, POISONED):
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_points(cls, points: Sequence[DataPoint], feature_names=None, **kw) -> "Dataset":
        X = np.array([p.features for p in points], dtype=np.float64)
        y = np.array([p.label for p in points], dtype=np.int64)
        if feature_names is None:
            feature_names = tuple(f"f{i}" for i in range(X.shape[1]))
        return cls(X, y, tuple(feature_names), **kw)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def point(self, i: int) -> DataPoint:
        return DataPoint(tuple(float(v) for v in self.X[i]), int(self.y[i]))

    def points(self) -> Iterator[DataPoint]:
        for i in range(len(self)):
            yield self.point(i)

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.y.sum())
        return len(self) - ones, ones

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return self.replace(X=self.X[idx], y=self.y[idx])

    def select_features(self, columns: Sequence[int]) -> "Dataset":
        cols = list(columns)
        return self.replace(X=self.X[:, cols],
                            feature_names=tuple(self.feature_names[c] for c in cols))

    def replace(self, **changes) -> "Dataset":
        changes.setdefault("_digest", [])
        return replace(self, **changes)

    def digest(self) -> str:
        """SHA-256 over shape, feature bytes and labels (provenance excluded)."""
        if not self._digest:
            h = hashlib.sha256()
            h.update(np.array(self.X.shape, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(self.X).tobytes())
            h.update(np.ascontiguousarray(self.y).tobytes())
            self._digest.append(h.hexdigest())
        return self._digest[0]

    def same_content(self, other: "Dataset") -> bool:
        return (self.X.shape == other.X.shape and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))

    def to_csv(self, path) -> None:
        """Write in the same dialect ``load_csv`` reads, label column last."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.feature_names, self.label_name])
            for row, label in zip(self.X, self.y):
                w.writerow([*(format_number(v) for v in row), self.class_names[label]])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise DatasetError("test_fraction must be strictly between 0 and 1")


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    ``label_column`` defaults to the last column.  The two raw label values
    map to 0 and 1 in lexicographic order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column is None:
            label_column = header[-1]
        if label_column not in header:
            raise DatasetError(f"{path}: no column named {label_column!r}")
        li = header.index(label_column)
        rows, raw_labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
            raw_labels.append(rec[li].strip())
            vals = []
            for j, cell in enumerate(rec):
                if j == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    v = float("nan")
                if not np.isfinite(v):
                    raise DatasetError(
                        f"{path}:{lineno}: non-numeric feature {header[j]!r} = {cell!r}")
                vals.append(v)
            rows.append(vals)

    classes = sorted(set(raw_labels))
    if len(classes) < 2:
        raise DatasetError(f"{path}: fewer than two classes in {label_column!r}")
    if len(classes) > 2:
        raise DatasetError(f"{path}: more than two classes in {label_column!r}: {classes}")
    mapping = {c: i for i, c in enumerate(classes)}
    names = tuple(h for j, h in enumerate(header) if j != li)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    y = np.array([mapping[c] for c in raw_labels], dtype=np.int64)
    return Dataset(X, y, names, ORIGINAL, label_column, (classes[0], classes[1]))


def balance_classes(d: Dataset, seed: int) -> Dataset:
    """Subsample the majority class down to the minority class size.

    Minority points are all kept; surviving points keep their original order.
    """
    n0, n1 = d.class_counts()
    if n0 == 0 or n1 == 0:
        raise DatasetError("cannot balance: one class is empty")
    if n0 == n1:
        return d.replace()
    minority, majority = (0, 1) if n0 < n1 else (1, 0)
    rng = np.random.default_rng(seed)
    keep_major = rng.choice(np.flatnonzero(d.y == majority), size=min(n0, n1), replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(d.y == minority), keep_major]))
    return d.subset(keep)


def _stratified_test_counts(class_sizes: Sequence[int], fraction, n_test: int) -> list[int]:
    # largest-remainder allocation; each count within 1 of fraction * size
    from fractions import Fraction

    f = Fraction(str(fraction))
    ideal = [f * s for s in class_sizes]
    counts = [int(q) for q in ideal]
    remainder = n_test - sum(counts)
    by_frac = sorted(range(len(class_sizes)), key=lambda c: (-(ideal[c] - counts[c]), c))
    for c in by_frac[:remainder]:
        counts[c] += 1
    return counts


def split_indices(d: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    n = len(d)
    n_test = floor_fraction(spec.test_fraction, n)
    if n_test < 1 or n_test >= n:
        raise DatasetError(
            f"test_fraction={spec.test_fraction} on {n} points leaves an empty train or test set")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        by_class = [np.flatnonzero(d.y == c) for c in (0, 1)]
        counts = _stratified_test_counts([len(ix) for ix in by_class], spec.test_fraction, n_test)
        test = np.concatenate([rng.permutation(ix)[:k] for ix, k in zip(by_class, counts)])
    else:
        test = rng.permutation(n)[:n_test]
    test = np.sort(test)
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def split_train_test(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Hold out ``floor(test_fraction * |d|)`` points as the test set."""
    if len(d) < 2:
        raise DatasetError("need at least two points to split")
    train, test = split_indices(d, spec)
    return d.subset(train), d.subset(test)


def information_gains(d: Dataset) -> np.ndarray:
    """Best single-threshold information gain of every feature, in bits."""
    if len(d) == 0:
        raise DatasetError("empty dataset")
    block = max(1, 2_000_000 // max(len(d), 1))  # bound the points x columns work matrix
    parts = [best_thresholds(d.X[:, j:j + block], d.y)[0]
             for j in range(0, d.n_features, block)]
    return np.concatenate(parts) if parts else np.zeros(0)


def info_gain_rank(d: Dataset, k: int) -> list[int]:
    """Indices of the ``k`` most informative features, best first.

    Ties go to the lower feature index.
    """
    if k < 1 or k > d.n_features:
        raise DatasetError(f"k={k} outside 1..{d.n_features}")
    gains = information_gains(d)
    order = sorted(range(d.n_features), key=lambda j: (-gains[j], j))
    return order[:k]
