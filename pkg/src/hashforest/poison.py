"""Untargeted random poisoning of a training set.

Four perturbations share one target selection: a random set of points and a
random set of features, drawn from the seed alone so that every perturbation
kind hits the same cells for the same seed and rates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import POISONED, Dataset, DatasetError
from .seeding import SELECT, VALUES, percent_count, rng_for


class Perturbation(str, enum.Enum):
    ZEROING = "zeroing"
    NOISING = "noising"
    OUT_OF_RANGING = "out-of-ranging"
    LABEL_FLIPPING = "label-flipping"

    @classmethod
    def parse(cls, text: str) -> "Perturbation":
        try:
            return cls(text)
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown perturbation {text!r} (expected one of: {names})") from None

    @property
    def uses_features(self) -> bool:
        return self is not Perturbation.LABEL_FLIPPING


@dataclass(frozen=True)
class PoisonSpec:
    kind: Perturbation
    epsilon_p: float
    epsilon_f: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Perturbation.parse(self.kind))
        for name in ("epsilon_p", "epsilon_f"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise ValueError(f"{name} must lie in [0, 100], got {v}")


@dataclass(frozen=True)
class TargetSelection:
    point_indices: np.ndarray
    feature_indices: np.ndarray

    def check(self, d: Dataset) -> None:
        p, f = self.point_indices, self.feature_indices
        if p.size and (p.min() < 0 or p.max() >= len(d)):
            raise IndexError("point index out of range")
        if f.size and (f.min() < 0 or f.max() >= d.n_features):
            raise IndexError("feature index out of range")


def select_targets(n_points: int, n_features: int, spec: PoisonSpec) -> TargetSelection:
    """Draw ``round(eps_p% * n_points)`` points and ``round(eps_f% * n_features)``
    features uniformly without replacement.  ``spec.kind`` is not consulted."""
    if n_points < 1 or n_features < 1:
        raise ValueError("need at least one point and one feature")
    rng = rng_for(spec.seed, SELECT)
    points = rng.choice(n_points, size=percent_count(spec.epsilon_p, n_points), replace=False)
    features = rng.choice(n_features, size=percent_count(spec.epsilon_f, n_features), replace=False)
    return TargetSelection(np.sort(points), np.sort(features))


def _cells(t: TargetSelection):
    return np.ix_(t.point_indices, t.feature_indices)


def apply_zeroing(d: Dataset, t: TargetSelection) -> Dataset:
    t.check(d)
    X = d.X.copy()
    X[_cells(t)] = 0.0
    return d.replace(X=X, provenance=POISONED)


def apply_noising(d: Dataset, t: TargetSelection, seed: int = 0) -> Dataset:
    """Resample each selected cell uniformly from the observed range of that
    feature in the opposite class of the original data."""
    t.check(d)
    X = d.X.copy()
    if t.point_indices.size == 0 or t.feature_indices.size == 0:
        return d.replace(X=X, provenance=POISONED)
    cols = t.feature_indices
    lo = np.empty((2, cols.size))
    hi = np.empty((2, cols.size))
    for c in (0, 1):
        members = d.X[d.y == c][:, cols]
        if members.shape[0] == 0:
            raise DatasetError(f"noising needs both classes; class {c} is empty")
        lo[c], hi[c] = members.min(axis=0), members.max(axis=0)
    opposite = 1 - d.y[t.point_indices]
    lo_, hi_ = lo[opposite], hi[opposite]
    u = rng_for(seed, VALUES).random(lo_.shape)
    X[_cells(t)] = np.clip(lo_ + (hi_ - lo_) * u, lo_, hi_)
    return d.replace(X=X, provenance=POISONED)


def apply_out_of_ranging(d: Dataset, t: TargetSelection, seed: int = 0) -> Dataset:
    """Replace each selected cell with ``min - 1`` or ``max + 1`` of its feature
    over the original data, side chosen by a fair coin per cell."""
    t.check(d)
    X = d.X.copy()
    if t.point_indices.size == 0 or t.feature_indices.size == 0:
        return d.replace(X=X, provenance=POISONED)
    cols = t.feature_indices
    fmin, fmax = d.X[:, cols].min(axis=0), d.X[:, cols].max(axis=0)
    low_side = rng_for(seed, VALUES).random((t.point_indices.size, cols.size)) < 0.5
    X[_cells(t)] = np.where(low_side, fmin - 1.0, fmax + 1.0)
    return d.replace(X=X, provenance=POISONED)


def apply_label_flipping(d: Dataset, t: TargetSelection) -> Dataset:
    t.check(d)
    y = d.y.copy()
    y[t.point_indices] = 1 - y[t.point_indices]
    return d.replace(y=y, provenance=POISONED)


def poison(d: Dataset, spec: PoisonSpec, targets: TargetSelection | None = None) -> Dataset:
    """Apply ``spec`` to a training set and return the poisoned copy."""
    if targets is None:
        targets = select_targets(len(d), d.n_features, spec)
    kind = spec.kind
    if kind is Perturbation.ZEROING:
        return apply_zeroing(d, targets)
    if kind is Perturbation.NOISING:
        return apply_noising(d, targets, spec.seed)
    if kind is Perturbation.OUT_OF_RANGING:
        return apply_out_of_ranging(d, targets, spec.seed)
    return apply_label_flipping(d, targets)
