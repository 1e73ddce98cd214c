"""Hash-partitioned ensembles of random forests.

Training points are routed to one of ``N`` partitions by hashing the
concatenated decimal rendering of their features; the partitions are then
dealt round-robin into ``N`` disjoint, equal-sized training sets, one per
forest.  Prediction is a majority vote of the forests, ties going to 0.

The rendering has no separators, so distinct points can share a string:
``<1, 23>`` and ``<12, 3>`` both become ``"123"``.  Such points always land
in the same partition.  Labels are never hashed, so flipping a label does
not move a point.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import warnings
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .dataset import DataPoint, Dataset, DatasetError, format_number
from .forest import ForestConfig, RandomForest, parallel_map, predict, train_forest
from .seeding import derive_seed


class HashAlgorithm(str, enum.Enum):
    MD5 = "md5"

    def digest(self, data: bytes) -> bytes:
        return hashlib.new(self.value, data).digest()


@dataclass(frozen=True)
class EnsembleConfig:
    n_models: int = 1
    hash_algorithm: HashAlgorithm = HashAlgorithm.MD5
    forest_config: ForestConfig = field(default_factory=ForestConfig)

    def __post_init__(self):
        if self.n_models < 1:
            raise ValueError("n_models must be >= 1")
        object.__setattr__(self, "hash_algorithm", HashAlgorithm(self.hash_algorithm))
        if self.n_models % 2 == 0:
            warnings.warn(f"n_models={self.n_models} is even; vote ties resolve to class 0",
                          stacklevel=3)


def serialize_point(p) -> str:
    """``<0, 10, 15, 0, 1>`` becomes ``"0101501"``; the label is not included."""
    values = p.features if isinstance(p, DataPoint) else p
    return "".join(format_number(v) for v in values)


def digest_int(text: str, alg: HashAlgorithm = HashAlgorithm.MD5) -> int:
    return int.from_bytes(HashAlgorithm(alg).digest(text.encode("ascii")), "big")


def hash_partition_index(p, n: int, alg: HashAlgorithm = HashAlgorithm.MD5) -> int:
    """Zero-based partition of ``p``: the full digest, read as an unsigned
    big-endian integer, modulo ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return digest_int(serialize_point(p), alg) % n


@dataclass(frozen=True, eq=False)
class PartitionAssignment:
    partition_of: np.ndarray
    training_set_of: np.ndarray
    n_models: int

    def training_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.training_set_of == i) for i in range(self.n_models)]

    def partitions(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.partition_of == i) for i in range(self.n_models)]

    def to_csv(self, path) -> None:
        """One row per point; partitions and training sets are 1-based here."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["point", "partition", "training_set"])
            for i, (p, t) in enumerate(zip(self.partition_of, self.training_set_of)):
                w.writerow([i, int(p) + 1, int(t) + 1])


def deal_round_robin(partition_of: np.ndarray, n: int) -> np.ndarray:
    """Training set of every point given its partition.

    Partitions are visited in ascending order and their points in dataset
    order; a single counter ``c`` runs across all of them and point number
    ``c`` goes to training set ``c mod n``.
    """
    partition_of = np.asarray(partition_of, dtype=np.int64)
    dealing_order = np.argsort(partition_of, kind="stable")
    tset = np.empty(partition_of.size, dtype=np.int64)
    tset[dealing_order] = np.arange(partition_of.size) % n
    return tset


def build_assignment(d: Dataset, cfg: EnsembleConfig) -> PartitionAssignment:
    """Hash every point into a partition, then deal partitions round-robin."""
    n = cfg.n_models
    if len(d) < n:
        raise DatasetError(f"{len(d)} points cannot feed {n} models")
    part = np.fromiter((hash_partition_index(row, n, cfg.hash_algorithm) for row in d.X),
                       dtype=np.int64, count=len(d))
    return PartitionAssignment(part, deal_round_robin(part, n), n)


def forest_seed(cfg: EnsembleConfig, i: int) -> int:
    return derive_seed(cfg.forest_config.seed, i)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    forests: tuple[RandomForest, ...]
    assignment: PartitionAssignment
    config: EnsembleConfig

    def forest_votes(self, X: np.ndarray) -> np.ndarray:
        """(n_models, n_rows) matrix of per-forest predictions."""
        return np.stack([f.predict(X) for f in self.forests])

    def predict(self, X: np.ndarray) -> np.ndarray:
        ones = self.forest_votes(X).sum(axis=0)
        return (2 * ones > len(self.forests)).astype(np.int64)


def _train_member(d: Dataset, cfg: EnsembleConfig, item) -> RandomForest:
    i, rows = item
    fcfg = replace(cfg.forest_config, seed=forest_seed(cfg, i))
    return train_forest(d.subset(rows), fcfg)


def train_ensemble(d: Dataset, cfg: EnsembleConfig, workers: int = 1,
                   assignment: PartitionAssignment | None = None) -> EnsembleModel:
    """Train forest ``i`` on training set ``i`` with its own derived seed."""
    if assignment is None:
        assignment = build_assignment(d, cfg)
    items = list(enumerate(assignment.training_sets()))
    if cfg.n_models == 1:
        forests = [train_forest(d.subset(items[0][1]),
                                replace(cfg.forest_config, seed=forest_seed(cfg, 0)), workers)]
    else:
        forests = parallel_map(partial(_train_member, d, cfg), items, workers)
    return EnsembleModel(tuple(forests), assignment, cfg)


def predict_ensemble(m: EnsembleModel, p) -> int:
    return predict(m, p)
