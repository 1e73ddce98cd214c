"""Decision trees and random forests for binary tabular classification.

Trees are grown greedily with information gain over midpoint thresholds.  At
each node a random permutation of the features is drawn; the first
``features_per_split`` are scored and the best one is used.  If none of them
has positive gain the remaining features are scanned in permutation order
and the first informative one is taken (the same fallback Weka's RandomTree
uses).  When no feature carries information but some feature still splits
the node, as at the root of XOR, that split is taken, so a node only becomes
a leaf when it is pure, hits a size or depth limit, or cannot be split.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .dataset import DataPoint, Dataset, DatasetError
from .seeding import derive_seed, round_half_up
from .splits import GAIN_EPS, best_thresholds

BOOTSTRAP_STREAM = 0


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    features_per_split: int | str = "auto"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap_fraction: float = 1.0
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.bootstrap_fraction <= 1:
            raise ValueError("bootstrap_fraction must lie in (0, 1]")
        if self.features_per_split != "auto" and int(self.features_per_split) < 1:
            raise ValueError("features_per_split must be 'auto' or >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")

    def split_width(self, n_features: int) -> int:
        if self.features_per_split == "auto":
            return int(math.floor(math.log2(n_features))) + 1 if n_features > 1 else 1
        k = int(self.features_per_split)
        if k > n_features:
            raise ValueError(f"features_per_split={k} exceeds {n_features} features")
        return k


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Array-encoded binary tree.  ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (nodes, 2) class counts seen at each node
    n_features: int

    @property
    def value(self) -> np.ndarray:
        return (self.counts[:, 1] > self.counts[:, 0]).astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_dict(self) -> dict:
        def build(i):
            c = [int(v) for v in self.counts[i]]
            if self.feature[i] < 0:
                return {"class": int(c[1] > c[0]), "counts": c}
            return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                    "counts": c, "left": build(self.left[i]), "right": build(self.right[i])}
        return build(0)


def _grow(X: np.ndarray, y: np.ndarray, k: int, max_depth, min_leaf: int,
          rng: np.random.Generator) -> DecisionTree:
    n_feat = X.shape[1]
    limit = math.inf if max_depth is None else max_depth
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        counts.append((0, 0))
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        nid, idx, depth = stack.pop()
        yy = y[idx]
        n, pos = idx.size, int(yy.sum())
        counts[nid] = (n - pos, pos)
        if pos == 0 or pos == n or depth >= limit or n < 2 * min_leaf:
            continue

        order = rng.permutation(n_feat)
        head = np.sort(order[:k])
        gains, thr = best_thresholds(X[np.ix_(idx, head)], yy, min_leaf)
        best = gains.max()
        if best > GAIN_EPS:
            j = int(np.flatnonzero(gains == best)[0])  # lowest feature index among ties
            f, t = int(head[j]), float(thr[j])
        else:
            tail = order[k:]
            g2, t2 = best_thresholds(X[np.ix_(idx, tail)], yy, min_leaf)
            hits = np.flatnonzero(g2 > GAIN_EPS)
            if hits.size:
                f, t = int(tail[hits[0]]), float(t2[hits[0]])
            else:
                # nothing informative (XOR-like node): take the first feature
                # in permutation order that separates the points at all
                thr_of = dict(zip(head.tolist(), thr.tolist()))
                thr_of.update(zip(tail.tolist(), t2.tolist()))
                usable = [j for j in order.tolist() if not math.isnan(thr_of[j])]
                if not usable:
                    continue
                f, t = usable[0], thr_of[usable[0]]

        goes_left = X[idx, f] <= t
        lnode, rnode = new_node(), new_node()
        feature[nid], threshold[nid], left[nid], right[nid] = f, t, lnode, rnode
        stack.append((rnode, idx[~goes_left], depth + 1))
        stack.append((lnode, idx[goes_left], depth + 1))

    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(counts, dtype=np.int64).reshape(-1, 2), n_feat)


def _fit_tree_arrays(X, y, cfg: ForestConfig, tree_seed: int) -> DecisionTree:
    if X.shape[0] == 0:
        raise DatasetError("cannot train on an empty dataset")
    rng = np.random.default_rng(tree_seed)
    return _grow(X, y, cfg.split_width(X.shape[1]), cfg.max_depth, cfg.min_samples_leaf, rng)


def train_tree(d: Dataset, cfg: ForestConfig, tree_seed: int) -> DecisionTree:
    """Grow one tree on all of ``d`` (no resampling)."""
    return _fit_tree_arrays(d.X, d.y, cfg, tree_seed)


def _bagged_tree(X, y, cfg: ForestConfig, tree_seed: int) -> DecisionTree:
    n = X.shape[0]
    if cfg.bootstrap:
        size = max(1, round_half_up(cfg.bootstrap_fraction * n))
        sample = np.random.default_rng(derive_seed(tree_seed, BOOTSTRAP_STREAM)).integers(0, n, size)
        X, y = X[sample], y[sample]
    return _fit_tree_arrays(X, y, cfg, tree_seed)


def _fit_trees(X, y, cfg: ForestConfig, seeds: Sequence[int]) -> list[DecisionTree]:
    return [_bagged_tree(X, y, cfg, s) for s in seeds]


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map; uses a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _chunks(seq: Sequence, parts: int) -> list[list]:
    parts = max(1, min(parts, len(seq)))
    size = math.ceil(len(seq) / parts)
    return [list(seq[i:i + size]) for i in range(0, len(seq), size)]


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    config: ForestConfig
    n_features: int = field(default=0)

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Number of trees voting class 1, per row."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        total = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees:
            total += tree.predict(X)
        return total

    def predict(self, X: np.ndarray) -> np.ndarray:
        # a tie goes to class 0
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)

    def to_dict(self) -> dict:
        return {"n_trees": len(self.trees), "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}


def tree_seeds(cfg: ForestConfig) -> list[int]:
    return [derive_seed(cfg.seed, t) for t in range(cfg.n_trees)]


def train_forest(d: Dataset, cfg: ForestConfig, workers: int = 1) -> RandomForest:
    """Bagged forest; tree ``t`` uses seed ``derive_seed(cfg.seed, t)``.

    The result does not depend on ``workers``.
    """
    if len(d) == 0:
        raise DatasetError("cannot train on an empty dataset")
    cfg.split_width(d.n_features)
    seeds = tree_seeds(cfg)
    batches = parallel_map(partial(_fit_trees, d.X, d.y, cfg), _chunks(seeds, workers), workers)
    trees = tuple(t for batch in batches for t in batch)
    return RandomForest(trees, cfg, d.n_features)


def _as_matrix(p) -> np.ndarray:
    if isinstance(p, DataPoint):
        return np.asarray([p.features], dtype=np.float64)
    return np.atleast_2d(np.asarray(p, dtype=np.float64))


def predict(model, p) -> int:
    """Label predicted by ``model`` (forest or ensemble) for one point."""
    return int(model.predict(_as_matrix(p))[0])


def accuracy(model, test: Dataset) -> float:
    """Percentage of ``test`` points classified correctly.

    ``model`` is anything with ``predict(X)`` or a callable mapping ``X`` to
    labels.
    """
    if len(test) == 0:
        raise DatasetError("accuracy of an empty test set is undefined")
    fn = model.predict if hasattr(model, "predict") else model
    pred = np.asarray(fn(test.X))
    return 100.0 * int(np.count_nonzero(pred == test.y)) / len(test)
