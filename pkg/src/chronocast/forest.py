"""CART regression trees and a bagged random forest."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .neural import recursive_forecast


def tree_rng(master_seed: int, stream: int) -> np.random.Generator:
    """Counter-based stream ``stream`` under ``master_seed``; independent of build order."""
    return np.random.Generator(np.random.Philox(key=np.array([master_seed, stream], dtype=np.uint64)))


@dataclass
class RegressionTree:
    """Flat pre-order tree. ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]

    def to_lines(self) -> list[str]:
        """Pre-order: ``S feature threshold`` for splits, ``L value`` for leaves."""
        lines = []
        for f, t, v in zip(self.feature, self.threshold, self.value):
            lines.append(f"S {int(f)} {t:.17g}" if f >= 0 else f"L {v:.17g}")
        return lines

    @classmethod
    def from_lines(cls, lines: list[str]) -> tuple["RegressionTree", int]:
        """Parse one tree from the head of ``lines``; returns the tree and lines consumed."""
        feature, threshold, value, left, right = [], [], [], [], []
        max_depth = 0

        def parse(pos: int, depth: int) -> int:
            nonlocal max_depth
            if pos >= len(lines):
                raise ValueError("truncated tree serialization")
            parts = lines[pos].split()
            k = len(feature)
            max_depth = max(max_depth, depth)
            feature.append(-1); threshold.append(0.0); value.append(0.0); left.append(-1); right.append(-1)
            if parts[0] == "L":
                value[k] = float(parts[1])
                return pos + 1
            if parts[0] != "S":
                raise ValueError(f"bad tree line {lines[pos]!r}")
            feature[k] = int(parts[1])
            threshold[k] = float(parts[2])
            left[k] = len(feature)
            pos = parse(pos + 1, depth + 1)
            right[k] = len(feature)
            return parse(pos, depth + 1)

        used = parse(0, 0)
        tree = cls(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value), max_depth)
        return tree, used


def _best_split(X, y, features, min_leaf):
    """Exhaustive search; returns (sse, feature, threshold) or None."""
    n = len(y)
    best = None
    yc = y - y.mean()
    for j in features:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = yc[order]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        # split after position k: left = [0..k]
        k = np.arange(min_leaf - 1, n - min_leaf)
        if len(k) == 0:
            continue
        k = k[xs[k] < xs[k + 1]]
        if len(k) == 0:
            continue
        nl = k + 1.0
        nr = n - nl
        sl, sl2 = cs[k], cs2[k]
        sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        # cumulative sums carry rounding noise; treat near-equal scores as ties
        tol = 1e-12 * max(float(cs2[-1]), 1e-300)
        m = int(np.flatnonzero(sse <= sse.min() + tol)[0])
        if best is None or sse[m] < best[0] - tol:
            best = (float(sse[m]), int(j), 0.5 * (xs[k[m]] + xs[k[m] + 1]))
    return best


def fit_tree(X, y, rng: np.random.Generator | None = None, max_depth: int | None = 20,
             m_try: int | None = None, min_leaf: int = 1) -> RegressionTree:
    """Greedy squared-error CART.

    ``m_try`` features are drawn without replacement at each split when it is
    smaller than the feature count. Ties go to the lowest feature index, then
    the smallest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("need a 2-d sample matrix and matching targets")
    n_features = X.shape[1]
    m_try = n_features if m_try is None else int(m_try)
    if not 1 <= m_try <= n_features:
        raise ValueError("m_try must lie in 1..n_features")
    if m_try < n_features and rng is None:
        raise ValueError("feature subsetting needs an rng")
    limit = np.inf if max_depth is None else max_depth

    feature, threshold, value, left, right = [], [], [], [], []
    reached = 0

    def grow(idx: np.ndarray, depth: int) -> int:
        nonlocal reached
        reached = max(reached, depth)
        k = len(feature)
        ys = y[idx]
        mean = float(ys[0]) if np.all(ys == ys[0]) else math.fsum(ys) / len(ys)
        feature.append(-1); threshold.append(0.0); value.append(mean); left.append(-1); right.append(-1)
        if depth >= limit or len(idx) < 2 * min_leaf:
            return k
        node_sse = float(np.sum((ys - mean) ** 2))
        if node_sse <= 1e-14 * max(1.0, mean * mean) * len(idx):
            return k
        if m_try < n_features:
            feats = np.sort(rng.choice(n_features, size=m_try, replace=False))
        else:
            feats = range(n_features)
        best = _best_split(X[idx], ys, feats, min_leaf)
        if best is None or not best[0] < node_sse:
            return k
        _, j, thr = best
        go_left = X[idx, j] <= thr
        feature[k] = j
        threshold[k] = thr
        left[k] = grow(idx[go_left], depth + 1)
        right[k] = grow(idx[~go_left], depth + 1)
        return k

    grow(np.arange(len(y)), 0)
    return RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), reached,
    )


@dataclass
class ForestConfig:
    n_estimators: int = 100
    max_depth: int | None = 20
    random_state: int = 2
    m_try: int | None = None
    min_leaf: int = 1


@dataclass
class ForestModel:
    trees: list
    config: ForestConfig = field(default_factory=ForestConfig)
    bootstrap_unique: list = field(default_factory=list)

    kind = "rf"

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)


def fit_forest(X, y, cfg: ForestConfig | None = None) -> ForestModel:
    """Bagged trees, each on a same-size bootstrap resample drawn from its own stream."""
    cfg = cfg or ForestConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0:
        raise ValueError("empty training set")
    if cfg.n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    trees, unique = [], []
    for k in range(cfg.n_estimators):
        rng = tree_rng(cfg.random_state, k)
        sample = rng.integers(0, n, size=n)
        unique.append(len(np.unique(sample)) / n)
        trees.append(fit_tree(X[sample], y[sample], rng, cfg.max_depth, cfg.m_try, cfg.min_leaf))
    return ForestModel(trees, cfg, unique)


def fit_forest_on(prepared, cfg: ForestConfig | None = None) -> ForestModel:
    return fit_forest(*prepared.samples("train"), cfg)


def predict_forest(model: ForestModel, window) -> float:
    return float(model.predict(np.asarray(window, dtype=float)[None, :])[0])


def forecast_forest(model: ForestModel, seed_window, horizon: int) -> np.ndarray:
    return recursive_forecast(model.predict, seed_window, horizon)
