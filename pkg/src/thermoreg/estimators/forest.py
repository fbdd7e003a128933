"""Bootstrap forest of variance-reduction regression trees.

Tree ``t`` of a forest seeded with ``seed`` depends only on ``(seed, t)``, so
the first ``m`` trees of a 250-tree forest *are* the 50-tree forest. The
n_estimators grid search relies on that.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import ConfigError
from ..transform import FeatureMatrix
from .base import DEFAULTS, TrainedModel


@numba.njit(cache=True)
def _best_split(X, y, idx, features, max_features, min_leaf):
    m = idx.shape[0]
    best_score = -np.inf
    best_f = -1
    best_thr = 0.0
    total = 0.0
    for t in range(m):
        total += y[idx[t]]
    base = total * total / m
    visited = 0
    xs = np.empty(m)
    ys = np.empty(m)
    for fi in range(features.shape[0]):
        if visited >= max_features:
            break
        f = features[fi]
        for t in range(m):
            xs[t] = X[idx[t], f]
        order = np.argsort(xs, kind="mergesort")
        if xs[order[0]] == xs[order[m - 1]]:
            continue  # constant in this node; does not count toward max_features
        visited += 1
        for t in range(m):
            ys[t] = y[idx[order[t]]]
        left = 0.0
        for p in range(1, m):
            left += ys[p - 1]
            if p < min_leaf or m - p < min_leaf:
                continue
            lo = xs[order[p - 1]]
            hi = xs[order[p]]
            if lo == hi:
                continue
            right = total - left
            score = left * left / p + right * right / (m - p)
            if score > best_score:
                best_score = score
                best_f = f
                thr = 0.5 * (lo + hi)
                if thr == hi:  # midpoint rounded up to hi; keep the split well defined
                    thr = lo
                best_thr = thr
    if best_f >= 0 and best_score <= base:
        best_f = -1
    return best_f, best_thr


@numba.njit(cache=True)
def _build_tree(X, y, sample, max_features, max_depth, min_leaf, seed):
    np.random.seed(seed)
    n_feat = X.shape[1]
    cap = 2 * sample.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    # stack of (node id, start, stop, depth) over a reordered copy of ``sample``
    idx = sample.copy()
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = idx.shape[0]
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        stop = stack[top, 2]
        depth = stack[top, 3]
        part = idx[start:stop]
        m = stop - start
        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for t in range(m):
            v = y[part[t]]
            s += v
            ymin = min(ymin, v)
            ymax = max(ymax, v)
        value[node] = s / m
        if m < 2 * min_leaf or ymin == ymax or (max_depth >= 0 and depth >= max_depth):
            continue
        features = np.random.permutation(n_feat)
        f, thr = _best_split(X, y, part, features, max_features, min_leaf)
        if f < 0:
            continue
        # partition part in place: <= thr to the left
        lo = 0
        hi = m - 1
        while lo <= hi:
            if X[part[lo], f] <= thr:
                lo += 1
            else:
                tmp = part[lo]
                part[lo] = part[hi]
                part[hi] = tmp
                hi -= 1
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + lo
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = n_nodes + 1
        stack[top + 1, 1] = start + lo
        stack[top + 1, 2] = stop
        stack[top + 1, 3] = depth + 1
        top += 2
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold,
                             self.left, self.right, self.value)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


def tree_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(t)]).generate_state(1)[0] & 0x7FFFFFFF)


def fit_tree(X, y, seed, max_features, max_depth=None, min_samples_leaf=1, bootstrap=True) -> Tree:
    n = X.shape[0]
    if bootstrap:
        sample = np.random.default_rng(seed).integers(0, n, n)
    else:
        sample = np.arange(n)
    arrays = _build_tree(np.ascontiguousarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64),
                         sample.astype(np.int64), int(max_features),
                         -1 if max_depth is None else int(max_depth), int(min_samples_leaf), int(seed))
    return Tree(*arrays)


def resolve_max_features(spec, d: int) -> int:
    if spec == "third":
        return max(1, -(-d // 3))
    if spec in (None, "all"):
        return d
    k = int(spec)
    if not 1 <= k <= d:
        raise ConfigError(f"max_features must be in [1, {d}]")
    return k


@dataclass(frozen=True, eq=False)
class ForestModel(TrainedModel):
    names: tuple
    hyperparams: dict
    trees: tuple

    family = "forest"

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        return np.stack([t.predict(X) for t in self.trees])

    def _predict(self, X):
        return self.tree_predictions(X).mean(axis=0)

    def truncated(self, n_estimators: int) -> "ForestModel":
        hp = dict(self.hyperparams, n_estimators=n_estimators)
        return ForestModel(self.names, hp, self.trees[:n_estimators])

    def _state(self):
        return {"trees": [vars(t) for t in self.trees]}

    @classmethod
    def _from_state(cls, names, hp, st):
        return cls(names, hp, tuple(Tree(**t) for t in st["trees"]))


def fit_forest(m: FeatureMatrix, n_estimators: int = 100, seed: int = 0, max_features="third",
               max_depth=None, min_samples_leaf: int = 1, bootstrap: bool = True) -> ForestModel:
    if n_estimators < 1:
        raise ConfigError("n_estimators must be >= 1")
    hp = {**DEFAULTS["forest"], "n_estimators": n_estimators, "seed": seed, "max_features": max_features,
          "max_depth": max_depth, "min_samples_leaf": min_samples_leaf, "bootstrap": bootstrap}
    X, y = m.values, m.require_target()
    mf = resolve_max_features(max_features, m.n_features)
    trees = tuple(
        fit_tree(X, y, tree_seed(seed, t), mf, max_depth, min_samples_leaf, bootstrap)
        for t in range(n_estimators)
    )
    return ForestModel(m.names, hp, trees)
