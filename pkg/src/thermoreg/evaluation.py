"""Metrics, fold plans, grid search and nested cross-validation."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .estimators import DEFAULTS, EstimatorSpec, fit_estimator
from .estimators.forest import fit_forest
from .estimators.knn import knn_predictions_all_k
from .transform import FeatureMatrix


@dataclass(frozen=True)
class Metrics:
    mae: float
    mse: float
    rmse: float
    n: int

    def as_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse, "n": self.n}


def compute_metrics(y, y_hat) -> Metrics:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise DataError("metrics need at least one value")
    err = y - y_hat
    mse = float(np.mean(err * err))
    return Metrics(float(np.mean(np.abs(err))), mse, math.sqrt(mse), int(y.size))


def rmse(y, y_hat) -> float:
    return compute_metrics(y, y_hat).rmse


# --------------------------------------------------------------------------
# Fold plans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    seed: int

    @property
    def n_rows(self) -> int:
        return len(self.assignments)

    def split(self, fold: int):
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def __iter__(self):
        return (self.split(f) for f in range(self.n_folds))


def kfold_plan(n_rows: int, n_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle, then contiguous folds; the first n % k folds get one extra row."""
    if not 2 <= n_folds <= n_rows:
        raise ConfigError(f"need 2 <= n_folds <= n_rows, got n_folds={n_folds}, n_rows={n_rows}")
    perm = np.random.default_rng(seed).permutation(n_rows)
    sizes = np.full(n_folds, n_rows // n_folds)
    sizes[: n_rows % n_folds] += 1
    assignments = np.empty(n_rows, dtype=np.int64)
    assignments[perm] = np.repeat(np.arange(n_folds), sizes)
    return FoldPlan(n_folds, assignments, seed)


# --------------------------------------------------------------------------
# Grid search
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    family: str
    grid: tuple
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = tuple(dict(g) for g in self.grid)
        if not grid:
            raise ConfigError("grid is empty")
        for g in grid:
            EstimatorSpec(self.family, {**self.base, **g})  # validates names
        object.__setattr__(self, "grid", grid)

    def spec(self, i: int) -> EstimatorSpec:
        return EstimatorSpec(self.family, {**self.base, **self.grid[i]})


def knn_grid(k_max: int = 30) -> GridSpec:
    return GridSpec("knn", tuple({"k": k} for k in range(1, k_max + 1)))


def forest_grid(values=(50, 100, 150, 200, 250), seed: int = 0) -> GridSpec:
    return GridSpec("forest", tuple({"n_estimators": v} for v in values), {"seed": seed})


def grid_predictions(grid: GridSpec, train: FeatureMatrix, test: FeatureMatrix) -> list:
    """Test predictions for every grid point.

    kNN grids that vary only k share one neighbor sort; forest grids that vary
    only n_estimators share one forest (trees depend on (seed, index) alone).
    """
    keys = {k for g in grid.grid for k in g}
    if grid.family == "knn" and keys == {"k"}:
        ks = [int(g["k"]) for g in grid.grid]
        if max(ks) > train.n_rows:
            raise ConfigError(f"k={max(ks)} exceeds {train.n_rows} training rows")
        by_k = knn_predictions_all_k(train, test, sorted(set(ks)))
        return [by_k[k] for k in ks]
    if grid.family == "forest" and keys == {"n_estimators"}:
        sizes = [int(g["n_estimators"]) for g in grid.grid]
        params = {**DEFAULTS["forest"], **grid.base, "n_estimators": max(sizes)}
        per_tree = fit_forest(train, **params).tree_predictions(test.values)
        csum = np.cumsum(per_tree, axis=0)
        return [csum[s - 1] / s for s in sizes]
    return [fit_estimator(grid.spec(i), train).predict(test) for i in range(len(grid.grid))]


@dataclass(frozen=True)
class CVSelection:
    best_index: int
    mean_rmse: np.ndarray  # per grid point
    fold_rmse: np.ndarray  # (folds, grid points)

    @property
    def best_rmse(self) -> float:
        return float(self.mean_rmse[self.best_index])


def cv_select(m: FeatureMatrix, grid: GridSpec, plan: FoldPlan) -> CVSelection:
    """Grid point with the lowest mean validation RMSE; ties go to the lower index."""
    if plan.n_rows != m.n_rows:
        raise DataError("fold plan does not match matrix rows")
    y = m.require_target()
    fold_rmse = np.empty((plan.n_folds, len(grid.grid)))
    for f, (tr, te) in enumerate(plan):
        if len(tr) == 0 or len(te) == 0:
            raise DataError(f"fold {f} is degenerate")
        preds = grid_predictions(grid, m.take(tr), m.take(te))
        fold_rmse[f] = [rmse(y[te], p) for p in preds]
    mean = fold_rmse.mean(axis=0)
    return CVSelection(int(np.argmin(mean)), mean, fold_rmse)


def cross_validate(m: FeatureMatrix, spec: EstimatorSpec, plan: FoldPlan) -> list:
    """Per-fold metrics of one configuration."""
    y = m.require_target()
    out = []
    for tr, te in plan:
        model = fit_estimator(spec, m.take(tr))
        out.append(compute_metrics(y[te], model.predict(m.take(te))))
    return out


# --------------------------------------------------------------------------
# Nested CV
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NestedCVResult:
    best_hyperparams: dict
    best_index: int
    outer_metrics: tuple
    winners: tuple
    records: tuple  # (fold, grid_point, inner_rmse_mean, outer_rmse or None)
    inner_indices: tuple  # rows (in m) each outer fold's inner search touched

    @property
    def rmse_mean(self) -> float:
        return float(np.mean([mt.rmse for mt in self.outer_metrics]))

    @property
    def rmse_std(self) -> float:
        return float(np.std([mt.rmse for mt in self.outer_metrics]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "grid_point", "inner_rmse_mean", "outer_rmse"])
            for fold, gp, inner, outer in self.records:
                w.writerow([fold, gp, repr(inner), "" if outer is None else repr(outer)])


def inner_seed(outer_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([outer_seed, fold, 17]).generate_state(1)[0])


def nested_cv(m: FeatureMatrix, grid: GridSpec, outer: FoldPlan, inner_folds: int = 5) -> NestedCVResult:
    """Inner k-fold selects a grid point per outer fold; the final choice is the mode."""
    if inner_folds < 2:
        raise ConfigError("inner_folds must be >= 2")
    y = m.require_target()
    outer_metrics, winners, records, touched = [], [], [], []
    for f, (tr, te) in enumerate(outer):
        inner_m = m.take(tr)
        sel = cv_select(inner_m, grid, kfold_plan(len(tr), inner_folds, inner_seed(outer.seed, f)))
        model = fit_estimator(grid.spec(sel.best_index), inner_m)
        mt = compute_metrics(y[te], model.predict(m.take(te)))
        outer_metrics.append(mt)
        winners.append(sel.best_index)
        touched.append(tr)
        for g, inner in enumerate(sel.mean_rmse):
            records.append((f, g, float(inner), mt.rmse if g == sel.best_index else None))
    counts = Counter(winners)
    top = max(counts.values())
    best = min(i for i, c in counts.items() if c == top)
    return NestedCVResult(dict(grid.grid[best]), best, tuple(outer_metrics), tuple(winners),
                          tuple(records), tuple(touched))
