"""Least-squares family: ordinary/ridge, quadratic, density-weighted, binned, piecewise."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..errors import ConfigError, DataError, NumericalError, RankDeficientWarning
from ..transform import FeatureMatrix
from .base import DEFAULTS, TrainedModel


def solve_least_squares(X, y, weights=None, l2=0.0):
    """Minimize sum w_i (y_i - x_i.w - b)^2 + l2 ||w||^2 with the intercept unpenalized.

    Centering removes the intercept from the problem. At ``l2 == 0`` the
    minimum-norm solution is returned (SVD based), which is what makes exact
    column replicas harmless.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise DataError("cannot fit on zero rows")
    if l2 < 0:
        raise ConfigError("l2 must be >= 0")
    if weights is None:
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
    else:
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or not w.sum() > 0:
            raise ConfigError("weights must be non-negative with positive sum")
        x_mean, y_mean = w @ X / w.sum(), w @ y / w.sum()
        s = np.sqrt(w)
        Xc, yc = (X - x_mean) * s[:, None], (y - y_mean) * s
    if d == 0:
        return np.zeros(0), float(y_mean)
    if l2 > 0:
        A = np.vstack([Xc, np.sqrt(l2) * np.eye(d)])
        coef = np.linalg.lstsq(A, np.concatenate([yc, np.zeros(d)]), rcond=None)[0]
    else:
        coef, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
        if rank < d:
            warnings.warn(f"rank {rank} < {d} features; using minimum-norm solution",
                          RankDeficientWarning, stacklevel=2)
    if not np.all(np.isfinite(coef)):
        raise NumericalError("least-squares solution is not finite")
    return coef, float(y_mean - x_mean @ coef)


# --------------------------------------------------------------------------
# Basis expansions
# --------------------------------------------------------------------------

def quadratic_pairs(d: int, degree: int):
    if degree == 1:
        return []
    if degree != 2:
        raise ConfigError(f"max_degree must be 1 or 2, got {degree}")
    return [(i, i) for i in range(d)] + list(combinations(range(d), 2))


def expand_basis(X: np.ndarray, basis: dict) -> np.ndarray:
    kind = basis["kind"]
    if kind == "identity":
        return X
    if kind == "quadratic":
        pairs = basis["pairs"]
        if not pairs:
            return X
        i, j = np.array(pairs).T
        return np.hstack([X, X[:, i] * X[:, j]])
    if kind == "hinge":
        knots = np.asarray(basis["knots"], dtype=np.float64)
        if knots.size == 0:
            return X
        driver = X[:, basis["driver_index"]]
        return np.hstack([X, np.maximum(0.0, driver[:, None] - knots[None, :])])
    raise ConfigError(f"unknown basis {kind!r}")


@dataclass(frozen=True, eq=False)
class LinearModel(TrainedModel):
    names: tuple
    hyperparams: dict
    weights: np.ndarray
    intercept: float
    basis: dict

    family = "linear"

    def _predict(self, X):
        return expand_basis(X, self.basis) @ self.weights + self.intercept

    def _state(self):
        return {"weights": self.weights, "intercept": self.intercept, "basis": self.basis}

    @classmethod
    def _from_state(cls, names, hp, st):
        return cls(names, hp, st["weights"], st["intercept"], st["basis"])


class QuadraticModel(LinearModel):
    family = "quadratic"


class WeightedModel(LinearModel):
    family = "weighted"


class PiecewiseModel(LinearModel):
    family = "piecewise"


def _hp(family, overrides):
    unknown = set(overrides) - set(DEFAULTS[family])
    if unknown:
        raise ConfigError(f"{family}: unknown hyperparameters {sorted(unknown)}")
    return {**DEFAULTS[family], **overrides}


def _fit_basis(cls, m: FeatureMatrix, hp: dict, basis: dict, weights=None):
    X = expand_basis(m.values, basis)
    w, b = solve_least_squares(X, m.require_target(), weights, float(hp.get("l2", 0.0)))
    return cls(m.names, hp, w, b, basis)


def fit_linear(m: FeatureMatrix, l2: float = 0.0) -> LinearModel:
    return _fit_basis(LinearModel, m, _hp("linear", {"l2": l2}), {"kind": "identity"})


def fit_quadratic(m: FeatureMatrix, l2: float = 0.0, max_degree: int = 2, column_cap: int = 2000) -> QuadraticModel:
    hp = _hp("quadratic", {"l2": l2, "max_degree": max_degree, "column_cap": column_cap})
    pairs = quadratic_pairs(m.n_features, int(max_degree))
    if m.n_features + len(pairs) > column_cap:
        raise ConfigError(f"quadratic expansion has {m.n_features + len(pairs)} columns > cap {column_cap}")
    return _fit_basis(QuadraticModel, m, hp, {"kind": "quadratic", "pairs": [list(p) for p in pairs]})


# --------------------------------------------------------------------------
# Density-weighted least squares
# --------------------------------------------------------------------------

def silverman_bandwidth(x: np.ndarray) -> float:
    """h = 0.9 min(sigma, IQR/1.34) n^(-1/5), sigma with ddof=1."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    sigma = x.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34)
    if not spread > 0:
        # IQR can vanish on heavily tied data while sigma does not.
        spread = sigma
    return 0.9 * spread * n ** (-0.2)


def gaussian_kde(sample: np.ndarray, points: np.ndarray, bandwidth: float) -> np.ndarray:
    """Gaussian KDE. ``sample`` and ``points`` are (n, d) or 1-D; scalar bandwidth."""
    sample = np.atleast_2d(np.asarray(sample, dtype=np.float64).T).T
    points = np.atleast_2d(np.asarray(points, dtype=np.float64).T).T
    d = sample.shape[1]
    sq = ((points[:, None, :] - sample[None, :, :]) ** 2).sum(axis=-1)
    norm = (2 * np.pi) ** (d / 2) * bandwidth ** d * sample.shape[0]
    return np.exp(-0.5 * sq / bandwidth ** 2).sum(axis=1) / norm


def density_weights(values: np.ndarray, bandwidth="silverman") -> np.ndarray:
    """Inverse-density weights normalized to mean 1."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        h = silverman_bandwidth(values) if bandwidth == "silverman" else float(bandwidth)
    else:
        # Feature-space KDE: Silverman on the mean per-column spread.
        h = (np.mean([silverman_bandwidth(c) for c in values.T]) if bandwidth == "silverman"
             else float(bandwidth))
    if not h > 0:
        raise NumericalError("KDE bandwidth is zero (all values identical)")
    dens = gaussian_kde(values, values, h)
    w = 1.0 / dens
    return w / w.mean()


def fit_weighted(m: FeatureMatrix, l2: float = 0.0, bandwidth="silverman", space: str = "target",
                 weights=None) -> WeightedModel:
    """Weighted least squares with weights 1/density, KDE over the target (or feature rows)."""
    hp = _hp("weighted", {"l2": l2, "bandwidth": bandwidth, "space": space})
    if m.n_rows < 3:
        raise DataError("weighted regression needs at least 3 rows")
    if weights is None:
        if space == "target":
            weights = density_weights(m.require_target(), bandwidth)
        elif space == "feature":
            weights = density_weights(m.values, bandwidth)
        else:
            raise ConfigError(f"space must be 'target' or 'feature', got {space!r}")
    return _fit_basis(WeightedModel, m, hp, {"kind": "identity"}, weights)


# --------------------------------------------------------------------------
# Piecewise (hinge) and binned regression
# --------------------------------------------------------------------------

def fit_piecewise(m: FeatureMatrix, breakpoints: int = 1, driver: str = "T_Max_1") -> PiecewiseModel:
    """Continuous piecewise-linear in ``driver``: hinge terms at driver quantiles."""
    hp = _hp("piecewise", {"breakpoints": breakpoints, "driver": driver})
    if breakpoints < 0:
        raise ConfigError("breakpoints must be >= 0")
    j = m.index(driver)
    qs = np.arange(1, breakpoints + 1) / (breakpoints + 1)
    knots = np.quantile(m.values[:, j], qs) if breakpoints else np.empty(0)
    uniq = np.unique(knots)
    if uniq.size < knots.size:
        warnings.warn(f"{knots.size - uniq.size} duplicate quantile knots collapsed", RuntimeWarning, stacklevel=2)
    basis = {"kind": "hinge", "driver_index": j, "knots": uniq.tolist()}
    return _fit_basis(PiecewiseModel, m, hp, basis)


@dataclass(frozen=True, eq=False)
class BinnedModel(TrainedModel):
    names: tuple
    hyperparams: dict
    driver_index: int
    bin_edges: np.ndarray
    per_bin: tuple  # (weights, intercept) or None -> fallback
    fallback: tuple

    family = "binning"

    def assign(self, driver_values: np.ndarray) -> np.ndarray:
        return assign_bins(driver_values, self.bin_edges)

    def _predict(self, X):
        bins = self.assign(X[:, self.driver_index])
        out = np.empty(X.shape[0])
        for b in range(len(self.bin_edges) - 1):
            mask = bins == b
            if mask.any():
                w, c = self.per_bin[b] or self.fallback
                out[mask] = X[mask] @ w + c
        return out

    def _state(self):
        return {"driver_index": self.driver_index, "bin_edges": self.bin_edges,
                "per_bin": [None if p is None else {"w": p[0], "b": p[1]} for p in self.per_bin],
                "fallback": {"w": self.fallback[0], "b": self.fallback[1]}}

    @classmethod
    def _from_state(cls, names, hp, st):
        per_bin = tuple(None if p is None else (p["w"], p["b"]) for p in st["per_bin"])
        return cls(names, hp, st["driver_index"], st["bin_edges"], per_bin,
                   (st["fallback"]["w"], st["fallback"]["b"]))


def assign_bins(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index per value; values outside the training range clamp to the end bins."""
    n_bins = len(edges) - 1
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)


def fit_binning(m: FeatureMatrix, n_bins: int = 3, driver: str = "T_Max_1", scheme: str = "width") -> BinnedModel:
    """Independent least-squares fits inside bins of ``driver``.

    Bins holding fewer than n_features + 1 rows use the global fit.
    """
    hp = _hp("binning", {"n_bins": n_bins, "driver": driver, "scheme": scheme})
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    j = m.index(driver)
    x = m.values[:, j]
    if scheme == "width":
        edges = np.linspace(x.min(), x.max(), n_bins + 1)
    elif scheme == "quantile":
        edges = np.quantile(x, np.linspace(0, 1, n_bins + 1))
    else:
        raise ConfigError(f"scheme must be 'width' or 'quantile', got {scheme!r}")
    if np.any(np.diff(edges) <= 0):
        raise DataError(f"bin edges for {driver!r} are not strictly ascending")
    y = m.require_target()
    fallback = solve_least_squares(m.values, y)
    bins = assign_bins(x, edges)
    per_bin = []
    for b in range(n_bins):
        rows = bins == b
        if rows.sum() < m.n_features + 1:
            per_bin.append(None)
        else:
            per_bin.append(solve_least_squares(m.values[rows], y[rows]))
    return BinnedModel(m.names, hp, j, edges, tuple(per_bin), fallback)
