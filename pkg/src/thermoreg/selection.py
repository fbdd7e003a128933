"""Feature ranking and subset search.

Every wrapper method here scores candidates with ordinary least squares and
the mean validation RMSE over a FoldPlan built on the training split.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, RankDeficientWarning
from .estimators.linear import solve_least_squares
from .evaluation import FoldPlan, rmse
from .transform import FeatureMatrix


@dataclass(frozen=True)
class RankingEntry:
    feature: str
    score: Optional[float] = None
    rmse: Optional[float] = None


def pearson_rank(m: FeatureMatrix) -> list:
    """Features sorted by |Pearson r| with the target, highest first."""
    y = m.require_target()
    if m.n_rows < 2:
        raise DataError("Pearson ranking needs at least 2 rows")
    yc = y - y.mean()
    if not np.any(yc):
        raise DataError("target is constant")
    entries = []
    for j, name in enumerate(m.names):
        xc = m.values[:, j] - m.values[:, j].mean()
        sxx = xc @ xc
        if sxx == 0:
            warnings.warn(f"feature {name!r} is constant; scored 0", RuntimeWarning, stacklevel=2)
            score = 0.0
        else:
            score = min(1.0, abs(float(xc @ yc / math.sqrt(sxx * (yc @ yc)))))
        entries.append(RankingEntry(name, score))
    return sorted(entries, key=lambda e: -e.score)


def ols_cv_rmse(m: FeatureMatrix, names: Sequence[str], plan: FoldPlan) -> float:
    """Mean validation RMSE of least squares on ``names`` (intercept only when empty)."""
    cols = [m.index(n) for n in names]
    X, y = m.values[:, cols], m.require_target()
    scores = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        for tr, te in plan:
            w, b = solve_least_squares(X[tr], y[tr])
            scores.append(rmse(y[te], X[te] @ w + b))
    return float(np.mean(scores))


def single_feature_rmse(m: FeatureMatrix, plan: FoldPlan) -> list:
    """One-variable least squares per feature, sorted by validation RMSE ascending."""
    out = []
    for j, name in enumerate(m.names):
        degenerate = any(np.ptp(m.values[tr, j]) == 0 for tr, _ in plan)
        if degenerate:
            warnings.warn(f"feature {name!r} is constant within a fold; skipped", RuntimeWarning, stacklevel=2)
            continue
        out.append(RankingEntry(name, rmse=ols_cv_rmse(m, [name], plan)))
    return sorted(out, key=lambda e: e.rmse)


def feature_table(m: FeatureMatrix, plan: FoldPlan) -> list:
    """Pearson order with each feature's single-feature RMSE attached."""
    by_name = {e.feature: e.rmse for e in single_feature_rmse(m, plan)}
    return [RankingEntry(e.feature, e.score, by_name.get(e.feature)) for e in pearson_rank(m)]


# --------------------------------------------------------------------------
# Exhaustive subset search
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SubsetSearchResult:
    base: tuple
    candidate_features: tuple
    best_subset: frozenset
    per_subset_rmse: dict  # frozenset -> rmse

    def rows(self) -> list:
        order = sorted(self.per_subset_rmse.items(), key=lambda kv: (kv[1], len(kv[0]), sorted(kv[0])))
        return [{"subset": "+".join(sorted(s)) or "(none)", "size": len(s), "rmse": r,
                 "best": s == self.best_subset} for s, r in order]


def exhaustive_subset_search(m: FeatureMatrix, base: Sequence[str], candidates: Sequence[str],
                             plan: FoldPlan, max_candidates: int = 20) -> SubsetSearchResult:
    """Score base + S for every subset S of ``candidates``.

    Ties go to the smaller subset, then the lexicographically smaller one.
    """
    if len(candidates) > max_candidates:
        raise ConfigError(f"{len(candidates)} candidates exceeds the limit of {max_candidates} "
                          f"({2 ** len(candidates)} subsets)")
    overlap = set(base) & set(candidates)
    if overlap:
        raise ConfigError(f"candidates overlap the base set: {sorted(overlap)}")
    scores = {}
    for r in range(len(candidates) + 1):
        for subset in combinations(candidates, r):
            keep = set(base) | set(subset)
            names = [n for n in m.names if n in keep]
            scores[frozenset(subset)] = ols_cv_rmse(m, names, plan)
    best = min(scores, key=lambda s: (scores[s], len(s), sorted(s)))
    return SubsetSearchResult(tuple(base), tuple(candidates), best, scores)


# --------------------------------------------------------------------------
# Sequential backward selection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SbsTrace:
    start: tuple
    start_rmse: float
    steps: tuple  # (removed feature, validation rmse after removal)
    final_set: tuple

    def rows(self) -> list:
        size = len(self.start)
        out = [{"step": 0, "removed": "", "n_features": size, "val_rmse": self.start_rmse}]
        for i, (name, r) in enumerate(self.steps, start=1):
            out.append({"step": i, "removed": name, "n_features": size - i, "val_rmse": r})
        return out


def sbs(m: FeatureMatrix, target_size: int, plan: FoldPlan) -> SbsTrace:
    """Greedy backward elimination down to ``target_size`` features.

    Each step drops the feature whose removal gives the lowest validation
    RMSE; ties drop the lexicographically smallest name.
    """
    if not 1 <= target_size < m.n_features:
        raise ConfigError(f"target_size must be in [1, {m.n_features - 1}], got {target_size}")
    current = list(m.names)
    steps = []
    start_rmse = ols_cv_rmse(m, current, plan)
    while len(current) > target_size:
        trial = {f: ols_cv_rmse(m, [n for n in current if n != f], plan) for f in current}
        drop = min(trial, key=lambda f: (trial[f], f))
        current.remove(drop)
        steps.append((drop, trial[drop]))
    return SbsTrace(tuple(m.names), start_rmse, tuple(steps), tuple(current))


# --------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    mean: np.ndarray
    names: tuple
    total_variance: float
    mle_scores: Optional[np.ndarray] = None  # log-evidence for k = 1..d-1

    @property
    def k(self) -> int:
        return self.components.shape[0]


def minka_log_evidence(eigenvalues: np.ndarray, k: int, n_samples: int) -> float:
    """Laplace-approximated log evidence of a rank-k probabilistic PCA model.

    ``eigenvalues`` are the sample-covariance eigenvalues in descending order.
    Degenerate configurations (zero or tied eigenvalues across the split) score
    -inf so the search prefers smaller k.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    d = lam.size
    if not 1 <= k < d:
        raise ConfigError(f"k must be in [1, {d - 1}]")
    tiny = 1e-15
    if lam[k - 1] < tiny:
        return -np.inf
    v = max(tiny, lam[k:].sum() / (d - k))
    log_p_u = -k * math.log(2.0) + sum(math.lgamma((d - i + 1) / 2.0) - (d - i + 1) / 2.0 * math.log(math.pi)
                                        for i in range(1, k + 1))
    log_lik = -n_samples / 2.0 * float(np.sum(np.log(lam[:k]))) - n_samples * (d - k) / 2.0 * math.log(v)
    m = d * k - k * (k + 1) / 2.0
    lam_hat = np.concatenate([lam[:k], np.full(d - k, v)])
    log_det = 0.0
    for a in range(k):
        for b in range(a + 1, d):
            term = (lam[a] - lam[b]) * (1.0 / lam_hat[b] - 1.0 / lam_hat[a])
            if not term > 0:
                return -np.inf
            log_det += math.log(term) + math.log(n_samples)
    return log_p_u + log_lik + (m + k) / 2.0 * math.log(2 * math.pi) - log_det / 2.0 - k / 2.0 * math.log(n_samples)


def pca_fit(m: FeatureMatrix, k: Union[int, str] = "mle") -> PcaModel:
    n, d = m.values.shape
    if n < 2:
        raise DataError("PCA needs at least 2 rows")
    mean = m.values.mean(axis=0)
    Xc = m.values - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    # Deterministic sign: largest-magnitude loading positive.
    flip = np.sign(evecs[np.arange(d), np.argmax(np.abs(evecs), axis=1)])
    evecs *= np.where(flip == 0, 1.0, flip)[:, None]
    scores = None
    if k == "mle":
        if d < 2:
            raise ConfigError("MLE dimension selection needs at least 2 features")
        scores = np.array([minka_log_evidence(evals, kk, n) for kk in range(1, d)])
        k = int(np.argmax(scores)) + 1
    k = int(k)
    if not 1 <= k <= d:
        raise ConfigError(f"k must be in [1, {d}], got {k}")
    return PcaModel(evecs[:k].copy(), evals[:k].copy(), mean, m.names, float(np.trace(cov)), scores)


def pca_transform(p: PcaModel, m: FeatureMatrix) -> FeatureMatrix:
    if m.n_features != p.components.shape[1]:
        raise DataError(f"PCA was fitted on {p.components.shape[1]} features, got {m.n_features}")
    scores = (m.values - p.mean) @ p.components.T
    return FeatureMatrix(scores, tuple(f"PC{i + 1}" for i in range(p.k)), m.target)


def pca_inverse(p: PcaModel, scores: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(scores.values @ p.components + p.mean, p.names, scores.target)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def write_rows(rows: list, path, fmt: str = "csv") -> None:
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
