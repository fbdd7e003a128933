from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..transform import FeatureMatrix
from .base import TrainedModel


def squared_distances(A: np.ndarray, B: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Exact pairwise squared Euclidean distances.

    Computed as an explicit sum of squared differences rather than the
    ||a||^2 - 2ab + ||b||^2 expansion, so equal distances compare equal and
    tie-breaking by index is reliable.
    """
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], chunk):
        diff = A[s:s + chunk, None, :] - B[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def neighbor_order(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Training-row indices sorted by distance for each query row; ties by index."""
    return np.argsort(squared_distances(A, B), axis=1, kind="stable")


@dataclass(frozen=True, eq=False)
class KnnModel(TrainedModel):
    names: tuple
    hyperparams: dict
    X: np.ndarray
    y: np.ndarray
    k: int

    family = "knn"

    def _predict(self, X):
        order = neighbor_order(X, self.X)[:, : self.k]
        return self.y[order].mean(axis=1)

    def _state(self):
        return {"X": self.X, "y": self.y, "k": self.k}

    @classmethod
    def _from_state(cls, names, hp, st):
        return cls(names, hp, st["X"], st["y"], int(st["k"]))


def fit_knn(m: FeatureMatrix, k: int = 1) -> KnnModel:
    k = int(k)
    if not 1 <= k <= m.n_rows:
        raise ConfigError(f"k must be in [1, {m.n_rows}], got {k}")
    return KnnModel(m.names, {"k": k}, m.values.copy(), m.require_target().copy(), k)


def knn_predictions_all_k(train: FeatureMatrix, query: FeatureMatrix, ks) -> dict:
    """Predictions for several k from one neighbor sort (used by the k grid search)."""
    order = neighbor_order(query.values, train.values)
    csum = np.cumsum(train.require_target()[order], axis=1)
    return {k: csum[:, k - 1] / k for k in ks}
