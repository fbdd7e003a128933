"""Estimator contract shared by every regression family."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from ..errors import ConfigError, DataError
from ..transform import FeatureMatrix

FORMAT_TAG = "thermoreg-model"
FORMAT_VERSION = 1

# Benchmark hyperparameters per family.
DEFAULTS = {
    "linear": {"l2": 0.0},
    "quadratic": {"l2": 0.0, "max_degree": 2, "column_cap": 2000},
    "weighted": {"l2": 0.0, "bandwidth": "silverman", "space": "target"},
    "binning": {"n_bins": 3, "driver": "T_Max_1", "scheme": "width"},
    "piecewise": {"breakpoints": 1, "driver": "T_Max_1"},
    "knn": {"k": 1},
    "svr": {"C": 1.0, "epsilon": 0.1, "gamma": "scale", "tol": 1e-4, "max_iter": 1_000_000},
    "forest": {"n_estimators": 100, "seed": 0, "max_features": "third", "max_depth": None,
               "min_samples_leaf": 1, "bootstrap": True},
}


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in DEFAULTS:
            raise ConfigError(f"unknown estimator family {self.family!r}; choose from {sorted(DEFAULTS)}")
        unknown = set(self.hyperparams) - set(DEFAULTS[self.family])
        if unknown:
            raise ConfigError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")

    @property
    def params(self) -> dict:
        return {**DEFAULTS[self.family], **self.hyperparams}

    def with_params(self, **kw) -> "EstimatorSpec":
        return EstimatorSpec(self.family, {**self.hyperparams, **kw})


class TrainedModel:
    """Fitted model. Subclasses implement ``_predict`` on a raw array and
    ``_state`` / ``_from_state`` for serialization."""

    family: ClassVar[str] = ""
    names: tuple
    hyperparams: dict

    def predict(self, m: FeatureMatrix) -> np.ndarray:
        if m.names != self.names:
            missing = [n for n in self.names if n not in m.names]
            extra = [n for n in m.names if n not in self.names]
            if missing or extra:
                raise DataError(f"column mismatch: missing {missing}, extra {extra}")
            m = m.select(self.names)
        if m.n_rows == 0:
            return np.empty(0)
        return self._predict(m.values)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "family": self.family,
            "names": list(self.names),
            "hyperparams": self.hyperparams,
            "params": _jsonable(self._state()),
        }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _restore(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    return obj


def dumps_model(model: TrainedModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def loads_model(text: str) -> TrainedModel:
    from . import REGISTRY

    d = json.loads(text)
    if d.get("format") != FORMAT_TAG:
        raise ConfigError("not a thermoreg model artifact")
    if d.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model artifact version {d.get('version')}")
    cls = REGISTRY[d["family"]][1]
    return cls._from_state(tuple(d["names"]), d["hyperparams"], _restore(d["params"]))


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
