"""Regression families behind one ``fit_estimator`` / ``model.predict`` contract."""
from .base import DEFAULTS, EstimatorSpec, TrainedModel, dumps_model, load_model, loads_model, save_model
from .forest import ForestModel, fit_forest
from .knn import KnnModel, fit_knn
from .linear import (
    BinnedModel, LinearModel, PiecewiseModel, QuadraticModel, WeightedModel,
    fit_binning, fit_linear, fit_piecewise, fit_quadratic, fit_weighted, solve_least_squares,
)
from .svr import SvrModel, fit_svr

REGISTRY = {
    "linear": (fit_linear, LinearModel),
    "quadratic": (fit_quadratic, QuadraticModel),
    "weighted": (fit_weighted, WeightedModel),
    "binning": (fit_binning, BinnedModel),
    "piecewise": (fit_piecewise, PiecewiseModel),
    "knn": (fit_knn, KnnModel),
    "svr": (fit_svr, SvrModel),
    "forest": (fit_forest, ForestModel),
}


def fit_estimator(spec: EstimatorSpec, m) -> TrainedModel:
    fit = REGISTRY[spec.family][0]
    return fit(m, **spec.params)


def predict(model: TrainedModel, m):
    return model.predict(m)


__all__ = [
    "DEFAULTS", "EstimatorSpec", "TrainedModel", "REGISTRY", "fit_estimator", "predict",
    "dumps_model", "loads_model", "save_model", "load_model",
    "fit_linear", "fit_quadratic", "fit_weighted", "fit_binning", "fit_piecewise",
    "fit_knn", "fit_svr", "fit_forest", "solve_least_squares",
    "LinearModel", "QuadraticModel", "WeightedModel", "BinnedModel", "PiecewiseModel",
    "KnnModel", "SvrModel", "ForestModel",
]
