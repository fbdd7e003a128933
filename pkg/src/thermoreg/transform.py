"""Feature matrices, standardization, categorical encoding and feature recipes.

A recipe is an ordered list of steps. Fitting a recipe on the training split
records every learned quantity (means, stds, category lists) so the same
transform can be replayed on the test split without leakage.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import CleanDataset
from .errors import ConfigError, DataError

AGE_ORDINAL = {
    "18-20": 0, "21-25": 1, "26-30": 2, "31-40": 3,
    "41-50": 4, "51-60": 5, ">60": 6, ">70": 7,
}


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    names: tuple
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            values = values.reshape(len(values), -1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if values.shape[1] != len(self.names):
            raise DataError(f"{values.shape[1]} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(values)):
            raise DataError("feature matrix contains non-finite values")
        if self.target is not None:
            target = np.asarray(self.target, dtype=np.float64)
            if target.shape != (values.shape[0],):
                raise DataError("target length does not match row count")
            object.__setattr__(self, "target", target)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        target = None if self.target is None else self.target[rows]
        return FeatureMatrix(self.values[rows], self.names, target)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        cols = [self.index(n) for n in names]
        return FeatureMatrix(self.values[:, cols], tuple(names), self.target)

    def drop(self, name: str) -> "FeatureMatrix":
        return self.select([n for n in self.names if n != name])

    def append(self, values: np.ndarray, names: Sequence[str]) -> "FeatureMatrix":
        values = np.asarray(values, dtype=np.float64).reshape(self.n_rows, -1)
        return FeatureMatrix(np.hstack([self.values, values]), self.names + tuple(names), self.target)

    def with_target(self, target) -> "FeatureMatrix":
        return FeatureMatrix(self.values, self.names, target)

    def require_target(self) -> np.ndarray:
        if self.target is None:
            raise DataError("feature matrix has no target")
        return self.target


def write_matrix_csv(m: FeatureMatrix, path, target_name: str = "aveOralM") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(m.names) + ([target_name] if m.target is not None else [])
        w.writerow(header)
        for i in range(m.n_rows):
            row = [repr(float(v)) for v in m.values[i]]
            if m.target is not None:
                row.append(repr(float(m.target[i])))
            w.writerow(row)


# --------------------------------------------------------------------------
# Standardization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    names: tuple
    means: np.ndarray
    stds: np.ndarray

    def inverse(self, m: FeatureMatrix) -> FeatureMatrix:
        idx = _fitted_positions(self, m)
        out = m.values.copy()
        out[:, idx] = out[:, idx] * self.stds + self.means
        return FeatureMatrix(out, m.names, m.target)


def fit_standardizer(m: FeatureMatrix) -> Standardizer:
    if m.n_rows == 0:
        raise DataError("cannot standardize an empty matrix")
    means = m.values.mean(axis=0)
    stds = m.values.std(axis=0)  # population convention
    for name, s in zip(m.names, stds):
        if not s > 0:
            raise DataError(f"feature {name!r} has zero variance")
    return Standardizer(m.names, means, stds)


def _fitted_positions(s: Standardizer, m: FeatureMatrix) -> list:
    unseen = [n for n in m.names if n not in s.names]
    if unseen:
        raise DataError(f"standardizer was not fitted on {unseen}")
    missing = [n for n in s.names if n not in m.names]
    if missing:
        raise DataError(f"matrix lacks fitted columns {missing}")
    return [m.index(n) for n in s.names]


def apply_standardizer(s: Standardizer, m: FeatureMatrix) -> FeatureMatrix:
    idx = _fitted_positions(s, m)
    out = m.values.copy()
    out[:, idx] = (out[:, idx] - s.means) / s.stds
    return FeatureMatrix(out, m.names, m.target)


# --------------------------------------------------------------------------
# Encoders and engineered features
# --------------------------------------------------------------------------

def encode_ordinal(col: Sequence[str], mapping: Optional[dict] = None) -> np.ndarray:
    mapping = AGE_ORDINAL if mapping is None else mapping
    out = np.empty(len(col), dtype=np.float64)
    for i, v in enumerate(col):
        if v not in mapping:
            raise DataError(f"unknown category {v!r} at row {i}")
        out[i] = mapping[v]
    return out


def encode_onehot(col: Sequence[str], name: str = "x", categories: Optional[Sequence[str]] = None) -> FeatureMatrix:
    """One indicator column per category, categories sorted lexicographically by default."""
    if len(col) == 0:
        raise DataError(f"cannot one-hot encode empty column {name!r}")
    cats = sorted(set(col)) if categories is None else list(categories)
    lookup = {c: j for j, c in enumerate(cats)}
    out = np.zeros((len(col), len(cats)))
    for i, v in enumerate(col):
        if v not in lookup:
            raise DataError(f"{name}: category {v!r} at row {i} not in {cats}")
        out[i, lookup[v]] = 1.0
    return FeatureMatrix(out, tuple(f"{name}_{c}" for c in cats))


def polynomial_names(x: str, y: str) -> tuple:
    return (f"{x}^2", f"{y}^2", f"{x}*{y}")


def add_polynomial(m: FeatureMatrix, features: Sequence[str]) -> FeatureMatrix:
    """Append x^2, y^2 and x*y for the pair ``features``."""
    x_name, y_name = features
    x, y = m.column(x_name), m.column(y_name)
    return m.append(np.column_stack([x * x, y * y, x * y]), polynomial_names(x_name, y_name))


def replicate_feature(m: FeatureMatrix, feature: str, extra_copies: int) -> FeatureMatrix:
    if extra_copies < 0:
        raise ConfigError("extra_copies must be >= 0")
    col = m.column(feature)
    if extra_copies == 0:
        return m
    names = [f"{feature}_rep{k}" for k in range(1, extra_copies + 1)]
    return m.append(np.repeat(col[:, None], extra_copies, axis=1), names)


# --------------------------------------------------------------------------
# Recipes
# --------------------------------------------------------------------------

STEP_KEYS = {
    "select": {"columns"},
    "ordinal": {"column"},
    "onehot": {"column", "categories"},
    "standardize": set(),
    "polynomial": {"features"},
    "replicate": {"feature", "copies"},
    "keep": {"columns"},
}


@dataclass(frozen=True)
class FeatureRecipe:
    name: str
    steps: tuple = field(default_factory=tuple)
    description: str = ""

    def __post_init__(self):
        steps = tuple(dict(s) for s in self.steps)
        for s in steps:
            op = s.get("op")
            if op not in STEP_KEYS:
                raise ConfigError(f"recipe {self.name!r}: unknown step {op!r}")
            extra = set(s) - STEP_KEYS[op] - {"op"}
            if extra:
                raise ConfigError(f"recipe {self.name!r}: step {op!r} has unknown keys {sorted(extra)}")
        object.__setattr__(self, "steps", steps)

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "steps": [dict(s) for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureRecipe":
        return cls(d.get("name", "custom"), tuple(d["steps"]), d.get("description", ""))

    def then(self, *steps, name: Optional[str] = None) -> "FeatureRecipe":
        return FeatureRecipe(name or self.name, self.steps + tuple(steps), self.description)


RANKED_FEATURES = (
    "T_Max_1", "canthi4Max_1", "canthiMax_1", "Max1R13_1",
    "Max1L13_1", "aveAllL13_1", "aveAllR13_1",
)
BIO_CANDIDATES = ("Distance", "T_offset", "T_atm", "Humidity", "Gender_Female", "Gender_Male")
POLY_PAIR = ("T_Max_1", "canthi4Max_1")
REPLICATED = "T_Max_1"


def _bio_steps(numeric: Sequence[str]) -> tuple:
    return (
        {"op": "select", "columns": list(numeric)},
        {"op": "onehot", "column": "Gender", "categories": ["Female", "Male"]},
        {"op": "standardize"},
    )


def _presets() -> dict:
    a = FeatureRecipe("a", (
        {"op": "select", "columns": list(RANKED_FEATURES)},
        {"op": "standardize"},
    ), "Correlation-Bio Features Set")
    b = FeatureRecipe("b", _bio_steps(RANKED_FEATURES + ("Distance", "T_offset", "T_atm", "Humidity")),
                      "Comprehensive Bio Features Set")
    c = FeatureRecipe("c", _bio_steps(RANKED_FEATURES + ("T_offset", "T_atm", "Humidity")),
                      "Optimized Correlation-Bio Set")
    rep = {"op": "replicate", "feature": REPLICATED, "copies": 5}
    poly = {"op": "polynomial", "features": list(POLY_PAIR)}
    d = FeatureRecipe("d", c.steps + (rep,), "Expanded Optimal Feature Set")
    e = FeatureRecipe("e", c.steps + (poly,), "Optimal Combo Feature Set")
    f = FeatureRecipe("f", e.steps + (rep,), "Final Engineered Feature Set")
    full38 = FeatureRecipe("full38", (
        {"op": "select", "columns": "*"},
        {"op": "ordinal", "column": "Age"},
        {"op": "onehot", "column": "Gender"},
        {"op": "onehot", "column": "Ethnicity"},
        {"op": "standardize"},
    ), "All averaged numeric features plus encoded categoricals")
    return {r.name: r for r in (a, b, c, d, e, f, full38)}


PRESETS = _presets()
PRESET_FEATURE_COUNTS = {"a": 7, "b": 13, "c": 12, "d": 17, "e": 15, "f": 20}


def resolve_recipe(spec) -> FeatureRecipe:
    """Accept a preset name, a path to a recipe JSON file, or a recipe."""
    if isinstance(spec, FeatureRecipe):
        return spec
    if spec in PRESETS:
        return PRESETS[spec]
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        return FeatureRecipe.from_dict(json.loads(path.read_text()))
    raise ConfigError(f"unknown recipe {spec!r}; presets are {sorted(PRESETS)}")


@dataclass(frozen=True)
class FittedRecipe:
    recipe: FeatureRecipe
    params: tuple  # one entry per step, None where nothing was learned
    names: tuple

    def transform(self, ds: CleanDataset) -> FeatureMatrix:
        m, _ = _run_steps(self.recipe, ds, self.params)
        if m.names != self.names:
            raise DataError("recipe replay produced different columns")
        return m

    def manifest(self) -> dict:
        return {"recipe": self.recipe.name, "n_features": len(self.names), "features": list(self.names)}


def fit_recipe(recipe: FeatureRecipe, ds: CleanDataset) -> FittedRecipe:
    m, params = _run_steps(recipe, ds, None)
    return FittedRecipe(recipe, tuple(params), m.names)


def build_features(ds: CleanDataset, recipe) -> FeatureMatrix:
    """Fit ``recipe`` on ``ds`` and return the transformed matrix."""
    return fit_recipe(resolve_recipe(recipe), ds).transform(ds)


def _run_steps(recipe: FeatureRecipe, ds: CleanDataset, fitted: Optional[tuple]):
    m = FeatureMatrix(np.empty((ds.n_rows, 0)), (), ds.target)
    scalable: list = []  # numeric-kind columns; indicators are never standardized
    standardized = False
    params = []
    for i, step in enumerate(recipe.steps):
        op = step["op"]
        p = None if fitted is None else fitted[i]
        if op == "select":
            cols = step["columns"]
            if cols == "*":
                cols = ds.feature_columns if p is None else p
                p = list(cols)
            for c in cols:
                if c not in ds.numeric:
                    raise DataError(f"recipe {recipe.name!r} references missing column {c!r}")
            m = m.append(np.column_stack([ds.numeric[c] for c in cols]) if cols else np.empty((ds.n_rows, 0)), cols)
            scalable.extend(cols)
        elif op == "ordinal":
            c = step["column"]
            if c not in ds.categorical:
                raise DataError(f"recipe {recipe.name!r} references missing column {c!r}")
            m = m.append(encode_ordinal(ds.categorical[c]), [c])
            scalable.append(c)
        elif op == "onehot":
            c = step["column"]
            if c not in ds.categorical:
                raise DataError(f"recipe {recipe.name!r} references missing column {c!r}")
            cats = step.get("categories") or p
            enc = encode_onehot(ds.categorical[c], c, cats)
            p = [n[len(c) + 1:] for n in enc.names]
            m = m.append(enc.values, enc.names)
        elif op == "standardize":
            sub = m.select([n for n in scalable if n in m.names])
            p = fit_standardizer(sub) if p is None else p
            m = _replace(m, apply_standardizer(p, sub))
            standardized = True
        elif op == "polynomial":
            m = add_polynomial(m, step["features"])
            new = list(polynomial_names(*step["features"]))
            if standardized:
                sub = m.select(new)
                p = fit_standardizer(sub) if p is None else p
                m = _replace(m, apply_standardizer(p, sub))
        elif op == "replicate":
            m = replicate_feature(m, step["feature"], int(step["copies"]))
        elif op == "keep":
            m = m.select(step["columns"])
        params.append(p)
    return m, params


def _replace(m: FeatureMatrix, sub: FeatureMatrix) -> FeatureMatrix:
    values = m.values.copy()
    for j, name in enumerate(sub.names):
        values[:, m.index(name)] = sub.values[:, j]
    return FeatureMatrix(values, m.names, m.target)


def with_vocabulary(recipe: FeatureRecipe, ds: CleanDataset) -> FeatureRecipe:
    """Pin one-hot category lists from ``ds`` (normally the full cleaned dataset).

    Category vocabularies are a property of the schema, not a learned
    statistic; pinning them keeps rare categories from appearing only in the
    test split.
    """
    steps = []
    for s in recipe.steps:
        if s["op"] == "onehot" and not s.get("categories") and s["column"] in ds.categorical:
            s = dict(s, categories=sorted(set(ds.categorical[s["column"]])))
        steps.append(s)
    return FeatureRecipe(recipe.name, tuple(steps), recipe.description)
