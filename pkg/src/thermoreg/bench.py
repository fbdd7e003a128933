"""Benchmark runs that regenerate the result tables.

Every table repeats its pipeline once per seed. The seed drives the
train/test split, the fold plan used for tuning, and any model randomness.
Metrics are always computed on the held-out test split.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import CleanDataset, SplitSpec, load_dataset, load_schema, split
from .errors import ConfigError, DataError, NumericalError, ThermoregError
from .estimators import DEFAULTS, REGISTRY, EstimatorSpec, fit_estimator
from .evaluation import GridSpec, compute_metrics, cv_select, kfold_plan, knn_grid
from .neuralnet import CNN_GRID, NetworkSpec, TrainConfig, train, validation_split
from .report import ReportTable, RunRecord, provenance
from .selection import pca_fit, pca_transform, sbs
from .transform import PRESETS, FeatureMatrix, fit_recipe, resolve_recipe, with_vocabulary

DATA_ENV = "THERMOREG_DATA"
DEFAULT_DATA_NAME = "FLIR_groupA.csv"

# Model rows of the comparison table: key -> (label, family, fixed hyperparameters, tuned)
MODEL_ROWS = {
    "1nn": ("1NN", "knn", {"k": 1}, False),
    "ols": ("Ordinary Linear Regression", "linear", {"l2": 0.0}, False),
    "knn": ("KNN with Optimization over K", "knn", {}, True),
    "svr": ("Support Vector Regression", "svr", {}, False),
    "binning": ("Binning", "binning", {}, False),
    "piecewise": ("Piecewise Regression", "piecewise", {}, False),
    "weighted": ("Weighted Linear Regression", "weighted", {}, False),
    "quadratic": ("Quadratic Regression", "quadratic", {}, False),
    "forest": ("Random Forest", "forest", {}, True),
}
FEATURE_TABLE_RECIPES = ("a", "b", "c", "d", "e", "f")


def resolve_data_path(path=None) -> Path:
    """Explicit path, else $THERMOREG_DATA (a file, or a directory holding the CSV)."""
    raw = path or os.environ.get(DATA_ENV)
    if not raw:
        raise ConfigError(f"no dataset given; pass --data or set {DATA_ENV}")
    p = Path(raw)
    if p.is_dir():
        if (p / DEFAULT_DATA_NAME).exists():
            return p / DEFAULT_DATA_NAME
        csvs = sorted(p.glob("*.csv"))
        if len(csvs) != 1:
            raise DataError(f"{p}: expected {DEFAULT_DATA_NAME} or exactly one CSV, found {len(csvs)}")
        return csvs[0]
    if not p.exists():
        raise DataError(f"dataset not found: {p}")
    return p


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str] = None
    schema: Optional[str] = None
    recipe: str = "f"
    test_fraction: float = 290 / 959
    stratify: bool = False
    split_seed: int = 42  # single-split commands
    seeds: tuple = tuple(range(10))  # multi-seed tables
    models: tuple = tuple(MODEL_ROWS)
    hyperparams: dict = field(default_factory=dict)  # family -> overrides
    cv_folds: int = 5
    knn_k_max: int = 30
    forest_sizes: tuple = (50, 100, 150, 200, 250)
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.001
    validation_fraction: float = 0.2
    cnn_rows: tuple = tuple(range(len(CNN_GRID)))
    max_reps: int = 10
    sbs_target: int = 11
    out: str = "reports"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "forest_sizes", tuple(int(s) for s in self.forest_sizes))
        object.__setattr__(self, "cnn_rows", tuple(int(r) for r in self.cnn_rows))
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.recipe not in PRESETS:
            resolve_recipe(self.recipe)
        unknown = [m for m in self.models if m not in MODEL_ROWS]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; choose from {sorted(MODEL_ROWS)}")
        for fam, hp in self.hyperparams.items():
            if fam not in REGISTRY:
                raise ConfigError(f"hyperparameter overrides for unknown family {fam!r}")
            bad = sorted(set(hp) - set(DEFAULTS[fam]))
            if bad:
                raise ConfigError(f"unknown {fam} hyperparameters {bad}")
        bad_rows = [r for r in self.cnn_rows if not 0 <= r < len(CNN_GRID)]
        if bad_rows:
            raise ConfigError(f"cnn_rows out of range: {bad_rows}")
        if self.max_reps < 0:
            raise ConfigError("max_reps must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(self.test_fraction, seed, self.stratify)

    def family_params(self, family: str, fixed: Optional[dict] = None) -> dict:
        return {**(fixed or {}), **self.hyperparams.get(family, {})}


# --------------------------------------------------------------------------
# Shared plumbing
# --------------------------------------------------------------------------

class Workspace:
    """Loads the dataset once and hands out per-seed splits and matrices."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.schema = load_schema(cfg.schema)
        self.ds: CleanDataset = load_dataset(resolve_data_path(cfg.data), self.schema)

    def split(self, seed: int):
        return split(self.ds, self.cfg.split_spec(seed))

    def matrices(self, recipe, seed: int):
        """(train matrix, test matrix, manifest); the recipe is fitted on train only."""
        tr, te = self.split(seed)
        fitted = fit_recipe(with_vocabulary(resolve_recipe(recipe), self.ds), tr)
        return fitted.transform(tr), fitted.transform(te), fitted.manifest()

    def provenance(self, **extra) -> dict:
        return provenance(self.cfg.to_dict(), self.cfg.seeds, self.schema.manifest(), **extra)


def holdout_metrics(model, test: FeatureMatrix):
    return compute_metrics(test.require_target(), model.predict(test))


def _tuned_spec(family: str, cfg: RunConfig, train_m: FeatureMatrix, seed: int) -> EstimatorSpec:
    plan = kfold_plan(train_m.n_rows, cfg.cv_folds, seed)
    if family == "knn":
        grid = knn_grid(min(cfg.knn_k_max, train_m.n_rows - train_m.n_rows // cfg.cv_folds - 1))
    elif family == "forest":
        base = {**DEFAULTS["forest"], **cfg.family_params("forest"), "seed": seed}
        base.pop("n_estimators")
        grid = GridSpec("forest", tuple({"n_estimators": v} for v in cfg.forest_sizes), base)
    else:
        raise ConfigError(f"no tuning grid for {family}")
    sel = cv_select(train_m, grid, plan)
    return grid.spec(sel.best_index)


PROTOCOL = {
    "metrics": "held-out test split of each seed",
    "tuning": "5-fold CV on the training split (kNN k in 1..30, forest n_estimators grid)",
    "aggregation": "mean and population std over seeds",
}


# --------------------------------------------------------------------------
# Tables
# --------------------------------------------------------------------------

def run_feature_table(cfg: RunConfig, ws: Optional[Workspace] = None, recipes=FEATURE_TABLE_RECIPES) -> ReportTable:
    """Least squares (no penalty) on each recipe."""
    ws = ws or Workspace(cfg)
    t = ReportTable("Feature set comparison (ordinary least squares)", provenance=ws.provenance(protocol=PROTOCOL))
    spec = EstimatorSpec("linear", {"l2": 0.0})
    for name in recipes:
        label = f"({name}) {resolve_recipe(name).description}"
        for seed in cfg.seeds:
            tr, te, man = ws.matrices(name, seed)
            model = fit_estimator(spec, tr)
            t.add(RunRecord.from_metrics(label, seed, holdout_metrics(model, te), tr.n_features,
                                         {"recipe": name}), man)
    return t


def run_model_table(cfg: RunConfig, ws: Optional[Workspace] = None) -> ReportTable:
    ws = ws or Workspace(cfg)
    t = ReportTable(f"Model comparison on recipe ({cfg.recipe})", provenance=ws.provenance(protocol=PROTOCOL))
    per_seed = {seed: ws.matrices(cfg.recipe, seed) for seed in cfg.seeds}
    for key in cfg.models:
        label, family, fixed, tuned = MODEL_ROWS[key]
        for seed in cfg.seeds:
            tr, te, man = per_seed[seed]
            try:
                if tuned:
                    spec = _tuned_spec(family, cfg, tr, seed)
                else:
                    params = cfg.family_params(family, fixed)
                    if family == "forest":
                        params.setdefault("seed", seed)
                    spec = EstimatorSpec(family, params)
                model = fit_estimator(spec, tr)
                rec = RunRecord.from_metrics(label, seed, holdout_metrics(model, te), tr.n_features,
                                             {"model": key, "hyperparams": _plain(spec.params)})
            except ThermoregError as exc:
                rec = RunRecord.failed(label, seed, str(exc), tr.n_features, {"model": key})
            t.add(rec, man)
    return t


def cnn_label(row: int) -> str:
    n, f, k, l2 = CNN_GRID[row]
    return f"{n} x Conv1D({f}), kernel {k}, l2 {l2}"


def run_cnn_table(cfg: RunConfig, ws: Optional[Workspace] = None, history_dir=None) -> ReportTable:
    """Train each network configuration once per seed; optionally write history CSVs."""
    ws = ws or Workspace(cfg)
    t = ReportTable(f"1D-CNN architectures on recipe ({cfg.recipe})", provenance=ws.provenance(
        protocol={**PROTOCOL, "checkpoint": f"best epoch on a {cfg.validation_fraction:.0%} validation slice of train"}))
    if history_dir is not None:
        Path(history_dir).mkdir(parents=True, exist_ok=True)
    per_seed = {seed: ws.matrices(cfg.recipe, seed) for seed in cfg.seeds}
    for row in cfg.cnn_rows:
        n, f, k, l2 = CNN_GRID[row]
        label = cnn_label(row)
        for seed in cfg.seeds:
            tr, te, man = per_seed[seed]
            spec = NetworkSpec.stack(n, f, k, l2, tr.n_features)
            tc = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs, batch_size=cfg.batch_size,
                             seed=seed, validation_fraction=cfg.validation_fraction)
            fit_idx, val_idx = validation_split(tr.n_rows, cfg.validation_fraction, seed)
            params = {"row": row, "best_epoch": None}
            try:
                net = train(spec, tc, tr.take(fit_idx), tr.take(val_idx))
                mt = compute_metrics(te.require_target(), net.predict(te))
                params["best_epoch"] = net.best_epoch + 1
                rec = RunRecord.from_metrics(label, seed, mt, tr.n_features, params)
                if history_dir is not None:
                    net.write_history(Path(history_dir) / f"row{row}_seed{seed}.csv")
            except NumericalError as exc:
                rec = RunRecord.failed(label, seed, f"non-finite: {exc}", tr.n_features, params)
            t.add(rec, man)
    return t


def sweep_recipe(reps: int, base: str = "e"):
    r = resolve_recipe(base)
    if reps == 0:
        return r
    return r.then({"op": "replicate", "feature": "T_Max_1", "copies": reps}, name=f"{base}+{reps}rep")


def run_repetition_sweep(cfg: RunConfig, max_reps: Optional[int] = None,
                         ws: Optional[Workspace] = None) -> ReportTable:
    """Recipe (e) plus r replicas of T_Max_1 for r = 0..max_reps, under OLS and CV-tuned kNN."""
    max_reps = cfg.max_reps if max_reps is None else max_reps
    if max_reps < 1:
        raise ConfigError("max_reps must be >= 1")
    ws = ws or Workspace(cfg)
    t = ReportTable("Replication sweep of T_Max_1", provenance=ws.provenance(protocol=PROTOCOL))
    for reps in range(max_reps + 1):
        recipe = sweep_recipe(reps)
        for seed in cfg.seeds:
            tr, te, man = ws.matrices(recipe, seed)
            knn = fit_estimator(_tuned_spec("knn", cfg, tr, seed), tr)
            t.add(RunRecord.from_metrics(f"knn reps={reps}", seed, holdout_metrics(knn, te), tr.n_features,
                                         {"pipeline": "knn", "reps": reps, "k": knn.hyperparams["k"]}), man)
            ols = fit_estimator(EstimatorSpec("linear", {"l2": 0.0}), tr)
            t.add(RunRecord.from_metrics(f"ols reps={reps}", seed, holdout_metrics(ols, te), tr.n_features,
                                         {"pipeline": "ols", "reps": reps}), man)
    return t


def sweep_curve(t: ReportTable, pipeline: str = "knn") -> list:
    """[(reps, seed-mean rmse)] for one pipeline of a sweep table."""
    out = []
    for row in t.summary():
        name, _, reps = row["label"].partition(" reps=")
        if name == pipeline:
            out.append((int(reps), row["rmse_mean"]))
    return out


def run_sbs_audit(cfg: RunConfig, ws: Optional[Workspace] = None, trace_sink=None) -> ReportTable:
    """Backward selection from the full feature set down to cfg.sbs_target features.

    ``trace_sink``, if given, receives (seed, SbsTrace) for each seed.
    """
    ws = ws or Workspace(cfg)
    t = ReportTable("Sequential backward selection audit", provenance=ws.provenance(
        protocol={**PROTOCOL, "selection": "SBS scored by mean 5-fold CV RMSE on the training split"}))
    ols = EstimatorSpec("linear", {"l2": 0.0})
    for seed in cfg.seeds:
        tr, te, man = ws.matrices("full38", seed)
        model = fit_estimator(ols, tr)
        t.add(RunRecord.from_metrics("full set", seed, holdout_metrics(model, te), tr.n_features), man)
        trace = sbs(tr, cfg.sbs_target, kfold_plan(tr.n_rows, cfg.cv_folds, seed))
        if trace_sink is not None:
            trace_sink(seed, trace)
        keep = list(trace.final_set)
        model = fit_estimator(ols, tr.select(keep))
        t.add(RunRecord.from_metrics(f"SBS {cfg.sbs_target}", seed, holdout_metrics(model, te.select(keep)),
                                     len(keep), {"features": keep}),
              {"recipe": "full38+sbs", "n_features": len(keep), "features": keep})
        ftr, fte, fman = ws.matrices("f", seed)
        model = fit_estimator(ols, ftr)
        t.add(RunRecord.from_metrics("recipe (f)", seed, holdout_metrics(model, fte), ftr.n_features), fman)
    return t


def run_pca_comparison(cfg: RunConfig, ws: Optional[Workspace] = None) -> ReportTable:
    """Least squares on the recipe with and without an MLE-sized PCA projection."""
    ws = ws or Workspace(cfg)
    t = ReportTable(f"PCA before least squares on recipe ({cfg.recipe})", provenance=ws.provenance(protocol=PROTOCOL))
    ols = EstimatorSpec("linear", {"l2": 0.0})
    for seed in cfg.seeds:
        tr, te, man = ws.matrices(cfg.recipe, seed)
        t.add(RunRecord.from_metrics("no PCA", seed, holdout_metrics(fit_estimator(ols, tr), te), tr.n_features), man)
        p = pca_fit(tr, "mle")
        ptr, pte = pca_transform(p, tr), pca_transform(p, te)
        t.add(RunRecord.from_metrics("PCA (MLE k)", seed, holdout_metrics(fit_estimator(ols, ptr), pte), p.k,
                                     {"k": p.k}))
    return t


def _plain(d: dict) -> dict:
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in d.items()}
