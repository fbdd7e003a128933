"""Command-line entry point: ``thermoreg <command> [options]``.

Settings resolve in this order, later wins: built-in defaults, the
THERMOREG_DATA environment variable (dataset location only), command-line
flags, then the ``--config`` JSON file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .bench import (
    MODEL_ROWS, RunConfig, Workspace, holdout_metrics, run_cnn_table, run_feature_table,
    run_model_table, run_pca_comparison, run_repetition_sweep, run_sbs_audit, sweep_curve,
)
from .dataset import write_clean_csv
from .errors import ConfigError, RankDeficientWarning, ThermoregError
from .estimators import DEFAULTS, EstimatorSpec, fit_estimator, save_model
from .evaluation import GridSpec, kfold_plan, nested_cv
from .report import emit_report
from .selection import exhaustive_subset_search, feature_table, write_rows
from .transform import BIO_CANDIDATES, RANKED_FEATURES, write_matrix_csv


def parse_seeds(text: str) -> tuple:
    """'0-9' or '0,3,5' or a mix such as '0-2,7'."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse seeds {text!r}") from None
    if not out:
        raise ConfigError("seeds list is empty")
    return tuple(out)


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_hp(items, default_family=None) -> dict:
    """['k=5', 'svr.C=2'] -> {family: {name: value}}."""
    out: dict = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--hp expects key=value, got {item!r}")
        fam, dot, name = key.rpartition(".")
        fam = fam if dot else default_family
        if fam is None:
            raise ConfigError(f"--hp {item!r}: name the family (family.key=value) or pass --model")
        out.setdefault(fam, {})[name] = parse_value(value)
    return out


def build_config(args) -> RunConfig:
    d = RunConfig().to_dict()
    flag_map = {"data": "data", "schema": "schema", "recipe": "recipe", "seed": "split_seed",
                "out": "out", "epochs": "epochs", "max_reps": "max_reps"}
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    if getattr(args, "seeds", None) is not None:
        d["seeds"] = list(parse_seeds(args.seeds))
    model = getattr(args, "model", None)
    if model is not None and getattr(args, "command", None) == "table-v":
        d["models"] = [m.strip() for m in model.split(",")]
        model = None
    family = model if model in DEFAULTS else None
    hp = parse_hp(getattr(args, "hp", None), family)
    if hp:
        d["hyperparams"] = hp
    if getattr(args, "config", None):
        d.update(load_config_file(args.config))
    return RunConfig.from_dict(d)


def load_config_file(path) -> dict:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    return d


def formats(args) -> tuple:
    return (args.format,) if args.format else ("csv", "json")


def _dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_table(t) -> None:
    print(t.title)
    for row in t.summary():
        feats = "" if row["n_features"] is None else f"{row['n_features']:>3}  "
        print(f"  {row['label']:<44} {feats}RMSE {row['rmse_mean']:.4f} +/- {row['rmse_std']:.4f}"
              f"  MAE {row['mae_mean']:.4f}  MSE {row['mse_mean']:.5f}  [{row['status']}]")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_ingest(cfg, args, out: Path) -> None:
    ws = Workspace(cfg)
    tr, te = ws.split(cfg.split_seed)
    write_clean_csv(ws.ds, out / "clean.csv")
    summary = {"n_rows": ws.ds.n_rows, "n_train": tr.n_rows, "n_test": te.n_rows,
               "split_seed": cfg.split_seed, "feature_columns": ws.ds.feature_columns,
               "categorical_columns": ws.ds.categorical_columns, "target": ws.ds.target_name,
               "schema": ws.schema.manifest()}
    _dump(summary, out / "ingest.json")
    print(f"{ws.ds.n_rows} rows after cleaning; split {tr.n_rows}/{te.n_rows} (seed {cfg.split_seed})")


def cmd_features(cfg, args, out: Path) -> None:
    ws = Workspace(cfg)
    tr, te, man = ws.matrices(cfg.recipe, cfg.split_seed)
    stem = f"features_{Path(str(cfg.recipe)).stem}"
    write_matrix_csv(tr, out / f"{stem}_train.csv", ws.ds.target_name)
    write_matrix_csv(te, out / f"{stem}_test.csv", ws.ds.target_name)
    _dump(man, out / f"{stem}.json")
    print(f"recipe {man['recipe']}: {man['n_features']} features")


def cmd_select(cfg, args, out: Path) -> None:
    ws = Workspace(cfg)
    fmts = formats(args)
    plan_seed = cfg.split_seed
    a_tr, _, _ = ws.matrices("a", cfg.split_seed)
    ranking = feature_table(a_tr, kfold_plan(a_tr.n_rows, cfg.cv_folds, plan_seed))
    rows = [{"rank": i + 1, "feature": e.feature, "score": e.score, "rmse": e.rmse} for i, e in enumerate(ranking)]
    b_tr, _, _ = ws.matrices("b", cfg.split_seed)
    search = exhaustive_subset_search(b_tr, RANKED_FEATURES, BIO_CANDIDATES,
                                      kfold_plan(b_tr.n_rows, cfg.cv_folds, plan_seed))
    for fmt in fmts:
        write_rows(rows, out / f"table_i.{fmt}", fmt)
        write_rows(search.rows(), out / f"subset_search.{fmt}", fmt)
    emit_report(run_pca_comparison(cfg, ws), out / "pca", fmts)
    print("feature ranking (|r|, single-feature CV RMSE):")
    for r in rows:
        print(f"  {r['rank']}. {r['feature']:<14} {r['score']:.6f}  {r['rmse']:.4f}")
    print(f"best bio subset: {sorted(search.best_subset)} "
          f"(CV RMSE {search.per_subset_rmse[search.best_subset]:.4f})")


def _family(args) -> str:
    if not args.model:
        raise ConfigError(f"--model is required; choose from {sorted(DEFAULTS)}")
    if args.model not in DEFAULTS:
        raise ConfigError(f"unknown model {args.model!r}; choose from {sorted(DEFAULTS)}")
    return args.model


def cmd_fit(cfg, args, out: Path) -> None:
    family = _family(args)
    ws = Workspace(cfg)
    tr, te, man = ws.matrices(cfg.recipe, cfg.split_seed)
    model = fit_estimator(EstimatorSpec(family, cfg.family_params(family)), tr)
    mt = holdout_metrics(model, te)
    save_model(model, out / f"model_{family}.json")
    _dump({"model": family, "hyperparams": model.hyperparams, "recipe": man, "split_seed": cfg.split_seed,
           "test": mt.as_dict()}, out / f"fit_{family}.json")
    print(f"{family}: test RMSE {mt.rmse:.4f}  MAE {mt.mae:.4f}  MSE {mt.mse:.5f}  (n={mt.n})")


def _grid(family: str, cfg: RunConfig, items) -> GridSpec:
    base = cfg.family_params(family)
    if items:
        grid = [{}]
        for item in items:
            key, sep, values = item.partition("=")
            if not sep:
                raise ConfigError(f"--grid expects key=v1,v2,..., got {item!r}")
            grid = [dict(g, **{key: parse_value(v)}) for g in grid for v in values.split(",")]
        return GridSpec(family, tuple(grid), base)
    if family == "knn" and "k" not in base:
        return GridSpec("knn", tuple({"k": k} for k in range(1, cfg.knn_k_max + 1)), base)
    if family == "forest" and "n_estimators" not in base:
        return GridSpec("forest", tuple({"n_estimators": v} for v in cfg.forest_sizes), base)
    return GridSpec(family, ({},), base)


def cmd_evaluate(cfg, args, out: Path) -> None:
    family = _family(args)
    ws = Workspace(cfg)
    tr, _, _ = ws.matrices(cfg.recipe, cfg.split_seed)
    grid = _grid(family, cfg, args.grid)
    res = nested_cv(tr, grid, kfold_plan(tr.n_rows, cfg.cv_folds, cfg.split_seed), cfg.cv_folds)
    res.write_csv(out / f"cv_{family}.csv")
    _dump({"model": family, "grid": list(grid.grid), "base": grid.base, "best_hyperparams": res.best_hyperparams,
           "winners": list(res.winners), "outer_rmse": [m.rmse for m in res.outer_metrics],
           "rmse_mean": res.rmse_mean, "rmse_std": res.rmse_std,
           "protocol": "nested CV on the training split of the fixed split seed"}, out / f"evaluate_{family}.json")
    print(f"{family}: nested-CV RMSE {res.rmse_mean:.4f} +/- {res.rmse_std:.4f}; chosen {res.best_hyperparams}")


def cmd_table_iv(cfg, args, out: Path) -> None:
    t = run_feature_table(cfg)
    emit_report(t, out / "table_iv", formats(args))
    _print_table(t)


def cmd_table_v(cfg, args, out: Path) -> None:
    t = run_model_table(cfg)
    emit_report(t, out / "table_v", formats(args))
    _print_table(t)


def cmd_table_vi(cfg, args, out: Path) -> None:
    t = run_cnn_table(cfg, history_dir=out / "histories")
    emit_report(t, out / "table_vi", formats(args))
    _print_table(t)


def cmd_fig_2(cfg, args, out: Path) -> None:
    t = run_repetition_sweep(cfg)
    emit_report(t, out / "fig_2", formats(args))
    knn, ols = dict(sweep_curve(t, "knn")), dict(sweep_curve(t, "ols"))
    rows = [{"reps": r, "knn_rmse": knn[r], "ols_rmse": ols[r]} for r in sorted(knn)]
    write_rows(rows, out / "fig_2_curve.csv", "csv")
    best = min(knn, key=knn.get)
    print("reps  kNN RMSE  OLS RMSE")
    for r in rows:
        print(f"{r['reps']:>4}  {r['knn_rmse']:.5f}   {r['ols_rmse']:.5f}")
    print(f"kNN minimum at {best} replicas")


def cmd_sbs_audit(cfg, args, out: Path) -> None:
    def sink(seed, trace):
        write_rows(trace.rows(), out / f"sbs_trace_seed{seed}.csv", "csv")
    t = run_sbs_audit(cfg, trace_sink=sink)
    emit_report(t, out / "sbs_audit", formats(args))
    _print_table(t)


COMMANDS = {
    "ingest": (cmd_ingest, "clean and average the dataset, report the split"),
    "features": (cmd_features, "build a recipe's train/test matrices"),
    "select": (cmd_select, "feature ranking, bio-subset search and PCA comparison"),
    "fit": (cmd_fit, "fit one model on the fixed split and save it"),
    "evaluate": (cmd_evaluate, "nested cross-validation of one model family"),
    "table-iv": (cmd_table_iv, "least squares on recipes a-f over seeds"),
    "table-v": (cmd_table_v, "model comparison over seeds"),
    "table-vi": (cmd_table_vi, "CNN architecture grid over seeds"),
    "fig-2": (cmd_fig_2, "T_Max_1 replication sweep"),
    "sbs-audit": (cmd_sbs_audit, "backward selection from the full feature set"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoreg", description="Oral-temperature regression benchmark.")
    p.add_argument("--version", action="version", version=f"thermoreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text, description=help_text)
        s.add_argument("--data", help="dataset CSV or a directory holding it (default: $THERMOREG_DATA)")
        s.add_argument("--schema", help="schema JSON (default: packaged schema)")
        s.add_argument("--recipe", help="preset name (a-f, full38) or recipe JSON path; default f")
        s.add_argument("--seed", type=int, help="split seed for single-split commands (default 42)")
        s.add_argument("--seeds", help="seeds for multi-seed tables, e.g. 0-9 or 0,1,2 (default 0-9)")
        s.add_argument("--out", help="output directory (default ./reports)")
        s.add_argument("--format", choices=("csv", "json"), help="write only this format (default both)")
        s.add_argument("--model", help=f"estimator family {sorted(DEFAULTS)}; for table-v a comma list "
                                       f"of rows {list(MODEL_ROWS)}")
        s.add_argument("--hp", action="append", metavar="KEY=VALUE",
                       help="hyperparameter override, repeatable; family.key=value targets a family")
        s.add_argument("--config", help="JSON RunConfig; its keys override flags")
        s.add_argument("--verbose", action="store_true", help="show rank-deficiency warnings")
        if name == "evaluate":
            s.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                           help="grid axis, repeatable (default: k 1..30 for knn, tree counts for forest)")
        if name == "table-vi":
            s.add_argument("--epochs", type=int, help="training epochs (default 1000)")
        if name == "fig-2":
            s.add_argument("--max-reps", type=int, dest="max_reps", help="largest replica count (default 10)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore", RankDeficientWarning)
        try:
            cfg = build_config(args)
            out = Path(cfg.out)
            try:
                out.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"cannot create {out}: {exc}") from None
            COMMANDS[args.command][0](cfg, args, out)
        except ThermoregError as exc:
            print(f"thermoreg: error: {exc}", file=sys.stderr)
            return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
