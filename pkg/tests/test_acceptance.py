"""Acceptance criteria, one test each, each reporting a single PASS/FAIL/UNVERIFIED line.

Criteria 1-8 need the real FLIR group-A CSV, found through $THERMOREG_DATA.
Without it they are reported UNVERIFIED and skipped; set THERMOREG_REQUIRE_DATA=1
to turn a missing dataset into failures. Numeric targets are checked on the
mean over seeds 0-9 (override with THERMOREG_SEEDS, e.g. "0-2").
"""
import math
import os
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_matrix

from thermoreg.bench import (
    MODEL_ROWS, RunConfig, Workspace, cnn_label, run_cnn_table, run_feature_table, run_model_table,
    run_repetition_sweep, run_sbs_audit, sweep_curve,
)
from thermoreg.cli import main, parse_seeds
from thermoreg.dataset import SplitSpec, split_indices
from thermoreg.errors import RankDeficientWarning, ThermoregError
from thermoreg.estimators import fit_binning, fit_linear, fit_piecewise, fit_quadratic, fit_weighted
from thermoreg.estimators.svr import dual_objective, rbf_kernel, smo_solve
from thermoreg.evaluation import compute_metrics, kfold_plan
from thermoreg.neuralnet import ConvLayer, Network, NetworkSpec, CNN_GRID, conv1d_forward
from thermoreg.selection import pearson_rank, single_feature_rmse
from thermoreg.transform import (
    PRESET_FEATURE_COUNTS, PRESETS, RANKED_FEATURES, FeatureMatrix, apply_standardizer, build_features,
    encode_onehot, fit_standardizer, with_vocabulary,
)

pytestmark = pytest.mark.filterwarnings("ignore::thermoreg.errors.RankDeficientWarning")

SEEDS = parse_seeds(os.environ.get("THERMOREG_SEEDS", "0-9"))


def record(n, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES[n] = f"criterion {n:>2}: {status}  {detail}"
    print(ACCEPTANCE_LINES[n])
    assert ok, detail


@pytest.fixture(scope="module")
def real_ws():
    try:
        return Workspace(RunConfig(seeds=SEEDS))
    except ThermoregError as exc:
        return exc


def need_data(n, ws):
    if isinstance(ws, Exception):
        ACCEPTANCE_LINES[n] = f"criterion {n:>2}: UNVERIFIED  real dataset unavailable ({ws})"
        print(ACCEPTANCE_LINES[n])
        if os.environ.get("THERMOREG_REQUIRE_DATA") == "1":
            pytest.fail(str(ws))
        pytest.skip("real dataset unavailable")
    return ws


def within(value, target, tol):
    return value is not None and math.isfinite(value) and abs(value - target) <= tol


# ---------------------------------------------------------------- data-dependent criteria

def test_criterion_01_data_pipeline(real_ws):
    ws = need_data(1, real_ws)
    tr, te = split_indices(ws.ds.n_rows, SplitSpec())
    ok = ws.ds.n_rows == 959 and (len(tr), len(te)) == (669, 290)
    record(1, ok, f"cleaned rows {ws.ds.n_rows} (959); split {len(tr)}/{len(te)} (669/290)")


def test_criterion_02_feature_counts(real_ws):
    ws = need_data(2, real_ws)
    got = {name: build_features(ws.ds, with_vocabulary(PRESETS[name], ws.ds)).n_features
           for name in PRESET_FEATURE_COUNTS}
    record(2, got == PRESET_FEATURE_COUNTS, f"counts {got} vs {PRESET_FEATURE_COUNTS}")


def test_criterion_03_table_i(real_ws):
    ws = need_data(3, real_ws)
    tr, _, _ = ws.matrices("a", 42)
    order = [e.feature for e in pearson_rank(tr)]
    scores, errs = [], []
    for seed in SEEDS:
        m, _, _ = ws.matrices("a", seed)
        scores.append({e.feature: e.score for e in pearson_rank(m)}["T_Max_1"])
        fold = kfold_plan(m.n_rows, 5, seed)
        errs.append({e.feature: e.rmse for e in single_feature_rmse(m, fold)}["T_Max_1"])
    s, r = float(np.mean(scores)), float(np.mean(errs))
    ok = order == list(RANKED_FEATURES) and within(s, 0.830394, 0.02) and within(r, 0.2577, 0.03)
    record(3, ok, f"order {'matches' if order == list(RANKED_FEATURES) else order}; "
                  f"T_Max_1 |r| {s:.6f} (0.830394 +/- 0.02), RMSE {r:.4f} (0.2577 +/- 0.03)")


TABLE_IV = {"a": 0.2732, "b": 0.2986, "c": 0.2913, "d": 0.2867, "e": 0.2592, "f": 0.2545}


def test_criterion_04_table_iv(real_ws):
    ws = need_data(4, real_ws)
    t = run_feature_table(ws.cfg, ws)
    means = {rec.params["recipe"]: t.mean(rec.label) for rec in t.records}
    near = {k: within(means[k], v, 0.03) for k, v in TABLE_IV.items()}
    chain = ["f", "e", "d", "c", "b"]
    ordered = all(means[a] < means[b] for a, b in zip(chain, chain[1:]))
    detail = ", ".join(f"{k} {means[k]:.4f}/{v}" for k, v in TABLE_IV.items())
    record(4, all(near.values()) and ordered,
           f"{detail}; ordering f<e<d<c<b {'holds' if ordered else 'fails'}")


TABLE_V = {"1nn": (0.3873, 0.04), "ols": (0.2545, 0.03), "knn": (0.2589, 0.04), "svr": (0.2692, 0.04),
           "binning": (0.2296, 0.03), "piecewise": (0.3273, 0.05), "weighted": (0.3041, 0.05),
           "quadratic": (0.3103, 0.05), "forest": (0.2460, 0.04)}


def test_criterion_05_table_v(real_ws):
    ws = need_data(5, real_ws)
    t = run_model_table(ws.cfg, ws)
    means = {key: t.mean(MODEL_ROWS[key][0]) for key in TABLE_V}
    near = all(within(means[k], v, tol) for k, (v, tol) in TABLE_V.items())
    best = min(means, key=means.get)
    detail = ", ".join(f"{k} {means[k]:.4f}/{v}" for k, (v, _) in TABLE_V.items())
    record(5, near and best == "binning", f"{detail}; best classical {best}")


def test_criterion_06_table_vi(real_ws):
    ws = need_data(6, real_ws)
    strong, weak = CNN_GRID.index((4, 16, 3, 0.01)), CNN_GRID.index((4, 16, 3, 0.001))
    cfg = RunConfig(seeds=SEEDS, cnn_rows=(strong, weak))
    t = run_cnn_table(cfg, ws)
    a, b = t.mean(cnn_label(strong)), t.mean(cnn_label(weak))
    record(6, within(a, 0.2223, 0.05) and a < b,
           f"4xConv1D(16) k=3: l2=0.01 RMSE {a:.4f} (0.2223 +/- 0.05), l2=0.001 RMSE {b:.4f}")


def test_criterion_07_fig_2(real_ws):
    ws = need_data(7, real_ws)
    curve = sweep_curve(run_repetition_sweep(ws.cfg, 10, ws), "knn")
    best = min(curve, key=lambda rv: rv[1])[0]
    record(7, best in (4, 5, 6), f"kNN curve minimum at r={best} (target 4-6); "
                                 + " ".join(f"{r}:{v:.4f}" for r, v in curve))


def test_criterion_08_sbs(real_ws):
    ws = need_data(8, real_ws)
    t = run_sbs_audit(ws.cfg, ws)
    sbs_rmse, f_rmse = t.mean("SBS 11"), t.mean("recipe (f)")
    record(8, within(sbs_rmse, 0.3380, 0.05) and sbs_rmse > f_rmse,
           f"SBS-11 RMSE {sbs_rmse:.4f} (0.3380 +/- 0.05) vs recipe (f) {f_rmse:.4f}")


# ---------------------------------------------------------------- dataset-free criteria

def property_checks() -> dict:
    """Deterministic spot checks of the standing property suites (see the per-module tests)."""
    out = {}
    rng = np.random.default_rng(2024)

    worst = 0.0
    for seed in range(20):
        m = random_matrix(30, 4, seed)
        model = fit_linear(m)
        A = np.hstack([np.ones((30, 1)), m.values])
        beta = np.linalg.solve(A.T @ A, A.T @ m.target)
        worst = max(worst, abs(model.intercept - beta[0]), np.abs(model.weights - beta[1:]).max())
    out["OLS normal-equation oracle <= 1e-8"] = worst <= 1e-8

    X = rng.normal(size=(60, 3))
    y = X @ [1.0, -2.0, 0.5] + 0.3 * np.abs(X[:, 0]) + rng.normal(0, 0.1, 60)
    m = FeatureMatrix(X, ("T_Max_1", "b", "c"), y)
    ols = fit_linear(m).predict(m)
    reductions = [fit_binning(m, n_bins=1), fit_quadratic(m, max_degree=1),
                  fit_weighted(m, weights=np.ones(60)), fit_piecewise(m, breakpoints=0)]
    out["reduction identities <= 1e-9"] = max(np.abs(r.predict(m) - ols).max() for r in reductions) <= 1e-9

    x = np.array([0.0, 0.5, 1.2, 2.0, 2.7, 3.5])
    ys = np.array([0.1, 0.9, 1.1, 0.4, -0.6, -0.9])
    K = rbf_kernel(x[:, None], x[:, None], 0.5)
    try:
        import cvxopt
        cvxopt.solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12)
        n = 6
        P = np.block([[K, -K], [-K, K]]) + 1e-12 * np.eye(2 * n)
        q = 0.1 * np.ones(2 * n) + np.concatenate([-ys, ys])
        G = np.vstack([-np.eye(2 * n), np.eye(2 * n)])
        h = np.concatenate([np.zeros(2 * n), np.ones(2 * n)])
        Aeq = np.concatenate([np.ones(n), -np.ones(n)])[None, :]
        M = cvxopt.matrix
        ref = np.array(cvxopt.solvers.qp(M(P), M(q), M(G), M(h), M(Aeq), M(np.zeros(1)))["x"]).ravel()
        sol = smo_solve(K, ys, 1.0, 0.1, tol=1e-8)
        out["SVR dual vs QP oracle <= 1e-4"] = abs(dual_objective(sol.beta, K, ys, 0.1)
                                                   - dual_objective(ref, K, ys, 0.1)) <= 1e-4
    except ImportError:
        out["SVR dual vs QP oracle <= 1e-4"] = False

    net = Network(NetworkSpec((ConvLayer(8, 3, 0.05), ConvLayer(8, 2, 0.05)), 4, dense_units=6))
    flat = net.init_params(1) + rng.normal(0, 0.05, net.size)
    Xn, yn = rng.normal(size=(5, 4)), rng.normal(size=5)
    _, grad, _ = net.loss_and_grad(flat, Xn, yn)
    fd = np.empty(net.size)
    for i in range(net.size):
        e = np.zeros(net.size)
        e[i] = 1e-5
        fd[i] = (net.loss_and_grad(flat + e, Xn, yn)[0] - net.loss_and_grad(flat - e, Xn, yn)[0]) / 2e-5
    rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
    out["CNN finite-difference gradient rel-err < 1e-4"] = rel.max() < 1e-4

    out["'same' padding preserves length"] = all(
        conv1d_forward(rng.normal(size=(L, 2)), rng.normal(size=(k, 2, 3)), np.zeros(3)).shape == (L, 3)
        for L in range(1, 25) for k in (2, 3))

    cats = rng.choice(["a", "b", "c", "d"], size=200)
    out["one-hot rows sum to 1"] = bool(np.all(encode_onehot(list(cats), "v").values.sum(axis=1) == 1.0))

    Z = rng.normal(5, 3, size=(50, 4))
    zm = FeatureMatrix(Z, tuple("abcd"))
    s = fit_standardizer(zm)
    back = s.inverse(apply_standardizer(s, zm)).values
    out["standardizer round-trip <= 1e-12 (relative)"] = np.abs(back - Z).max() <= 1e-12 * (np.abs(Z).max() + 1)

    ok = True
    for _ in range(200):
        a, b = rng.normal(37, 1, 25), rng.normal(37, 1, 25)
        mt = compute_metrics(a, b)
        ok &= mt.rmse == math.sqrt(mt.mse)
    out["rmse = sqrt(mse)"] = bool(ok)
    return out


def test_criterion_09_property_suites():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        checks = property_checks()
    failed = [k for k, v in checks.items() if not v]
    record(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} property checks"
                          + (f"; failed: {failed}" if failed else ""))


COMMANDS = [
    ("ingest",), ("features",), ("select",), ("fit", "--model", "svr"),
    ("evaluate", "--model", "knn", "--grid", "k=1,5,9"), ("table-iv",),
    ("table-v",), ("table-vi", "--epochs", "2"), ("fig-2", "--max-reps", "3"), ("sbs-audit",),
]


def test_criterion_10_determinism(tmp_path, synthetic_csv):
    differing = []
    for argv in COMMANDS:
        out = tmp_path / argv[0]
        full = [*argv, "--data", str(synthetic_csv), "--out", str(out), "--seeds", "0-1"]
        codes = [main(full)]
        first = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        codes.append(main(full))
        second = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        if codes != [0, 0] or not first or first != second:
            differing.append(argv[0])
    record(10, not differing, f"{len(COMMANDS) - len(differing)}/{len(COMMANDS)} commands byte-identical on rerun "
                              "(synthetic FLIR-layout data, seeds 0-1)"
                              + (f"; differing: {differing}" if differing else ""))
