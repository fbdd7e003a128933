import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from thermoreg.dataset import split, SplitSpec
from thermoreg.errors import ConfigError, DataError
from thermoreg.estimators import fit_linear
from thermoreg.transform import (
    AGE_ORDINAL, PRESET_FEATURE_COUNTS, PRESETS, FeatureMatrix, FeatureRecipe, add_polynomial,
    apply_standardizer, build_features, encode_onehot, encode_ordinal, fit_recipe, fit_standardizer,
    replicate_feature, resolve_recipe, with_vocabulary,
)

from conftest import random_matrix


def col(*v, name="x"):
    return FeatureMatrix(np.array(v, dtype=float)[:, None], (name,))


def test_standardizer_hand_values():
    s = fit_standardizer(col(1, 2, 3))
    assert s.means[0] == 2.0
    assert s.stds[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    out = apply_standardizer(s, col(4))
    assert out.values[0, 0] == pytest.approx(2 / math.sqrt(2 / 3), rel=1e-12)
    assert out.values[0, 0] == pytest.approx(2.449, abs=1e-3)


def test_standardizer_fixed_point_and_mean_row():
    m = random_matrix(50, 4)
    s = fit_standardizer(m)
    z = apply_standardizer(s, m)
    assert np.abs(z.values.mean(axis=0)).max() < 1e-9
    assert np.abs(z.values.std(axis=0) - 1).max() < 1e-9
    s2 = fit_standardizer(z)
    assert np.allclose(s2.means, 0, atol=1e-12) and np.allclose(s2.stds, 1, atol=1e-12)
    mean_row = FeatureMatrix(s.means[None, :], m.names)
    assert np.array_equal(apply_standardizer(s, mean_row).values, np.zeros((1, 4)))


def test_standardizer_errors():
    with pytest.raises(DataError, match="'c' has zero variance"):
        fit_standardizer(col(5, 5, 5, name="c"))
    s = fit_standardizer(col(1, 2, 3))
    with pytest.raises(DataError, match="not fitted"):
        apply_standardizer(s, col(1, name="other"))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardizer_round_trip(x):
    m = FeatureMatrix(x, tuple(f"c{i}" for i in range(x.shape[1])))
    if np.any(x.std(axis=0) < 1e-6 * (1 + np.abs(x).max())):
        return
    s = fit_standardizer(m)
    back = s.inverse(apply_standardizer(s, m)).values
    scale = np.abs(x).max() + 1.0
    assert np.abs(back - x).max() <= 1e-12 * scale


def test_ordinal_map():
    assert AGE_ORDINAL == {"18-20": 0, "21-25": 1, "26-30": 2, "31-40": 3, "41-50": 4,
                           "51-60": 5, ">60": 6, ">70": 7}
    assert encode_ordinal(["18-20", ">70"]).tolist() == [0, 7]
    assert encode_ordinal(["26-30"] * 3).tolist() == [2, 2, 2]
    with pytest.raises(DataError, match="'17-18' at row 1"):
        encode_ordinal(["18-20", "17-18"])


def test_onehot_examples():
    m = encode_onehot(["Female", "Male", "Female"], "Gender")
    assert m.names == ("Gender_Female", "Gender_Male")
    assert m.values[:, 0].tolist() == [1, 0, 1] and m.values[:, 1].tolist() == [0, 1, 0]
    single = encode_onehot(["a"] * 4, "v")
    assert single.names == ("v_a",) and single.values.sum() == 4
    eth = encode_onehot(["b", "a", "c", "a", "b"], "Ethnicity")
    assert eth.n_features == 3 and np.all(eth.values.sum(axis=1) == 1)
    with pytest.raises(DataError):
        encode_onehot([], "v")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["w", "x", "y", "z", "x y", "Q"]), min_size=1, max_size=50))
def test_onehot_rows_sum_to_one(values):
    m = encode_onehot(values, "v")
    assert np.all(m.values.sum(axis=1) == 1.0)
    assert list(m.names) == sorted(m.names)


def test_polynomial_examples():
    m = FeatureMatrix(np.array([[0.0, 0.0], [2.0, 3.0]]), ("x", "y"))
    out = add_polynomial(m, ("x", "y"))
    assert out.names[2:] == ("x^2", "y^2", "x*y")
    assert out.values[0, 2:].tolist() == [0, 0, 0]
    assert out.values[1, 2:].tolist() == [4, 9, 6]
    with pytest.raises(DataError):
        add_polynomial(m, ("x", "nope"))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_polynomial_commutes_with_row_permutation(seed):
    m = random_matrix(15, 3, seed)
    perm = np.random.default_rng(seed).permutation(15)
    a = add_polynomial(m, ("x0", "x2")).take(perm)
    b = add_polynomial(m.take(perm), ("x0", "x2"))
    assert np.array_equal(a.values, b.values)


def test_replicate():
    m = random_matrix(10, 2)
    assert replicate_feature(m, "x0", 0) is m
    r = replicate_feature(m, "x0", 3)
    assert r.names[-3:] == ("x0_rep1", "x0_rep2", "x0_rep3")
    assert all(np.array_equal(r.column(n), m.column("x0")) for n in r.names[-3:])
    with pytest.raises(DataError):
        replicate_feature(m, "x9", 1)


def test_replication_scales_squared_distance():
    # Two points differing by (dx, dy): replicating x adds dx^2 per copy.
    m = FeatureMatrix(np.array([[0.0, 0.0], [2.0, 1.0]]), ("x", "y"))
    r = replicate_feature(m, "x", 4)
    d = ((r.values[0] - r.values[1]) ** 2).sum()
    assert d == (1 + 4) * 2.0 ** 2 + 1.0 ** 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_replication_leaves_ols_predictions_unchanged(seed, copies):
    m = random_matrix(30, 4, seed)
    r = replicate_feature(m, "x1", copies)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p0 = fit_linear(m).predict(m)
        p1 = fit_linear(r).predict(r)
    assert np.abs(p0 - p1).max() <= 1e-9


def test_recipe_counts(synthetic_ds):
    tr, _ = split(synthetic_ds, SplitSpec())
    for name, count in PRESET_FEATURE_COUNTS.items():
        m = build_features(tr, with_vocabulary(PRESETS[name], synthetic_ds))
        assert m.n_features == count, name


def test_recipe_f_composition(synthetic_ds):
    f = build_features(synthetic_ds, "f")
    e = build_features(synthetic_ds, "e")
    assert f.names[:15] == e.names
    assert f.names[15:] == tuple(f"T_Max_1_rep{k}" for k in range(1, 6))
    assert "Distance" not in f.names and "Distance" in build_features(synthetic_ds, "b").names
    assert {"T_Max_1^2", "canthi4Max_1^2", "T_Max_1*canthi4Max_1", "Gender_Female", "Gender_Male"} <= set(f.names)


def test_recipe_standardization(synthetic_ds):
    f = build_features(synthetic_ds, "f")
    numeric = [n for n in f.names if not n.startswith("Gender_")]
    sub = f.select(numeric).values
    assert np.abs(sub.mean(axis=0)).max() < 1e-9
    assert np.abs(sub.std(axis=0) - 1).max() < 1e-9
    g = f.select(["Gender_Female", "Gender_Male"]).values
    assert set(np.unique(g)) <= {0.0, 1.0}


def test_recipe_fit_on_train_replays_on_test(synthetic_ds):
    tr, te = split(synthetic_ds, SplitSpec())
    fitted = fit_recipe(with_vocabulary(PRESETS["f"], synthetic_ds), tr)
    a, b = fitted.transform(tr), fitted.transform(te)
    assert a.names == b.names
    # test columns are scaled with train statistics, so their moments drift
    assert np.abs(b.column("T_Max_1").mean()) > 0


def test_recipe_json_round_trip(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps(PRESETS["f"].to_dict()))
    r = resolve_recipe(str(p))
    assert r == PRESETS["f"]
    with pytest.raises(ConfigError):
        resolve_recipe("zzz")
    with pytest.raises(ConfigError, match="unknown step"):
        FeatureRecipe("bad", ({"op": "explode"},))


def test_recipe_missing_column(synthetic_ds):
    r = FeatureRecipe("x", ({"op": "select", "columns": ["NoSuchColumn"]},))
    with pytest.raises(DataError, match="NoSuchColumn"):
        build_features(synthetic_ds, r)


def test_full38_manifest(synthetic_ds):
    m = build_features(synthetic_ds, with_vocabulary(PRESETS["full38"], synthetic_ds))
    assert "Age" in m.names and any(n.startswith("Ethnicity_") for n in m.names)
    assert m.n_features == 38
