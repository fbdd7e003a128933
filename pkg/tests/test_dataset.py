import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoreg.dataset import (
    CleanDataset, Schema, SplitSpec, average_rounds, clean, load_csv, load_schema, parse_cell,
    read_clean_csv, schema_from_dict, split, split_indices, write_clean_csv,
)
from thermoreg.errors import ConfigError, DataError


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


SIMPLE = Schema("y", {"y": "target", "a": "feature", "b": "categorical"})


def test_minimal_parse(tmp_path):
    t = load_csv(write(tmp_path, "a,b\n1,2\n3,x\n"))
    assert t.names == ["a", "b"] and t.n_rows == 2
    assert t.is_numeric("a") and not t.is_numeric("b")


def test_header_only(tmp_path):
    t = load_csv(write(tmp_path, "a,b\n"))
    assert t.n_rows == 0 and t.names == ["a", "b"]


@pytest.mark.parametrize("marker", ["", "NaN", "nan", "NA", "na", " NaN "])
def test_missing_markers(marker):
    assert parse_cell(marker) is None


def test_duplicate_header_rejected(tmp_path):
    with pytest.raises(DataError, match="duplicate"):
        load_csv(write(tmp_path, "a,a\n1,2\n"))


def test_row_length_mismatch(tmp_path):
    with pytest.raises(DataError, match="expected 2 cells"):
        load_csv(write(tmp_path, "a,b\n1,2\n3\n"))


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")


def test_clean_drops_empty_column_then_rows(tmp_path):
    t = load_csv(write(tmp_path, "y,a,b,e\n1,2,u,\n2,,v,\n3,4,w,\n"))
    ds = clean(t, Schema("y", {"y": "target", "a": "feature", "b": "categorical", "e": "feature"}))
    assert "e" not in ds.numeric
    assert ds.n_rows == 2
    assert ds.target.tolist() == [1.0, 3.0]
    assert ds.categorical["b"] == ("u", "w")


def test_clean_errors(tmp_path):
    with pytest.raises(DataError, match="target"):
        clean(load_csv(write(tmp_path, "a\n1\n")), SIMPLE)
    with pytest.raises(DataError, match="every row"):
        clean(load_csv(write(tmp_path, "y,a\n1,\n,2\n", "u.csv")), SIMPLE)


def test_clean_idempotent(synthetic_csv):
    schema = load_schema()
    once = clean(load_csv(synthetic_csv, schema), schema)
    twice = clean(once)
    assert once.equals(twice)


def test_average_rounds_hand_mean():
    ds = CleanDataset({"t1": np.array([36.0]), "t2": np.array([36.4]), "t3": np.array([36.8]),
                       "t4": np.array([37.2]), "z": np.array([1.0])}, {}, np.array([37.0]))
    out = average_rounds(ds, {"t": ("t1", "t2", "t3", "t4")})
    assert list(out.numeric) == ["t", "z"]
    assert out.numeric["t"][0] == pytest.approx(36.6, abs=1e-12)


def test_average_rounds_identical_columns():
    col = np.full(5, 36.5)
    ds = CleanDataset({f"s{i}": col.copy() for i in range(4)}, {}, np.zeros(5))
    out = average_rounds(ds, {"s": ("s0", "s1", "s2", "s3")})
    assert np.array_equal(out.numeric["s"], col)


def test_average_rounds_errors():
    ds = CleanDataset({"a": np.ones(2), "b": np.ones(2)}, {"g": ("x", "y")}, np.zeros(2))
    with pytest.raises(ConfigError, match="categorical"):
        average_rounds(ds, {"q": ("a", "g")})
    with pytest.raises(ConfigError, match="in groups"):
        average_rounds(ds, {"p": ("a", "b"), "q": ("b",)})


def test_average_rounds_column_accounting(synthetic_csv):
    schema = load_schema()
    raw = clean(load_csv(synthetic_csv, schema), schema)
    avg = average_rounds(raw)
    shrink = sum(len(m) - 1 for m in raw.round_groups.values())
    assert avg.n_rows == raw.n_rows
    assert len(avg.numeric) == len(raw.numeric) - shrink


def test_split_sizes_and_determinism():
    tr, te = split_indices(10, SplitSpec(0.3, 0))
    assert (len(tr), len(te)) == (7, 3)
    assert not set(tr) & set(te)
    tr2, te2 = split_indices(10, SplitSpec(0.3, 0))
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)


def test_split_default_sizes_for_cleaned_count():
    tr, te = split_indices(959, SplitSpec())
    assert (len(tr), len(te)) == (669, 290)


def test_split_errors():
    with pytest.raises(ConfigError):
        SplitSpec(test_fraction=1.0)
    with pytest.raises(DataError):
        split_indices(1, SplitSpec())


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 400), f=st.floats(0.05, 0.95), seed=st.integers(0, 2**31), strat=st.booleans())
def test_split_partitions(n, f, seed, strat):
    y = np.random.default_rng(seed).normal(size=n)
    tr, te = split_indices(n, SplitSpec(f, seed, strat), y)
    assert len(tr) + len(te) == n
    assert not set(tr.tolist()) & set(te.tolist())
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))


def test_split_dataset(synthetic_ds):
    tr, te = split(synthetic_ds, SplitSpec())
    assert (tr.n_rows, te.n_rows) == (669, 290)


def test_clean_csv_round_trip(tmp_path, synthetic_ds):
    p = tmp_path / "clean.csv"
    write_clean_csv(synthetic_ds, p)
    back = read_clean_csv(p, synthetic_ds.schema())
    assert back.equals(synthetic_ds)


def test_schema_validation():
    with pytest.raises(ConfigError, match="unknown role"):
        schema_from_dict({"target": "y", "columns": {"a": "weird"}})
    with pytest.raises(ConfigError, match="missing key"):
        schema_from_dict({"columns": {}})


def test_default_schema_groups():
    s = load_schema()
    assert s.target == "aveOralM"
    groups = s.round_groups(s.roles)
    assert groups["T_Max_1"] == ("T_Max1", "T_Max2", "T_Max3", "T_Max4")
    assert groups["T_offset"] == ("T_offset1", "T_offset2", "T_offset3", "T_offset4")
    assert len(groups) == 27
