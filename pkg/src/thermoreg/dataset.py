"""CSV ingestion, cleaning, round averaging and train/test splitting.

Column roles come from a JSON schema file because the released CSV headers
(``T_Max1`` ... ``T_Max4``) differ from the feature names used downstream
(``T_Max_1``). A schema maps every header to one of::

    feature | categorical | target | ignore | round-group:<base>

Columns not listed take ``default_role``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DataError

Cell = Union[float, str, None]

MISSING_MARKERS = frozenset({"", "nan", "na"})
ROLES = ("feature", "categorical", "target", "ignore")
ROUND_PREFIX = "round-group:"


# --------------------------------------------------------------------------
# Schema
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    target: str
    roles: dict
    default_role: str = "ignore"
    header_row: int = 0

    def __post_init__(self):
        for name, role in list(self.roles.items()) + [("<default>", self.default_role)]:
            if role not in ROLES and not (role.startswith(ROUND_PREFIX) and len(role) > len(ROUND_PREFIX)):
                raise ConfigError(f"column {name!r}: unknown role {role!r}")
        if self.roles.get(self.target, "target") != "target":
            raise ConfigError(f"target {self.target!r} is mapped to role {self.roles[self.target]!r}")

    def role(self, name: str) -> str:
        if name == self.target:
            return "target"
        return self.roles.get(name, self.default_role)

    def round_groups(self, present) -> dict:
        """base name -> member columns that are present, in schema order."""
        present = set(present)
        groups: dict = {}
        for name, role in self.roles.items():
            if role.startswith(ROUND_PREFIX) and name in present:
                groups.setdefault(role[len(ROUND_PREFIX):], []).append(name)
        return {base: tuple(members) for base, members in groups.items()}

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "target": self.target,
            "default_role": self.default_role,
            "header_row": self.header_row,
            "columns": dict(self.roles),
        }

    def manifest(self) -> dict:
        """Compact summary recorded in report provenance."""
        counts: dict = {}
        for role in self.roles.values():
            key = "round-group" if role.startswith(ROUND_PREFIX) else role
            counts[key] = counts.get(key, 0) + 1
        return {"target": self.target, "n_columns": len(self.roles), "role_counts": dict(sorted(counts.items()))}


def schema_from_dict(d: dict) -> Schema:
    try:
        return Schema(
            target=d["target"],
            roles=dict(d.get("columns", {})),
            default_role=d.get("default_role", "ignore"),
            header_row=int(d.get("header_row", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"schema is missing key {exc}") from None


def load_schema(path=None) -> Schema:
    """Load a schema file; ``None`` gives the packaged default for the PhysioNet release."""
    try:
        if path is None:
            text = resources.files("thermoreg.data").joinpath("default_schema.json").read_text()
        else:
            text = Path(path).read_text(encoding="utf-8")
        return schema_from_dict(json.loads(text))
    except OSError as exc:
        raise ConfigError(f"cannot read schema: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"schema is not valid JSON: {exc}") from None


# --------------------------------------------------------------------------
# Raw table
# --------------------------------------------------------------------------

def parse_cell(text: str) -> Cell:
    s = text.strip()
    if s.lower() in MISSING_MARKERS:
        return None
    try:
        return float(s)
    except ValueError:
        return s


@dataclass
class RawTable:
    names: list
    columns: list  # one list of cells per column
    schema: Optional[Schema] = None

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            dup = sorted({n for n in self.names if self.names.count(n) > 1})
            raise DataError(f"duplicate column names: {dup}")
        if len(self.names) != len(self.columns):
            raise DataError("names and columns differ in length")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column(self, name: str) -> list:
        try:
            return self.columns[self.names.index(name)]
        except ValueError:
            raise DataError(f"no column named {name!r}") from None

    def is_numeric(self, name: str) -> bool:
        """True when every non-missing cell parsed as a number."""
        return all(c is None or isinstance(c, float) for c in self.column(name))

    def is_empty(self, name: str) -> bool:
        return all(c is None for c in self.column(name))


def load_csv(path, schema: Optional[Schema] = None) -> RawTable:
    header_row = schema.header_row if schema is not None else 0
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(rows) <= header_row:
        raise DataError(f"{path}: no header row")
    names = [h.strip() for h in rows[header_row]]
    body = [r for r in rows[header_row + 1:] if any(cell.strip() for cell in r)]
    columns = [[] for _ in names]
    for lineno, row in enumerate(body, start=header_row + 2):
        if len(row) != len(names):
            raise DataError(f"{path}:{lineno}: expected {len(names)} cells, got {len(row)}")
        for col, cell in zip(columns, row):
            col.append(parse_cell(cell))
    return RawTable(names, columns, schema)


# --------------------------------------------------------------------------
# Clean dataset
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CleanDataset:
    """Missing-free dataset. Numeric columns are float arrays, categoricals tuples of str."""

    numeric: dict
    categorical: dict
    target: np.ndarray
    target_name: str = "aveOralM"
    round_groups: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def feature_columns(self) -> list:
        return list(self.numeric)

    @property
    def categorical_columns(self) -> list:
        return list(self.categorical)

    def take(self, idx) -> "CleanDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return CleanDataset(
            numeric={k: v[idx] for k, v in self.numeric.items()},
            categorical={k: tuple(v[i] for i in idx) for k, v in self.categorical.items()},
            target=self.target[idx],
            target_name=self.target_name,
            round_groups=dict(self.round_groups),
        )

    def schema(self) -> Schema:
        roles = {}
        in_group = {m: base for base, members in self.round_groups.items() for m in members}
        for name in self.numeric:
            roles[name] = ROUND_PREFIX + in_group[name] if name in in_group else "feature"
        for name in self.categorical:
            roles[name] = "categorical"
        roles[self.target_name] = "target"
        return Schema(target=self.target_name, roles=roles)

    def to_raw(self) -> RawTable:
        names = list(self.numeric) + list(self.categorical) + [self.target_name]
        cols = [[float(x) for x in v] for v in self.numeric.values()]
        cols += [list(v) for v in self.categorical.values()]
        cols.append([float(x) for x in self.target])
        return RawTable(names, cols, self.schema())

    def equals(self, other: "CleanDataset") -> bool:
        return (
            list(self.numeric) == list(other.numeric)
            and all(np.array_equal(self.numeric[k], other.numeric[k]) for k in self.numeric)
            and self.categorical == other.categorical
            and np.array_equal(self.target, other.target)
            and self.target_name == other.target_name
            and self.round_groups == other.round_groups
        )


def clean(table: Union[RawTable, CleanDataset], schema: Optional[Schema] = None) -> CleanDataset:
    """Drop ignored and all-empty columns, then every row with a missing cell."""
    if isinstance(table, CleanDataset):
        table = table.to_raw()
    schema = schema or table.schema
    if schema is None:
        raise ConfigError("clean() needs a schema to identify the target column")
    if schema.target not in table.names:
        raise DataError(f"target column {schema.target!r} not found")

    kept = [n for n in table.names if schema.role(n) != "ignore" and not table.is_empty(n)]
    if schema.target not in kept:
        raise DataError(f"target column {schema.target!r} is empty")

    cols = {n: table.column(n) for n in kept}
    keep_rows = [i for i in range(table.n_rows) if all(cols[n][i] is not None for n in kept)]
    if not keep_rows:
        raise DataError("every row has a missing value")

    numeric, categorical = {}, {}
    for name in kept:
        role = schema.role(name)
        values = [cols[name][i] for i in keep_rows]
        if role == "categorical":
            categorical[name] = tuple(v if isinstance(v, str) else _format_number(v) for v in values)
            continue
        bad = [v for v in values if not isinstance(v, float)]
        if bad:
            raise DataError(f"column {name!r} ({role}) has non-numeric value {bad[0]!r}")
        if role != "target":
            numeric[name] = np.array(values, dtype=np.float64)
    target = np.array([cols[schema.target][i] for i in keep_rows], dtype=np.float64)
    if not np.all(np.isfinite(target)):
        raise DataError("target contains non-finite values")
    return CleanDataset(
        numeric=numeric,
        categorical=categorical,
        target=target,
        target_name=schema.target,
        round_groups=schema.round_groups(numeric),
    )


def _format_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def average_rounds(ds: CleanDataset, round_groups: Optional[dict] = None) -> CleanDataset:
    """Replace each group of round columns by their per-row mean, named by the group base.

    The averaged column takes the position of the group's first member.
    """
    groups = ds.round_groups if round_groups is None else round_groups
    seen: dict = {}
    for base, members in groups.items():
        if not members:
            raise ConfigError(f"round group {base!r} is empty")
        for m in members:
            if m in ds.categorical:
                raise ConfigError(f"round group {base!r} references categorical column {m!r}")
            if m not in ds.numeric:
                raise DataError(f"round group {base!r} references unknown column {m!r}")
            if m in seen:
                raise ConfigError(f"column {m!r} is in groups {seen[m]!r} and {base!r}")
            seen[m] = base

    first_member = {members[0]: base for base, members in groups.items()}
    numeric = {}
    for name, values in ds.numeric.items():
        if name in first_member:
            base = first_member[name]
            stacked = np.stack([ds.numeric[m] for m in groups[base]])
            numeric[base] = stacked.mean(axis=0)
        elif name not in seen:
            if name in numeric:
                raise DataError(f"averaged column {name!r} collides with an existing column")
            numeric[name] = values
    remaining = {b: m for b, m in ds.round_groups.items() if b not in groups}
    return CleanDataset(numeric, dict(ds.categorical), ds.target, ds.target_name, remaining)


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 290 / 959
    seed: int = 42
    stratify: bool = False

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


def split_indices(n_rows: int, spec: SplitSpec, target: Optional[np.ndarray] = None):
    if n_rows < 2:
        raise DataError(f"cannot split {n_rows} rows")
    n_train = int(math.floor(n_rows * (1.0 - spec.test_fraction) + 0.5))
    n_train = min(max(n_train, 1), n_rows - 1)
    rng = np.random.default_rng(spec.seed)
    if spec.stratify and target is not None:
        # Allocate test rows proportionally within target-quantile strata.
        order = np.argsort(target, kind="stable")
        strata = np.array_split(order, min(5, n_rows))
        n_test = n_rows - n_train
        test = []
        quotas = _largest_remainder([len(s) for s in strata], n_test)
        for s, q in zip(strata, quotas):
            test.extend(rng.permutation(s)[:q].tolist())
        test = np.sort(np.array(test, dtype=np.intp))
        train = np.setdiff1d(np.arange(n_rows), test)
        return train, test
    perm = rng.permutation(n_rows)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _largest_remainder(sizes, total):
    n = sum(sizes)
    exact = [s * total / n for s in sizes]
    quotas = [int(math.floor(e)) for e in exact]
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in order[: total - sum(quotas)]:
        quotas[i] += 1
    return quotas


def split(ds: CleanDataset, spec: SplitSpec):
    train_idx, test_idx = split_indices(ds.n_rows, spec, ds.target)
    return ds.take(train_idx), ds.take(test_idx)


# --------------------------------------------------------------------------
# CSV round trip
# --------------------------------------------------------------------------

def write_clean_csv(ds: CleanDataset, path) -> None:
    raw = ds.to_raw()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(raw.names)
        for i in range(raw.n_rows):
            writer.writerow([repr(c[i]) if isinstance(c[i], float) else c[i] for c in raw.columns])


def read_clean_csv(path, schema: Schema) -> CleanDataset:
    return clean(load_csv(path, schema), schema)


def load_dataset(path, schema: Optional[Schema] = None, average: bool = True) -> CleanDataset:
    """load_csv -> clean -> average_rounds, the standard ingestion chain."""
    schema = schema or load_schema()
    ds = clean(load_csv(path, schema), schema)
    return average_rounds(ds) if average else ds
