"""Synthetic data in the FLIR thermography column layout.

The generated file has the default schema's columns, four measurement rounds
per site, a few missing cells, and a target that depends mostly on the
maximum facial temperature. It exists so the CLI and the report pipeline can
run end to end without the real dataset. Numbers produced from it say nothing
about the real benchmark.
"""
from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from .dataset import ROUND_PREFIX, Schema, load_schema

GENDERS = ("Female", "Male")
AGES = ("18-20", "21-25", "26-30", "31-40", "41-50", "51-60", ">60")
ETHNICITIES = ("Asian", "Black or African-American", "Hispanic/Latino", "Multiracial", "White")

# Per-site offset below core temperature and per-site noise (deg C).
_SITE_DEFAULT = (0.9, 0.30)
_SITES = {
    "T_Max_1": (0.45, 0.16), "canthi4Max_1": (0.55, 0.19), "canthiMax_1": (0.55, 0.20),
    "Max1R13_1": (0.60, 0.21), "Max1L13_1": (0.60, 0.21), "aveAllL13_1": (0.90, 0.24),
    "aveAllR13_1": (0.90, 0.25), "T_FH_Max_1": (1.10, 0.35), "T_OR_Max_1": (0.70, 0.30),
}


def synthetic_rows(n_rows: int = 1020, n_incomplete: int = 61, seed: int = 0,
                   schema: Optional[Schema] = None):
    """Return (header, rows) of string cells."""
    schema = schema or load_schema()
    rng = np.random.default_rng(seed)
    names = list(schema.roles)
    core = rng.normal(37.0, 0.35, n_rows)
    t_atm = rng.normal(24.0, 1.2, n_rows)
    humidity = rng.uniform(10.0, 65.0, n_rows)
    distance = rng.uniform(0.5, 0.9, n_rows)
    gender = rng.choice(len(GENDERS), n_rows, p=[0.6, 0.4])
    cols = {
        "SubjectID": [f"S{i:04d}" for i in range(n_rows)],
        "aveOralM": core + rng.normal(0, 0.05, n_rows),
        "aveOralF": core + rng.normal(0, 0.15, n_rows),
        "Gender": [GENDERS[g] for g in gender],
        "Age": [AGES[a] for a in rng.choice(len(AGES), n_rows, p=[.3, .35, .12, .1, .06, .04, .03])],
        "Ethnicity": [ETHNICITIES[e] for e in rng.choice(len(ETHNICITIES), n_rows, p=[.3, .1, .1, .1, .4])],
        "T_atm": t_atm, "Humidity": humidity, "Distance": distance,
        "Cosmetics": rng.integers(0, 2, n_rows).astype(float),
        "Time": [f"{h:02d}:{mn:02d}" for h, mn in zip(rng.integers(8, 18, n_rows), rng.integers(0, 60, n_rows))],
        "Date": ["2019-01-01"] * n_rows,
    }
    groups = schema.round_groups(names)
    for base, members in groups.items():
        if base == "T_offset":
            level = rng.normal(0.65, 0.2, n_rows)
            noise = 0.05
        else:
            drop, noise = _SITES.get(base, _SITE_DEFAULT)
            # Skin reads cooler in cold, dry air and further away; men slightly warmer.
            level = (core - drop + 0.08 * (t_atm - 24.0) - 0.3 * (distance - 0.7)
                     + 0.002 * (humidity - 35.0) + 0.03 * gender + rng.normal(0, noise, n_rows))
            noise = noise / 2
        for mname in members:
            cols[mname] = level + rng.normal(0, noise, n_rows)
    # Knock out one cell in n_incomplete rows.
    numeric = [n for n in names if schema.role(n) == "feature" or schema.role(n).startswith(ROUND_PREFIX)]
    holes = {int(r): numeric[int(c)] for r, c in zip(rng.choice(n_rows, n_incomplete, replace=False),
                                                    rng.integers(0, len(numeric), n_incomplete))}
    rows = []
    for i in range(n_rows):
        row = []
        for n in names:
            v = cols[n][i]
            if holes.get(i) == n:
                row.append("")
            elif isinstance(v, (float, np.floating)):
                row.append(f"{v:.2f}")
            else:
                row.append(str(v))
        rows.append(row)
    return names, rows


def write_synthetic_csv(path, n_rows: int = 1020, n_incomplete: int = 61, seed: int = 0,
                        schema: Optional[Schema] = None) -> None:
    header, rows = synthetic_rows(n_rows, n_incomplete, seed, schema)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
