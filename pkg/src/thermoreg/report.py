"""Benchmark report tables and their CSV/JSON emitters.

A table stores one record per (row label, seed). Summary rows aggregate the
records of a label into mean and population std across seeds. Reports carry a
provenance block and no timestamps, so identical configs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError
from .evaluation import Metrics

REPORT_FORMAT = "thermoreg-report"
METRICS = ("mae", "mse", "rmse")


@dataclass(frozen=True)
class RunRecord:
    label: str
    seed: int
    mae: float
    mse: float
    rmse: float
    n_features: Optional[int] = None
    status: str = "ok"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_metrics(cls, label, seed, mt: Metrics, n_features=None, params=None) -> "RunRecord":
        return cls(label, int(seed), mt.mae, mt.mse, mt.rmse, n_features, "ok", dict(params or {}))

    @classmethod
    def failed(cls, label, seed, reason: str, n_features=None, params=None) -> "RunRecord":
        nan = float("nan")
        return cls(label, int(seed), nan, nan, nan, n_features, f"failed: {reason}", dict(params or {}))

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class ReportTable:
    title: str
    records: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    manifests: dict = field(default_factory=dict)  # row label -> recipe manifest

    def add(self, rec: RunRecord, manifest: Optional[dict] = None) -> None:
        self.records.append(rec)
        if manifest is not None:
            self.manifests.setdefault(rec.label, manifest)

    @property
    def labels(self) -> list:
        return list(dict.fromkeys(r.label for r in self.records))

    def records_for(self, label: str) -> list:
        return [r for r in self.records if r.label == label]

    def summary(self) -> list:
        rows = []
        for label in self.labels:
            recs = self.records_for(label)
            good = [r for r in recs if r.ok]
            row = {"label": label, "n_features": recs[0].n_features, "n_seeds": len(good)}
            for k in METRICS:
                vals = np.array([getattr(r, k) for r in good])
                row[f"{k}_mean"] = float(vals.mean()) if len(vals) else float("nan")
                row[f"{k}_std"] = float(vals.std()) if len(vals) else float("nan")
            bad = [r for r in recs if not r.ok]
            row["status"] = "ok" if not bad else f"{len(bad)} failed: {bad[0].status[8:]}"
            rows.append(row)
        return rows

    def mean(self, label: str, metric: str = "rmse") -> float:
        for row in self.summary():
            if row["label"] == label:
                return row[f"{metric}_mean"]
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "title": self.title,
            "provenance": self.provenance,
            "manifests": self.manifests,
            "summary": [_json_row(r) for r in self.summary()],
            "records": [_json_row(asdict(r)) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportTable":
        if d.get("format") != REPORT_FORMAT:
            raise ConfigError("not a thermoreg report")
        recs = [RunRecord(**{k: _float_back(v) if k in METRICS else v for k, v in r.items()})
                for r in d["records"]]
        return cls(d["title"], recs, d["provenance"], d["manifests"])


def _json_row(row: dict) -> dict:
    # JSON has no NaN; failed cells become null.
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in row.items()}


def _float_back(v):
    return float("nan") if v is None else float(v)


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(config: dict, seeds, schema_manifest=None, **extra) -> dict:
    out = {"config": config, "config_sha256": config_hash(config), "seeds": list(seeds),
           "software": {"package": "thermoreg", "version": __version__, "numpy": np.__version__}}
    if schema_manifest is not None:
        out["schema"] = schema_manifest
    out.update(extra)
    return out


SUMMARY_COLUMNS = ("label", "n_features", "n_seeds", "mae_mean", "mae_std", "mse_mean", "mse_std",
                   "rmse_mean", "rmse_std", "status")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(t: ReportTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS + ("features",))
        for row in t.summary():
            feats = t.manifests.get(row["label"], {}).get("features", [])
            w.writerow([_cell(row[c]) for c in SUMMARY_COLUMNS] + [";".join(feats)])


def write_json(t: ReportTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(t.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def emit_report(t: ReportTable, stem, formats=("csv", "json")) -> list:
    """Write ``<stem>.csv`` and/or ``<stem>.json``; returns the paths written."""
    stem = Path(stem)
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {stem.parent}: {exc}") from None
    written = []
    for fmt in formats:
        path = stem.with_suffix(f".{fmt}")
        try:
            (write_csv if fmt == "csv" else write_json)(t, path)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from None
        written.append(path)
    return written


def load_report(path) -> ReportTable:
    with open(path, encoding="utf-8") as fh:
        return ReportTable.from_dict(json.load(fh))
