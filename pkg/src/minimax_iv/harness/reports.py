"""Rate-sweep reports and their CSV / JSON forms."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

CSV_COLUMNS = ("estimator", "n", "reps", "l2_mean", "l2_median", "proj_mse_mean", "violations")


@dataclass
class RateRow:
    """Summary of one (estimator, n) cell."""

    estimator: str
    n: int
    reps: int
    l2_mean: float
    l2_median: float
    l2_q10: float
    l2_q90: float
    proj_mse_mean: float
    proj_mse_median: float
    violations: int = 0
    failures: int = 0
    h0_in_set: float | None = None

    @property
    def complete(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RateReport:
    """Rows per (estimator, n), fitted slopes and provenance.

    ``slopes[estimator]`` maps a metric name to ``[slope, stderr]`` or ``None``
    when the fit is undefined (a zero or missing cell mean).
    """

    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    seeds: list = field(default_factory=list)
    replications: list = field(default_factory=list)

    def row(self, estimator: str, n: int) -> RateRow:
        for r in self.rows:
            if r.estimator == estimator and r.n == n:
                return r
        raise KeyError((estimator, n))

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
            "slopes": self.slopes,
            "seeds": self.seeds,
            "replications": self.replications,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        return cls([RateRow(**r) for r in d.get("rows", [])], d.get("slopes", {}), d.get("config", {}),
                   d.get("config_hash", ""), d.get("seeds", []), d.get("replications", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RateReport":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, RateReport):
            return NotImplemented
        return self.to_json() == other.to_json()


def csv_rows(report: RateReport) -> list[dict]:
    return [{c: getattr(r, c) for c in CSV_COLUMNS} for r in report.rows]


def write_csv(report: RateReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in csv_rows(report):
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_csv(path) -> list[dict]:
    """Rows of a report CSV with numeric columns parsed."""
    out = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {r.fieldnames}")
        for row in r:
            out.append({
                "estimator": row["estimator"],
                "n": int(row["n"]),
                "reps": int(row["reps"]),
                "l2_mean": float(row["l2_mean"]),
                "l2_median": float(row["l2_median"]),
                "proj_mse_mean": float(row["proj_mse_mean"]),
                "violations": int(row["violations"]),
            })
    return out


def write_json(report: RateReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report.to_json())


def load_report(path) -> RateReport:
    with open(path) as fh:
        return RateReport.from_json(fh.read())


def emit_reports(report: RateReport, out_dir, formats=("csv", "json"), stem: str = "rates") -> list[str]:
    """Write the report in each format; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for fmt in formats:
        path = os.path.join(out_dir, f"{stem}.{fmt}")
        if fmt == "csv":
            write_csv(report, path)
        elif fmt == "json":
            write_json(report, path)
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        paths.append(path)
    return paths
