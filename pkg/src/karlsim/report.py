"""Run reports and their JSON / CSV-bundle serialisation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from karlsim.coverage import COVERAGE_COLUMNS
from karlsim.datapath import EVENT_COLUMNS
from karlsim.dbw import STEP_COLUMNS

# Table name -> (owning metric section, columns). Order fixes file order.
TABLES: dict[str, tuple[str, tuple[str, ...]]] = {
    "offsets": ("sync", ("time_s", "device_id", "offset_s")),
    "latency": ("latency", EVENT_COLUMNS),
    "coverage": ("coverage", COVERAGE_COLUMNS),
    "power": ("power", ("profile", "channel", "stage", "rail", "load_w", "delivered_w", "tripped")),
    "dbw_step": ("dbw", ("experiment",) + STEP_COLUMNS),
}
CHECK_COLUMNS = ("criterion", "name", "passed", "value", "threshold", "detail")
FORMATS = ("json", "csv")


class ReportError(OSError):
    pass


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    value: str = ""
    threshold: str = ""
    detail: str = ""

    def row(self) -> tuple:
        return (self.criterion, self.name, "pass" if self.passed else "FAIL", self.value, self.threshold, self.detail)


@dataclass
class Report:
    name: str = ""
    seed: int = 0
    config: dict = field(default_factory=dict)
    metrics: dict[str, dict] = field(default_factory=dict)
    tables: dict[str, list[tuple]] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self, name: str) -> list[tuple]:
        return self.tables.get(name, [])


def _clean(x: Any) -> Any:
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return round(x, 12)
    if hasattr(x, "item"):  # numpy scalars
        return _clean(x.item())
    return x


def table_csv(name: str, rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLES[name][1] if name in TABLES else CHECK_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def to_json(report: Report) -> str:
    digests = {}
    for name in TABLES:
        text = table_csv(name, report.table(name))
        digests[name] = {
            "rows": len(report.table(name)),
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }
    doc = {
        "name": report.name,
        "seed": report.seed,
        "passed": report.passed,
        "config": report.config,
        "metrics": report.metrics,
        "tables": digests,
        "checks": [dict(zip(CHECK_COLUMNS, c.row())) for c in report.checks],
    }
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit(report: Report, out_dir: str | Path, fmt: str = "json") -> list[Path]:
    """Write ``report.json`` or the CSV bundle into ``out_dir``; returns the paths."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            p = out / "report.json"
            p.write_text(to_json(report), encoding="utf-8")
            return [p]
        written = []
        for name in TABLES:
            p = out / f"{name}.csv"
            p.write_text(table_csv(name, report.table(name)), encoding="utf-8")
            written.append(p)
        p = out / "checks.csv"
        p.write_text(table_csv("checks", [c.row() for c in report.checks]), encoding="utf-8")
        written.append(p)
        return written
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc


def format_checks(checks: list[Check]) -> str:
    """Plain-text table, one line per check."""
    lines = [f"{'#':>2}  {'criterion':<28} {'result':<6} {'value':<40} threshold"]
    for c in checks:
        lines.append(f"{c.criterion:>2}  {c.name:<28} {'pass' if c.passed else 'FAIL':<6} {c.value:<40} {c.threshold}")
    n_fail = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - n_fail}/{len(checks)} passed")
    return "\n".join(lines)
