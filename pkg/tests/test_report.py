from __future__ import annotations

import json

import pytest

from karlsim.report import TABLES, Check, Report, ReportError, emit, format_checks, to_json


def test_empty_report_csv(tmp_path):
    paths = emit(Report(), tmp_path, "csv")
    assert sorted(p.name for p in paths) == sorted([f"{n}.csv" for n in TABLES] + ["checks.csv"])
    for name, (_, cols) in TABLES.items():
        assert (tmp_path / f"{name}.csv").read_text() == ",".join(cols) + "\n"


def test_empty_report_json(tmp_path):
    (p,) = emit(Report(), tmp_path, "json")
    doc = json.loads(p.read_text())
    assert doc["passed"] is True
    assert all(v["rows"] == 0 for v in doc["tables"].values())


def test_emit_twice_identical(tmp_path):
    r = Report(name="x", seed=1, metrics={"power": {"b": 1.0, "a": float("inf")}}, checks=[Check(3, "p", False)])
    a = emit(r, tmp_path / "a", "json")[0].read_bytes()
    b = emit(r, tmp_path / "b", "json")[0].read_bytes()
    assert a == b
    assert json.loads(a)["metrics"]["power"]["a"] == "inf"


def test_key_order_stable():
    r1 = Report(metrics={"a": {"x": 1, "y": 2}})
    r2 = Report(metrics={"a": {"y": 2, "x": 1}})
    assert to_json(r1) == to_json(r2)


def test_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportError):
        emit(Report(), blocker / "sub", "json")


def test_bad_format(tmp_path):
    with pytest.raises(ValueError):
        emit(Report(), tmp_path, "xml")


def test_format_checks():
    text = format_checks([Check(1, "a", True), Check(2, "b", False)])
    assert "FAIL" in text and text.endswith("1/2 passed")
