from __future__ import annotations

import json
from dataclasses import replace

import pytest

from karlsim import harness as H
from karlsim.report import emit, to_json
from karlsim.scenario import ScenarioError, reference_scenario


@pytest.fixture(scope="module")
def ref_report():
    return H.run(reference_scenario())


def test_reference_checks_pass(ref_report):
    assert {c.criterion for c in ref_report.checks} == {1, 2, 3, 4, 5, 10}
    assert ref_report.passed, [c for c in ref_report.checks if not c.passed]


def test_run_twice_identical(ref_report):
    assert to_json(H.run(reference_scenario())) == to_json(ref_report)


def test_bundle_files(tmp_path, ref_report):
    emit(ref_report, tmp_path, "csv")
    for name in ("offsets", "latency", "coverage", "power", "dbw_step", "checks"):
        lines = (tmp_path / f"{name}.csv").read_text().splitlines()
        assert len(lines) > 1


def test_metrics_shape(ref_report):
    m = ref_report.metrics
    assert set(m) == {"topology", "sync", "latency", "coverage", "power", "dbw"}
    assert m["topology"]["violations"] == []
    assert m["dbw"]["script"]["invariant_held"]
    assert m["dbw"]["script"]["final_mode"] == "Stock"


def test_unknown_rig_ref():
    s = replace(reference_scenario(), rig="no_such_rig.json")
    with pytest.raises(ScenarioError, match="no_such_rig.json"):
        H.run(s)


def test_module_error_carries_context():
    s = replace(reference_scenario(), duration=100.0)  # shorter than the 180 s window
    with pytest.raises(H.HarnessError, match="paper-reference.*sync"):
        H.run(s)


def test_seed_changes_only_noise_sections(ref_report):
    other = H.run(replace(reference_scenario(), seed=8))
    changed = H._section_diff(to_json(ref_report), to_json(other))
    assert "sync" in changed and changed <= H.NOISE_SECTIONS


def test_oracle_covers_matches_counts(ref_report):
    assert ref_report.metrics["coverage"]["oracle_mismatches"] == 0


def test_property_checks():
    assert H.check_state_machine().passed
    assert H.check_circle_closure().passed


def test_latency_override_moves_criterion():
    s = replace(reference_scenario(), latency_overrides={"cam_fc": {"driver_delay": 0.5}})
    rep = H.run(s)
    assert not next(c for c in rep.checks if c.criterion == 1).passed
