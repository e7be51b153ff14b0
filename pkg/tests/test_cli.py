from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from karlsim import cli, topology
from karlsim.scenario import reference_scenario

ROOT = Path(__file__).resolve().parents[1]


def test_run_json(tmp_path, capsys):
    sc = tmp_path / "s.json"
    sc.write_text(reference_scenario().dumps())
    assert cli.main(["run", "--scenario", str(sc), "--seed", "3", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["seed"] == 3
    assert "pass" in capsys.readouterr().out


def test_run_several_scenarios_in_parallel(tmp_path):
    paths = []
    for i in range(2):
        s = reference_scenario()
        s.name = f"s{i}"
        p = tmp_path / f"s{i}.json"
        p.write_text(s.dumps())
        paths += ["--scenario", str(p)]
    assert cli.main(["run", *paths, "--out", str(tmp_path / "o"), "--format", "csv"]) == 0
    a = (tmp_path / "o" / "s0" / "offsets.csv").read_bytes()
    assert a == (tmp_path / "o" / "s1" / "offsets.csv").read_bytes()


def test_missing_scenario_is_usage_error(tmp_path):
    assert cli.main(["run", "--scenario", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2


def test_bad_args():
    assert cli.main(["frobnicate"]) == 2
    assert cli.main([]) == 2


def test_coverage_cmd(tmp_path):
    assert cli.main(["coverage", "--grid", "10,1,1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "coverage.csv").read_text().startswith("x,y,camera_n,lidar_n,radar_n")
    assert cli.main(["coverage", "--grid", "10,1", "--out", str(tmp_path)]) == 2
    assert cli.main(["coverage", "--grid", "10,0,1", "--out", str(tmp_path)]) == 2


def test_topology_check(tmp_path):
    p = tmp_path / "t.json"
    topology.save(topology.build_reference_topology(), p)
    assert cli.main(["topology", "check", "--file", str(p)]) == 0
    data = json.loads(p.read_text())
    data["nodes"].append(data["nodes"][0])
    p.write_text(json.dumps(data))
    assert cli.main(["topology", "check", "--file", str(p)]) == 1
    assert cli.main(["topology", "check", "--file", str(tmp_path / "none.json")]) == 2


def test_validate_failing_scenario(capsys):
    code = cli.main(["validate", "--scenario", str(ROOT / "scenarios" / "half_battery.json")])
    assert code == 1
    assert "power budget" in capsys.readouterr().out


def test_console_script_entry(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "karlsim.cli", "validate", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        env={"SIM_LOG": "INFO", "PATH": ""},
    )
    assert r.returncode == 0, r.stdout + r.stderr
    assert "10/10 passed" in r.stdout
    assert "INFO" in r.stderr
    assert (tmp_path / "report.json").exists() and (tmp_path / "dbw_step.csv").exists()
