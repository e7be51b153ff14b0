from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karlsim import scenario as SC
from karlsim.topology import UPLINK


def test_reference_loads():
    s = SC.reference_scenario()
    assert s.name == "paper-reference" and s.seed == 7 and s.duration == 240


def test_round_trip():
    s = SC.reference_scenario()
    assert SC.Scenario.loads(s.dumps()) == s


@settings(max_examples=40)
@given(
    st.text(min_size=1, max_size=20),
    st.integers(0, 2**31),
    st.floats(1, 1e4),
    st.sampled_from(["idle", "full-load"]),
)
def test_round_trip_property(name, seed, duration, profile):
    s = SC.Scenario(name=name, seed=seed, duration=duration, power_profile=profile)
    assert SC.Scenario.loads(s.dumps()) == s


def test_schema_rejects_unknown_key():
    with pytest.raises(Exception):
        SC.Scenario.from_dict({"name": "x", "bogus": 1})


def test_bad_duration():
    with pytest.raises(SC.ScenarioError):
        SC.Scenario(name="x", duration=0)


def test_load_invalid_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"name": "x", "duration": -1}))
    with pytest.raises(SC.ScenarioError):
        SC.load_scenario(p)


def test_unknown_rig_ref_named():
    s = SC.Scenario(name="x", rig="missing_rig.json")
    with pytest.raises(SC.ScenarioError, match="missing_rig.json"):
        SC.resolve_rig(s)
    with pytest.raises(SC.ScenarioError, match="builtin:other"):
        SC.resolve_rig(SC.Scenario(name="x", rig="builtin:other"))


def test_relative_refs(tmp_path, ref_rig):
    from karlsim import sensors, topology

    topology.save(topology.build_reference_topology(), tmp_path / "t.json")
    sensors.save_rig(ref_rig, tmp_path / "r.json")
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"name": "x", "topology": "t.json", "rig": "r.json"}))
    s, base = SC.load_scenario(p)
    assert SC.resolve_topology(s, base) == topology.build_reference_topology()
    assert len(SC.resolve_rig(s, base)) == len(ref_rig)


def test_link_override():
    s = SC.Scenario(name="x", link_overrides=[{"link": UPLINK, "delay_asymmetry": 1e-5}])
    t = SC.resolve_topology(s)
    assert next(l for l in t.links if l.name == UPLINK).delay_asymmetry == 1e-5
    with pytest.raises(SC.ScenarioError):
        SC.resolve_topology(SC.Scenario(name="x", link_overrides=[{"link": "a--b"}]))


def test_latency_override():
    s = SC.Scenario(name="x", latency_overrides={"cam_fc": {"driver_delay": 0.2}})
    model = SC.resolve_latency(s, SC.resolve_rig(s))
    assert model["cam_fc"].driver_delay == 0.2
    with pytest.raises(SC.ScenarioError):
        SC.resolve_latency(SC.Scenario(name="x", latency_overrides={"nope": {}}), SC.resolve_rig(s))


def test_battery_and_sync():
    s = SC.Scenario(name="x", battery={"capacity": 2500.0}, sync={"kp": 0.5})
    assert SC.resolve_battery(s).capacity == 2500.0
    assert SC.resolve_sync(s).kp == 0.5
