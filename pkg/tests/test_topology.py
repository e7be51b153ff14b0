from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karlsim import topology as T


def test_reference_is_valid(ref_topo):
    assert T.validate_topology(ref_topo) == []
    assert ref_topo.grandmaster().id == "ins"


def test_thirteen_sensor_nodes(ref_topo):
    ids = [n.id for n in ref_topo.nodes if n.kind == T.NodeKind.SENSOR]
    assert len(ids) == 18  # 8 cameras, 5 lidars, 5 radars
    assert len([i for i in ids if i.startswith("lidar")]) + len(T.CAMERAS) == 13
    for cam in T.CAMERAS:
        assert cam not in ref_topo.linked_ids()


def test_rotating_lidar_path_two_switches(ref_topo):
    p = T.path(ref_topo, "lidar_fl", "hpc")
    assert T.path_switches(ref_topo, "lidar_fl", "hpc") == ["roof_switch", "core_switch"]
    assert [l.name for l in p] == ["lidar_fl--roof_switch", T.UPLINK, "hpc--core_switch"]


def test_rear_lidar_and_radar_paths(ref_topo):
    assert T.path_switches(ref_topo, "lidar_rl", "hpc") == ["roof_switch", "core_switch"]
    assert T.path_switches(ref_topo, "radar_fc", "hpc") == ["ae_switch", "core_switch"]


def test_path_identity(ref_topo):
    assert T.path(ref_topo, "hpc", "hpc") == []


def test_path_unknown_id(ref_topo):
    with pytest.raises(T.TopologyError):
        T.path(ref_topo, "hpc", "nope")


def test_hosted_camera_routes_via_orin(ref_topo):
    names = [l.name for l in T.path(ref_topo, "cam_fc", "hpc")]
    assert names[0] == "orin_1--roof_switch"


def test_duplicate_id_violation(ref_topo):
    t = T.Topology(ref_topo.nodes + (T.DeviceNode("hpc", T.NodeKind.HPC),), ref_topo.links)
    dup = [v for v in T.validate_topology(t) if v.rule == "duplicate node id"]
    assert len(dup) == 1 and dup[0].subject == "hpc"


def test_second_grandmaster(ref_topo):
    nodes = tuple(replace(n, sync_class=T.SyncClass.GRANDMASTER) if n.id == "v2x" else n for n in ref_topo.nodes)
    rules = [v.rule for v in T.validate_topology(T.Topology(nodes, ref_topo.links))]
    assert "multiple grandmasters" in rules


def test_cycle_is_rejected(ref_topo):
    extra = T.LinkEdge(("orin_1", "core_switch"), T.Medium.COPPER, 1e9)
    rules = [v.rule for v in T.validate_topology(T.Topology(ref_topo.nodes, ref_topo.links + (extra,)))]
    assert rules == ["not a tree"]


def test_bad_host_and_capacity(ref_topo):
    nodes = tuple(replace(n, host="core_switch") if n.id == "cam_fc" else n for n in ref_topo.nodes)
    links = tuple(replace(l, capacity=0) if l.name == T.UPLINK else l for l in ref_topo.links)
    subjects = {v.subject for v in T.validate_topology(T.Topology(nodes, links))}
    assert {"cam_fc", T.UPLINK} <= subjects


def test_lidar_rate_oracle():
    assert T.lidar_rate(1024, 128, 20) == 1024 * 128 * 20 * 12 * 8
    assert T.lidar_rate(1024, 128, 20) == pytest.approx(251.66e6, rel=1e-4)


def test_uplink_utilization(ref_topo):
    util = T.link_utilization(ref_topo, T.reference_demands())
    up = {l.name: u for l, u in util.items()}[T.UPLINK]
    assert up == pytest.approx(4 * 251.658240e6 / 10e9)
    assert T.oversubscribed(util) == []


def test_zero_demands(ref_topo):
    assert all(u == 0 for u in T.link_utilization(ref_topo, []).values())


def test_uncompressed_cameras_oversubscribe(ref_topo):
    demands = T.uncompressed_camera_demands()
    assert sum(d.rate for d in demands) == pytest.approx(8 * 1920 * 1200 * 60 * 2 * 16)
    names = {l.name for l in T.oversubscribed(T.link_utilization(ref_topo, demands))}
    assert T.UPLINK in names


def test_path_delays_asymmetry(ref_topo):
    t = ref_topo.with_link("hpc--core_switch", delay_asymmetry=2e-6)
    fwd, rev = T.path_delays(t, "hpc", "ins")
    fwd0, rev0 = T.path_delays(ref_topo, "hpc", "ins")
    assert fwd - fwd0 == pytest.approx(1e-6)
    assert rev0 - rev == pytest.approx(1e-6)


def test_round_trip(tmp_path, ref_topo):
    p = tmp_path / "t.json"
    T.save(ref_topo, p)
    assert T.load(p) == ref_topo


def test_load_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(T.TopologyError):
        T.load(p)


_NODES = [n.id for n in T.build_reference_topology().nodes]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(_NODES), st.sampled_from(_NODES))
def test_path_reversal(a, b):
    t = T.build_reference_topology()
    fwd = [l.name for l in T.path(t, a, b)]
    rev = [l.name for l in T.path(t, b, a)]
    assert fwd == rev[::-1]


_SENSORS = list(T.ROTATING_LIDARS) + list(T.RADARS) + list(T.CAMERAS) + [T.FMCW_LIDAR]
_demand = st.builds(
    T.TrafficDemand,
    st.sampled_from(_SENSORS),
    st.just("hpc"),
    st.floats(0, 5e9, allow_nan=False),
)


@settings(max_examples=40, deadline=None)
@given(st.lists(_demand, max_size=6), st.lists(_demand, max_size=6))
def test_utilization_is_linear(d1, d2):
    t = T.build_reference_topology()
    u1, u2 = T.link_utilization(t, d1), T.link_utilization(t, d2)
    u12 = T.link_utilization(t, d1 + d2)
    for link in t.links:
        assert u12[link] == pytest.approx(u1[link] + u2[link], abs=1e-12)
