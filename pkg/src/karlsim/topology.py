"""Device/link graph of the two-tier onboard Ethernet and bandwidth checks.

Links are undirected for routing, but carry an orientation for the delay
asymmetry: ``endpoints[0] -> endpoints[1]`` is the *forward* direction.
The reference builder orients every link from the device towards the cabin
core, i.e. forward means "towards the grandmaster" for every rooftop device.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

import networkx as nx


class TopologyError(ValueError):
    """Unknown device, unreachable pair, or malformed topology input."""


class NodeKind(str, Enum):
    SENSOR = "sensor"
    EMBEDDED_COMPUTER = "embedded-computer"
    HPC = "hpc"
    SWITCH = "switch"
    ROUTER = "router"
    POWER_CONTROLLER = "power-controller"
    INS_GRANDMASTER = "ins-grandmaster"
    V2X_UNIT = "v2x-unit"


class SyncClass(str, Enum):
    PTP_NATIVE = "ptp-native"
    HOST_TIMESTAMPED = "host-timestamped"
    NTP_ONLY = "ntp-only"
    GRANDMASTER = "grandmaster"


class Medium(str, Enum):
    COPPER = "copper"
    FIBER = "fiber"
    AUTOMOTIVE_ETHERNET = "automotive-ethernet"


COMPUTE_KINDS = (NodeKind.HPC, NodeKind.EMBEDDED_COMPUTER)

GBIT = 1e9
UPLINK_CAPACITY = 10 * GBIT
AE_CAPACITY = 1 * GBIT
ACCESS_CAPACITY = 1 * GBIT

# one-way cable + PHY delay, a few metres of cable each
DEFAULT_PROP_DELAY = {
    Medium.COPPER: 50e-9,
    Medium.FIBER: 40e-9,
    Medium.AUTOMOTIVE_ETHERNET: 60e-9,
}


@dataclass(frozen=True)
class DeviceNode:
    id: str
    kind: NodeKind
    # None for pure infrastructure (switches) that hold no clock of interest
    sync_class: SyncClass | None = None
    host: str | None = None
    power_channel: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.sync_class is not None:
            object.__setattr__(self, "sync_class", SyncClass(self.sync_class))


@dataclass(frozen=True)
class LinkEdge:
    endpoints: tuple[str, str]
    medium: Medium
    capacity: float
    prop_delay: float = 0.0
    delay_asymmetry: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        object.__setattr__(self, "medium", Medium(self.medium))

    @property
    def name(self) -> str:
        return f"{self.endpoints[0]}--{self.endpoints[1]}"

    def one_way_delay(self, src: str) -> float:
        """Delay when entering the link at ``src``."""
        if src == self.endpoints[0]:
            return self.prop_delay + self.delay_asymmetry / 2
        if src == self.endpoints[1]:
            return self.prop_delay - self.delay_asymmetry / 2
        raise TopologyError(f"{src!r} is not an endpoint of {self.name}")

    def other(self, node_id: str) -> str:
        a, b = self.endpoints
        return b if node_id == a else a


@dataclass(frozen=True)
class Topology:
    nodes: tuple[DeviceNode, ...]
    links: tuple[LinkEdge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))

    def node(self, node_id: str) -> DeviceNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise TopologyError(f"unknown device {node_id!r}")

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def grandmaster(self) -> DeviceNode:
        gms = [n for n in self.nodes if n.sync_class == SyncClass.GRANDMASTER]
        if len(gms) != 1:
            raise TopologyError(f"expected exactly one grandmaster, found {len(gms)}")
        return gms[0]

    def linked_ids(self) -> set[str]:
        return {e for link in self.links for e in link.endpoints}

    def with_link(self, name: str, **changes) -> Topology:
        """Copy with the named link's fields replaced."""
        found = False
        links = []
        for link in self.links:
            if link.name == name:
                link = replace(link, **changes)
                found = True
            links.append(link)
        if not found:
            raise TopologyError(f"unknown link {name!r}")
        return Topology(self.nodes, tuple(links))

    def scaled_delays(self, factor: float) -> Topology:
        return Topology(
            self.nodes,
            tuple(replace(l, prop_delay=l.prop_delay * factor) for l in self.links),
        )


@dataclass(frozen=True)
class TrafficDemand:
    source: str
    sink: str
    rate: float


@dataclass(frozen=True)
class Violation:
    subject: str
    rule: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.rule}"


def _graph(t: Topology) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(t.linked_ids())
    for link in t.links:
        g.add_edge(*link.endpoints, link=link)
    return g


def validate_topology(t: Topology) -> list[Violation]:
    out: list[Violation] = []
    seen: set[str] = set()
    for n in t.nodes:
        if n.id in seen:
            out.append(Violation(n.id, "duplicate node id"))
        seen.add(n.id)
    by_id = {n.id: n for n in t.nodes}

    gms = [n.id for n in t.nodes if n.sync_class == SyncClass.GRANDMASTER]
    if not gms:
        out.append(Violation("topology", "no grandmaster"))
    elif len(gms) > 1:
        out.append(Violation(",".join(gms), "multiple grandmasters"))

    for n in t.nodes:
        if n.sync_class == SyncClass.HOST_TIMESTAMPED:
            host = by_id.get(n.host) if n.host else None
            if host is None or host.kind not in COMPUTE_KINDS:
                out.append(Violation(n.id, "host-timestamped device without compute host"))

    pairs: set[frozenset[str]] = set()
    for link in t.links:
        a, b = link.endpoints
        if a == b:
            out.append(Violation(link.name, "self-loop"))
        for e in (a, b):
            if e not in by_id:
                out.append(Violation(link.name, f"unknown endpoint {e!r}"))
        if link.capacity <= 0:
            out.append(Violation(link.name, "capacity must be positive"))
        if link.prop_delay < 0:
            out.append(Violation(link.name, "negative propagation delay"))
        key = frozenset((a, b))
        if key in pairs:
            out.append(Violation(link.name, "parallel link"))
        pairs.add(key)

    linked = t.linked_ids()
    for n in t.nodes:
        if n.id not in linked and not (n.host and n.host in linked):
            out.append(Violation(n.id, "isolated node"))

    if linked and not out:
        g = _graph(t)
        if not nx.is_connected(g):
            out.append(Violation("topology", "not connected"))
        elif not nx.is_tree(g):
            out.append(Violation("topology", "not a tree"))
    return out


def _attach_point(t: Topology, node_id: str) -> str:
    """Ethernet node through which ``node_id`` is reached (itself, or its host)."""
    n = t.node(node_id)
    if node_id in t.linked_ids():
        return node_id
    if n.host is not None:
        return _attach_point(t, n.host)
    raise TopologyError(f"device {node_id!r} has no network attachment")


def path(t: Topology, a: str, b: str) -> list[LinkEdge]:
    """Ordered links from ``a`` to ``b``; empty when both share an attachment."""
    src, dst = _attach_point(t, a), _attach_point(t, b)
    if src == dst:
        return []
    g = _graph(t)
    try:
        hops = nx.shortest_path(g, src, dst)
    except nx.NetworkXNoPath as exc:
        raise TopologyError(f"no path between {a!r} and {b!r}") from exc
    return [g.edges[u, v]["link"] for u, v in zip(hops, hops[1:])]


def path_delays(t: Topology, a: str, b: str) -> tuple[float, float]:
    """One-way delays (a->b, b->a) along the tree path."""
    src = _attach_point(t, a)
    fwd = rev = 0.0
    cur = src
    for link in path(t, a, b):
        nxt = link.other(cur)
        fwd += link.one_way_delay(cur)
        rev += link.one_way_delay(nxt)
        cur = nxt
    return fwd, rev


def path_switches(t: Topology, a: str, b: str) -> list[str]:
    """Switches traversed between ``a`` and ``b`` in order."""
    cur = _attach_point(t, a)
    hops = [cur]
    for link in path(t, a, b):
        cur = link.other(cur)
        hops.append(cur)
    return [h for h in hops if t.node(h).kind == NodeKind.SWITCH]


def link_utilization(t: Topology, demands: Iterable[TrafficDemand]) -> dict[LinkEdge, float]:
    load = {link: 0.0 for link in t.links}
    for d in demands:
        if d.rate < 0:
            raise TopologyError(f"negative rate for {d.source}->{d.sink}")
        for link in path(t, d.source, d.sink):
            load[link] += d.rate
    return {link: load[link] / link.capacity for link in t.links}


def oversubscribed(utilization: dict[LinkEdge, float]) -> list[LinkEdge]:
    return [link for link, u in utilization.items() if u > 1.0]


def _node(id, kind, sync=None, host=None, channel=None) -> DeviceNode:
    return DeviceNode(id, NodeKind(kind), SyncClass(sync) if sync else None, host, channel)


def _link(a, b, medium, capacity) -> LinkEdge:
    medium = Medium(medium)
    return LinkEdge((a, b), medium, capacity, DEFAULT_PROP_DELAY[medium])


# Sensor ids shared with the reference rig and the power profiles.
ROTATING_LIDARS = ("lidar_fl", "lidar_fr", "lidar_rl", "lidar_rr")
FMCW_LIDAR = "lidar_fc"
CAMERAS = ("cam_fc", "cam_fl", "cam_fr", "cam_ml", "cam_mr", "cam_rc", "cam_rl", "cam_rr")
RADARS = ("radar_fc", "radar_fl", "radar_fr", "radar_rl", "radar_rr")
UPLINK = "roof_switch--core_switch"


def build_reference_topology(
    uplink_capacity: float = UPLINK_CAPACITY,
    ae_capacity: float = AE_CAPACITY,
    access_capacity: float = ACCESS_CAPACITY,
) -> Topology:
    nodes = [
        _node("ins", "ins-grandmaster", "grandmaster", channel="cabin-03"),
        _node("hpc", "hpc", "ptp-native", channel="ac-1"),
        _node("core_switch", "switch", channel="ac-2"),
        _node("roof_switch", "switch", channel="roof-01"),
        _node("ae_switch", "switch", channel="cabin-04"),
        _node("router_5g", "router", "ntp-only", channel="cabin-05"),
        _node("v2x", "v2x-unit", "ptp-native", channel="cabin-06"),
        _node("cabin_pdu", "power-controller", channel="cabin-02"),
        _node("roof_pdu", "power-controller", channel="roof-02"),
        _node("orin_1", "embedded-computer", "ptp-native", channel="roof-03"),
        _node("orin_2", "embedded-computer", "ptp-native", channel="roof-04"),
    ]
    for i, lid in enumerate(ROTATING_LIDARS):
        nodes.append(_node(lid, "sensor", "ptp-native", channel=f"roof-{5 + i:02d}"))
    nodes.append(_node(FMCW_LIDAR, "sensor", "ntp-only", channel="roof-09"))
    for i, cam in enumerate(CAMERAS):
        # first four cameras on one Orin, the rest on the other
        nodes.append(_node(cam, "sensor", "host-timestamped", host="orin_1" if i < 4 else "orin_2"))
    for i, rad in enumerate(RADARS):
        nodes.append(_node(rad, "sensor", "host-timestamped", host="hpc", channel=f"cabin-{10 + i:02d}"))

    links = [
        _link("roof_switch", "core_switch", "fiber", uplink_capacity),
        _link("ae_switch", "core_switch", "copper", access_capacity),
        # the HPC terminates all sensor traffic, so it gets the uplink's bandwidth
        _link("hpc", "core_switch", "fiber", uplink_capacity),
        _link("ins", "core_switch", "copper", access_capacity),
        _link("router_5g", "core_switch", "copper", access_capacity),
        _link("v2x", "core_switch", "copper", access_capacity),
        _link("cabin_pdu", "core_switch", "copper", access_capacity),
        _link("roof_pdu", "roof_switch", "copper", access_capacity),
        _link("orin_1", "roof_switch", "copper", access_capacity),
        _link("orin_2", "roof_switch", "copper", access_capacity),
    ]
    links += [_link(lid, "roof_switch", "copper", access_capacity) for lid in ROTATING_LIDARS]
    # AE-to-SFP converter folded into the access link
    links.append(_link(FMCW_LIDAR, "roof_switch", "automotive-ethernet", ae_capacity))
    links += [_link(rad, "ae_switch", "automotive-ethernet", ae_capacity) for rad in RADARS]
    return Topology(tuple(nodes), tuple(links))


def lidar_rate(cols: int, rows: int, fps: float, bytes_per_point: float = 12) -> float:
    return cols * rows * fps * bytes_per_point * 8


def reference_demands(bytes_per_point: float = 12) -> list[TrafficDemand]:
    """Rotating-lidar point clouds streamed raw to the HPC at 1024x128@20."""
    rate = lidar_rate(1024, 128, 20, bytes_per_point)
    return [TrafficDemand(lid, "hpc", rate) for lid in ROTATING_LIDARS]


def uncompressed_camera_demands(
    cols: int = 1920, rows: int = 1200, fps: float = 60, imagers: int = 2, bits_per_pixel: int = 16
) -> list[TrafficDemand]:
    """All eight stereo cameras shipped raw from their Orin to the HPC."""
    rate = cols * rows * fps * imagers * bits_per_pixel
    return [TrafficDemand(cam, "hpc", rate) for cam in CAMERAS]


def to_dict(t: Topology) -> dict:
    def clean(d: dict) -> dict:
        return {k: (v.value if isinstance(v, Enum) else v) for k, v in d.items()}

    return {
        "nodes": [clean(asdict(n)) for n in t.nodes],
        "links": [
            {
                "endpoints": list(l.endpoints),
                "medium": l.medium.value,
                "capacity": l.capacity,
                "prop_delay": l.prop_delay,
                "delay_asymmetry": l.delay_asymmetry,
            }
            for l in t.links
        ],
    }


def from_dict(data: dict) -> Topology:
    try:
        nodes = tuple(DeviceNode(**n) for n in data["nodes"])
        links = tuple(LinkEdge(**l) for l in data["links"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"malformed topology: {exc}") from exc
    return Topology(nodes, links)


def save(t: Topology, fp: str | Path) -> None:
    Path(fp).write_text(json.dumps(to_dict(t), indent=2) + "\n", encoding="utf-8")


def load(fp: str | Path) -> Topology:
    try:
        return from_dict(json.loads(Path(fp).read_text(encoding="utf-8")))
    except TopologyError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise TopologyError(f"cannot load topology {fp}: {exc}") from exc
