"""Scenario files: one JSON document per simulated configuration.

Asset references are either ``builtin:<name>`` or a path, resolved relative to
the scenario file's directory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema

from karlsim import sensors, topology
from karlsim.datapath import LatencyProfile, default_latency_model
from karlsim.power import Battery
from karlsim.timesync import SyncConfig


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    seed: int = 0
    duration: float = 240.0
    topology: str = "builtin:reference"
    rig: str = "builtin:reference"
    camera_profile: str = "eval"
    latency_duration: float = 10.0
    latency_overrides: dict[str, dict] = field(default_factory=dict)
    sync: dict = field(default_factory=dict)
    link_overrides: list[dict] = field(default_factory=list)
    power_profile: str = "full-load"
    idle_profile: str = "idle"
    battery: dict = field(default_factory=dict)
    dbw_events: list[str] = field(default_factory=list)
    dbw_steps: list[dict] = field(default_factory=list)
    dbw_curvature_steps: list[dict] = field(default_factory=list)
    actuator_lag: float | None = None
    grid: dict = field(default_factory=lambda: {"extent": 20.0, "cell": 0.5, "height": 1.0})
    ring: dict = field(default_factory=lambda: {"radius": 10.0, "bins": 360, "height": 1.0})
    measure: dict = field(default_factory=lambda: {"samples": 30, "window": 180.0})

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.latency_duration <= 0:
            raise ScenarioError("latency_duration must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        jsonschema.validate(data, SCHEMA)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> Scenario:
        return cls.from_dict(json.loads(text))


def _schema() -> dict:
    return json.loads(resources.files("karlsim.data").joinpath("scenario.schema.json").read_text())


SCHEMA = _schema()


def load_scenario(fp: str | Path) -> tuple[Scenario, Path]:
    """Parse a scenario file; returns it with the directory refs resolve against."""
    p = Path(fp)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {fp}: {exc}") from exc
    try:
        return Scenario.from_dict(data), p.resolve().parent
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"{fp}: {exc.message}") from exc


def reference_scenario(seed: int = 7) -> Scenario:
    text = resources.files("karlsim.data").joinpath("paper_reference.json").read_text()
    s = Scenario.loads(text)
    s.seed = seed
    return s


def _ref_path(ref: str, base: Path | None) -> Path:
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    if not p.exists():
        raise ScenarioError(f"unresolved reference {ref!r}")
    return p


def resolve_topology(s: Scenario, base: Path | None = None) -> topology.Topology:
    if s.topology == "builtin:reference":
        t = topology.build_reference_topology()
    elif s.topology.startswith("builtin:"):
        raise ScenarioError(f"unresolved topology reference {s.topology!r}")
    else:
        try:
            t = topology.load(_ref_path(s.topology, base))
        except topology.TopologyError as exc:
            raise ScenarioError(f"topology {s.topology!r}: {exc}") from exc
    for ov in s.link_overrides:
        changes = {k: v for k, v in ov.items() if k != "link"}
        try:
            t = t.with_link(ov["link"], **changes)
        except (topology.TopologyError, TypeError) as exc:
            raise ScenarioError(f"link override {ov}: {exc}") from exc
    return t


def resolve_rig(s: Scenario, base: Path | None = None, camera_profile: str | None = None) -> list[sensors.SensorSpec]:
    profile = camera_profile or s.camera_profile
    if s.rig == "builtin:reference":
        try:
            return sensors.reference_rig(profile)
        except sensors.RigError as exc:
            raise ScenarioError(str(exc)) from exc
    if s.rig.startswith("builtin:"):
        raise ScenarioError(f"unresolved rig reference {s.rig!r}")
    try:
        return sensors.load_rig(_ref_path(s.rig, base))
    except sensors.RigError as exc:
        raise ScenarioError(f"rig {s.rig!r}: {exc}") from exc


def resolve_latency(s: Scenario, rig: list[sensors.SensorSpec]) -> dict[str, LatencyProfile]:
    model = default_latency_model(rig)
    for sid, ov in s.latency_overrides.items():
        if sid not in model:
            raise ScenarioError(f"latency override for unknown sensor {sid!r}")
        model[sid] = LatencyProfile(**{**asdict(model[sid]), **ov})
    return model


def resolve_sync(s: Scenario) -> SyncConfig:
    try:
        return SyncConfig(**s.sync)
    except TypeError as exc:
        raise ScenarioError(f"sync config: {exc}") from exc


def resolve_battery(s: Scenario) -> Battery:
    try:
        return Battery(**s.battery)
    except TypeError as exc:
        raise ScenarioError(f"battery config: {exc}") from exc
