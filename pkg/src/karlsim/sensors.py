"""Sensor specifications and the reference roof/bumper rig.

Angles follow the vehicle frame: yaw 0 is forward and positive to the left,
pitch is positive when the sensor is tilted towards the ground. Positions are
metres from the rear-axle centre on the ground (x forward, y left, z up).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path

from karlsim.topology import CAMERAS, FMCW_LIDAR, RADARS, ROTATING_LIDARS


class Modality(str, Enum):
    CAMERA = "camera"
    LIDAR_ROTATING = "lidar-rotating"
    LIDAR_FMCW = "lidar-fmcw"
    RADAR = "radar"

    @property
    def group(self) -> str:
        """Coarse class used for coverage maps: camera, lidar or radar."""
        return "lidar" if self.value.startswith("lidar") else self.value


MODALITY_GROUPS = ("camera", "lidar", "radar")


class RigError(ValueError):
    pass


@dataclass(frozen=True)
class SensorPose:
    yaw: float
    pitch: float
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if abs(self.pitch) > 90:
            raise RigError(f"pitch {self.pitch} outside [-90, 90]")
        if self.position[2] < 0:
            raise RigError("sensor mounted below ground")


@dataclass(frozen=True)
class Frustum:
    hfov: float
    vfov: float
    min_range: float = 0.0
    max_range: float = 100.0

    def __post_init__(self) -> None:
        if not 0 < self.hfov <= 360:
            raise RigError(f"hfov {self.hfov} outside (0, 360]")
        if not 0 < self.vfov < 180:
            raise RigError(f"vfov {self.vfov} outside (0, 180)")
        # min == max == 0 is the "sees nothing" frustum
        if self.min_range < 0 or self.max_range < self.min_range or (
            self.max_range == self.min_range and self.max_range != 0
        ):
            raise RigError(f"bad range [{self.min_range}, {self.max_range}]")


@dataclass(frozen=True)
class SensorSpec:
    id: str
    modality: Modality
    pose: SensorPose
    frustum: Frustum
    resolution: tuple[int, int] | None
    rate: float
    radial_velocity: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.resolution is not None:
            object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        if self.modality == Modality.LIDAR_ROTATING and self.frustum.hfov != 360:
            raise RigError(f"{self.id}: rotating lidar must have 360 deg hfov")
        if self.rate < 0:
            raise RigError(f"{self.id}: negative rate")


# Mount geometry (assumed): 1.9 m x 1.0 m roof rack centred between the
# axles at 2.0 m, radars on the bumpers at 0.5 m.
ROOF_Z = 2.0
BUMPER_Z = 0.5
RACK_CENTER_X = 1.5
RACK_HALF_LENGTH = 0.95
RACK_HALF_WIDTH = 0.5

# Outline used as the coverage exclusion mask: x range, y half-width.
VEHICLE_FOOTPRINT = ((-1.0, 4.17), 0.98)

CAMERA_PROFILES = {
    "max": ((1920, 1200), 60.0),
    "eval": ((1280, 720), 15.0),
}

_FRONT_X = RACK_CENTER_X + RACK_HALF_LENGTH
_REAR_X = RACK_CENTER_X - RACK_HALF_LENGTH


def _roof(x: float, y: float) -> tuple[float, float, float]:
    return (x, y, ROOF_Z)


def reference_rig(camera_profile: str = "max", lidar_pitch: float = 20.0) -> list[SensorSpec]:
    """Eight stereo cameras, four rotating lidars, one FMCW lidar, five radars."""
    try:
        cam_res, cam_rate = CAMERA_PROFILES[camera_profile]
    except KeyError:
        raise RigError(f"unknown camera profile {camera_profile!r}") from None

    narrow = Frustum(80, 52, 0.3, 120.0)
    wide = Frustum(110, 80, 0.3, 60.0)
    cam_rows = [
        ("cam_fc", 0, 5, narrow, _roof(_FRONT_X, 0.0)),
        ("cam_fl", 45, 5, narrow, _roof(_FRONT_X, 0.3)),
        ("cam_fr", -45, 5, narrow, _roof(_FRONT_X, -0.3)),
        ("cam_ml", 90, 20, wide, _roof(RACK_CENTER_X, RACK_HALF_WIDTH)),
        ("cam_mr", -90, 20, wide, _roof(RACK_CENTER_X, -RACK_HALF_WIDTH)),
        ("cam_rc", 180, 0, wide, _roof(_REAR_X, 0.0)),
        ("cam_rl", 135, 20, wide, _roof(_REAR_X, 0.3)),
        ("cam_rr", -135, 20, wide, _roof(_REAR_X, -0.3)),
    ]
    assert tuple(r[0] for r in cam_rows) == CAMERAS
    rig = [
        SensorSpec(sid, Modality.CAMERA, SensorPose(yaw, pitch, pos), fr, cam_res, cam_rate)
        for sid, yaw, pitch, fr, pos in cam_rows
    ]

    os1 = Frustum(360, 42, 0.5, 120.0)
    corners = {
        "lidar_fl": (45, _FRONT_X, RACK_HALF_WIDTH),
        "lidar_fr": (-45, _FRONT_X, -RACK_HALF_WIDTH),
        "lidar_rl": (135, _REAR_X, RACK_HALF_WIDTH),
        "lidar_rr": (-135, _REAR_X, -RACK_HALF_WIDTH),
    }
    for sid in ROTATING_LIDARS:
        yaw, x, y = corners[sid]
        rig.append(
            SensorSpec(sid, Modality.LIDAR_ROTATING, SensorPose(yaw, lidar_pitch, _roof(x, y)), os1, (1024, 128), 20.0)
        )
    rig.append(
        SensorSpec(
            FMCW_LIDAR,
            Modality.LIDAR_FMCW,
            SensorPose(0, 20, _roof(_FRONT_X + 0.05, 0.0)),
            Frustum(120, 29, 1.0, 200.0),
            (2000, 64),
            20.0,
            radial_velocity=True,
        )
    )

    radar_rows = [
        ("radar_fc", 0, Frustum(110, 23, 0.5, 400.0), (4.15, 0.0, BUMPER_Z)),
        ("radar_fl", 90, Frustum(130, 14, 0.2, 130.0), (3.9, 0.9, BUMPER_Z)),
        ("radar_fr", -90, Frustum(130, 14, 0.2, 130.0), (3.9, -0.9, BUMPER_Z)),
        ("radar_rl", 143, Frustum(100, 20, 0.2, 100.0), (-0.95, 0.85, BUMPER_Z)),
        ("radar_rr", -143, Frustum(100, 20, 0.2, 100.0), (-0.95, -0.85, BUMPER_Z)),
    ]
    assert tuple(r[0] for r in radar_rows) == RADARS
    rig += [
        SensorSpec(sid, Modality.RADAR, SensorPose(yaw, 0, pos), fr, None, 15.0, radial_velocity=True)
        for sid, yaw, fr, pos in radar_rows
    ]
    return rig


def with_pitch(rig: list[SensorSpec], modality: Modality, pitch: float) -> list[SensorSpec]:
    return [
        replace(s, pose=replace(s.pose, pitch=pitch)) if s.modality == modality else s for s in rig
    ]


def spec_to_dict(s: SensorSpec) -> dict:
    d = asdict(s)
    d["modality"] = s.modality.value
    d["pose"]["position"] = list(s.pose.position)
    d["resolution"] = list(s.resolution) if s.resolution else None
    return d


def spec_from_dict(d: dict) -> SensorSpec:
    try:
        pose = SensorPose(**d["pose"])
        frustum = Frustum(**d["frustum"])
        res = d.get("resolution")
        return SensorSpec(
            d["id"],
            Modality(d["modality"]),
            pose,
            frustum,
            tuple(res) if res else None,
            float(d["rate"]),
            bool(d.get("radial_velocity", False)),
        )
    except (KeyError, TypeError) as exc:
        raise RigError(f"malformed sensor entry: {exc}") from exc


def save_rig(rig: list[SensorSpec], fp: str | Path) -> None:
    payload = {"sensors": [spec_to_dict(s) for s in rig]}
    Path(fp).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_rig(fp: str | Path) -> list[SensorSpec]:
    try:
        data = json.loads(Path(fp).read_text(encoding="utf-8"))
        rig = [spec_from_dict(d) for d in data["sensors"]]
    except RigError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise RigError(f"cannot load rig {fp}: {exc}") from exc
    ids = [s.id for s in rig]
    if len(set(ids)) != len(ids):
        raise RigError("duplicate sensor id in rig")
    return rig
