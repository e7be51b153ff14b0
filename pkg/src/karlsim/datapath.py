"""Sensor capture -> driver -> transport timing and data-rate arithmetic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from karlsim.kernel import Event, EventQueue
from karlsim.sensors import Modality, SensorSpec


class StampSemantics(str, Enum):
    START_OF_SWEEP = "start-of-sweep"
    AT_CAPTURE = "at-capture"
    HOST_AT_ARRIVAL = "host-at-arrival"


@dataclass(frozen=True)
class LatencyProfile:
    capture_duration: float
    driver_delay: float
    transport_delay: float
    stamp_semantics: StampSemantics
    jitter: float = 0.0  # half-width of uniform driver-delay jitter

    def __post_init__(self) -> None:
        object.__setattr__(self, "stamp_semantics", StampSemantics(self.stamp_semantics))
        for name in ("capture_duration", "driver_delay", "transport_delay", "jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.jitter > self.driver_delay:
            raise ValueError("jitter larger than driver delay")

    @property
    def nominal_latency(self) -> float:
        sweep = self.capture_duration if self.stamp_semantics == StampSemantics.START_OF_SWEEP else 0.0
        return sweep + self.driver_delay + self.transport_delay


# Measured decompositions of the capture-to-message latency.
DEFAULT_PROFILES: dict[Modality, LatencyProfile] = {
    Modality.LIDAR_ROTATING: LatencyProfile(0.050, 0.020, 0.002, StampSemantics.START_OF_SWEEP),
    Modality.LIDAR_FMCW: LatencyProfile(0.0, 0.219, 0.001, StampSemantics.AT_CAPTURE),
    Modality.CAMERA: LatencyProfile(0.0, 0.120, 0.019, StampSemantics.AT_CAPTURE),
    Modality.RADAR: LatencyProfile(0.0, 0.0005, 0.0002, StampSemantics.HOST_AT_ARRIVAL),
}

LatencyModel = Mapping[str, LatencyProfile]


def default_latency_model(rig: Iterable[SensorSpec]) -> dict[str, LatencyProfile]:
    return {s.id: DEFAULT_PROFILES[s.modality] for s in rig}


@dataclass(frozen=True)
class EncodingConfig:
    bytes_per_element: float = 12.0
    streams: int = 1
    compression: float = 1.0
    nominal_rate: float | None = None  # bit/s, for sensors without a pixel grid


DEFAULT_ENCODING: dict[Modality, EncodingConfig] = {
    Modality.LIDAR_ROTATING: EncodingConfig(12.0),
    Modality.LIDAR_FMCW: EncodingConfig(12.0),
    Modality.CAMERA: EncodingConfig(2.0, streams=2, compression=10.0),
    Modality.RADAR: EncodingConfig(nominal_rate=8e6),
}


def sensor_data_rate(spec: SensorSpec, enc: EncodingConfig | None = None) -> float:
    """Stream bit rate: cols x rows x fps x bytes x 8 x streams / compression."""
    enc = enc or DEFAULT_ENCODING[spec.modality]
    if spec.resolution is None:
        if enc.nominal_rate is None:
            raise ValueError(f"{spec.id}: no resolution and no nominal rate")
        return enc.nominal_rate
    cols, rows = spec.resolution
    return cols * rows * spec.rate * enc.bytes_per_element * 8 * enc.streams / enc.compression


@dataclass(frozen=True)
class MessageEvent:
    sensor_id: str
    seq: int
    stamp: float
    available_at: float
    size: int

    @property
    def latency(self) -> float:
        return self.available_at - self.stamp


def simulate_stream(
    spec: SensorSpec,
    profile: LatencyProfile,
    stamp_offset: float = 0.0,
    consumer_offset: float = 0.0,
    duration: float = 1.0,
    start: float = 0.0,
    rng: np.random.Generator | None = None,
    enc: EncodingConfig | None = None,
) -> list[MessageEvent]:
    """One message per frame.

    ``stamp_offset`` is the offset of the clock that writes the header stamp
    (the sensor itself, or its host); ``consumer_offset`` that of the clock
    reading the message on arrival. Frame ``k`` starts at true time
    ``start + k / rate``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if spec.rate <= 0:
        raise ValueError(f"{spec.id}: rate must be positive")
    n = int(math.floor(duration * spec.rate + 1e-9))
    size = int(round(sensor_data_rate(spec, enc) / spec.rate / 8))
    sem = profile.stamp_semantics
    out = []
    for k in range(n):
        t0 = start + k / spec.rate
        driver = profile.driver_delay
        if profile.jitter and rng is not None:
            driver += rng.uniform(-profile.jitter, profile.jitter)
        if sem == StampSemantics.START_OF_SWEEP:
            stamp_true = t0
            ready = t0 + profile.capture_duration
        elif sem == StampSemantics.AT_CAPTURE:
            stamp_true = t0
            ready = t0
        else:
            # the host stamps when the complete frame arrives
            stamp_true = t0 + profile.capture_duration
            ready = stamp_true
        avail_true = ready + driver + profile.transport_delay
        out.append(MessageEvent(spec.id, k, stamp_true + stamp_offset, avail_true + consumer_offset, size))
    return out


def simulate_streams(
    rig: Sequence[SensorSpec],
    model: LatencyModel,
    stamp_offsets: Mapping[str, float] | None = None,
    consumer_offset: float = 0.0,
    duration: float = 1.0,
    rng: np.random.Generator | None = None,
) -> list[MessageEvent]:
    """All streams merged in arrival order, ties broken by (sensor id, seq)."""
    offs = stamp_offsets or {}
    queue = EventQueue()
    for spec in rig:
        for ev in simulate_stream(spec, model[spec.id], offs.get(spec.id, 0.0), consumer_offset, duration, rng=rng):
            queue.push(Event(ev.available_at, ev.sensor_id, ev.seq, ev))
    return [e.payload for e in queue.drain()]


def mean_latency(events: Sequence[MessageEvent]) -> float:
    if not events:
        raise ValueError("no events")
    return float(np.mean([e.latency for e in events]))


def latency_by_sensor(events: Iterable[MessageEvent]) -> dict[str, float]:
    groups: dict[str, list[MessageEvent]] = {}
    for e in events:
        groups.setdefault(e.sensor_id, []).append(e)
    return {sid: mean_latency(evs) for sid, evs in sorted(groups.items())}


EVENT_COLUMNS = ("sensor_id", "seq", "stamp_s", "available_s", "latency_s", "bytes")


def event_rows(events: Iterable[MessageEvent]) -> list[tuple]:
    return [
        (e.sensor_id, e.seq, f"{e.stamp:.9f}", f"{e.available_at:.9f}", f"{e.latency:.9f}", e.size)
        for e in events
    ]


def write_events_csv(events: Iterable[MessageEvent], fp: str | Path) -> None:
    with open(fp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        w.writerows(event_rows(events))
