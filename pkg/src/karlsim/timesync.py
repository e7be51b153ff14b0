"""End-to-end PTP from the INS grandmaster, NTP fallback, offset measurement.

Every PTP slave talks to the grandmaster directly: switches forward event
messages without residence-time correction, so each switch on the path adds
random queueing delay to both directions. Offsets are device clock minus
grandmaster time, in seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from karlsim.kernel import Event, Kernel, rng_for
from karlsim.topology import SyncClass, Topology, TopologyError, path_delays, path_switches

MAX_DRIFT_PPM = 999.0


@dataclass(frozen=True)
class ClockState:
    offset: float = 0.0
    drift: float = 0.0  # ppm, residual after servo frequency correction
    granularity: float = 0.0

    def __post_init__(self) -> None:
        if self.granularity < 0:
            raise ValueError("granularity must be >= 0")
        if abs(self.drift) >= 1000:
            raise ValueError(f"drift {self.drift} ppm out of range")


@dataclass(frozen=True)
class SyncConfig:
    sync_interval: float = 1.0
    delay_req_interval: float = 1.0
    kp: float = 0.7
    ki: float = 0.3
    timestamp_noise: float = 50e-9
    granularity: float = 8e-9
    residence_jitter: float = 0.5e-6  # max of uniform per-switch queueing delay
    ntp_noise: float = 200e-6
    ntp_interval: float = 1.0
    drift_range_ppm: float = 5.0
    initial_offset_range: float = 100e-6
    turnaround: float = 1e-3  # sync arrival to delay request departure

    def __post_init__(self) -> None:
        if self.sync_interval <= 0 or self.delay_req_interval <= 0 or self.ntp_interval <= 0:
            raise ValueError("intervals must be positive")
        if self.kp < 0 or self.ki < 0:
            raise ValueError("servo gains must be non-negative")

    @classmethod
    def zero_noise(cls, **kw) -> SyncConfig:
        base = dict(timestamp_noise=0.0, granularity=0.0, residence_jitter=0.0, ntp_noise=0.0)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class SyncSample:
    t1: float
    t2: float
    t3: float
    t4: float

    def check(self, bound: float) -> bool:
        """Causality holds up to ``bound`` of clock offset."""
        return self.t2 >= self.t1 - bound and self.t4 >= self.t3 - bound


def e2e_offset_estimate(s: SyncSample) -> float:
    vals = (s.t1, s.t2, s.t3, s.t4)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite timestamp in {s}")
    return ((s.t2 - s.t1) - (s.t4 - s.t3)) / 2


def _correct(state: ClockState, estimate: float, cfg: SyncConfig, dt: float) -> ClockState:
    drift = state.drift - cfg.ki * estimate / dt * 1e6
    drift = max(-MAX_DRIFT_PPM, min(MAX_DRIFT_PPM, drift))
    return replace(state, offset=state.offset - cfg.kp * estimate, drift=drift)


def _free_run(state: ClockState, dt: float) -> ClockState:
    return replace(state, offset=state.offset + state.drift * 1e-6 * dt)


def servo_step(state: ClockState, estimate: float, cfg: SyncConfig, dt: float) -> ClockState:
    """PI correction at an exchange, then free-run until the next one."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _free_run(_correct(state, estimate, cfg, dt), dt)


def _quantize(t: float, g: float) -> float:
    return math.floor(t / g) * g if g > 0 else t


@dataclass
class OffsetSeries:
    times: np.ndarray
    offsets: dict[str, np.ndarray]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    def rows(self) -> list[tuple[str, str, str]]:
        out = []
        for i, t in enumerate(self.times):
            for dev in sorted(self.offsets):
                out.append((f"{t:.6f}", dev, f"{self.offsets[dev][i]:.12e}"))
        return out

    def write_csv(self, fp: str | Path) -> None:
        with open(fp, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("time_s", "device_id", "offset_s"))
            w.writerows(self.rows())


class _Slave:
    """Clock of one device plus its sync bookkeeping."""

    def __init__(self, dev: str, state: ClockState, rng: np.random.Generator):
        self.dev = dev
        self.state = state
        self.t_last = 0.0
        self.rng = rng
        self.mean_path_delay: float | None = None
        self.t_delay_req = -math.inf
        self.record: list[float] = []

    def offset_at(self, t: float) -> float:
        return self.state.offset + self.state.drift * 1e-6 * (t - self.t_last)

    def advance(self, t: float) -> None:
        self.state = replace(self.state, offset=self.offset_at(t))
        self.t_last = t


def _initial_state(rng: np.random.Generator, cfg: SyncConfig) -> ClockState:
    off = rng.uniform(-cfg.initial_offset_range, cfg.initial_offset_range)
    drift = rng.uniform(-cfg.drift_range_ppm, cfg.drift_range_ppm)
    return ClockState(off, drift, cfg.granularity)


def simulate_sync(
    t: Topology,
    cfg: SyncConfig,
    duration: float,
    seed: int = 0,
    initial: Mapping[str, ClockState] | None = None,
) -> OffsetSeries:
    """Offsets of every clock-bearing device at each sync instant.

    Samples are taken just before the servo applies its correction.
    ``initial`` overrides the seeded start state per device.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    gm = t.grandmaster().id
    nodes = {n.id: n for n in t.nodes}
    ptp = [n.id for n in t.nodes if n.sync_class == SyncClass.PTP_NATIVE]
    ntp = [n.id for n in t.nodes if n.sync_class == SyncClass.NTP_ONLY]
    hosted = [n.id for n in t.nodes if n.sync_class == SyncClass.HOST_TIMESTAMPED]
    server = next((n.id for n in t.nodes if n.kind.value == "hpc"), None)
    if ntp and server is None:
        raise TopologyError("ntp-only devices need an hpc NTP server")
    initial = initial or {}

    slaves: dict[str, _Slave] = {}
    geometry: dict[str, tuple[float, float, int]] = {}
    for dev in ptp + ntp:
        peer = gm if dev in ptp else server
        d_sm, d_ms = path_delays(t, dev, peer)
        n_sw = len(path_switches(t, dev, peer))
        rng = rng_for(seed, "timesync", dev)
        state = initial.get(dev) or _initial_state(rng, cfg)
        slaves[dev] = _Slave(dev, state, rng)
        geometry[dev] = (d_ms, d_sm, n_sw)

    n_steps = int(math.floor(duration / cfg.sync_interval + 1e-9)) + 1
    times = np.arange(n_steps) * cfg.sync_interval

    def ptp_exchange(s: _Slave, now: float) -> float:
        d_ms, d_sm, n_sw = geometry[s.dev]
        rng, sig, g = s.rng, cfg.timestamp_noise, s.state.granularity
        jit = cfg.residence_jitter
        noise = rng.normal(0.0, sig, 4) if sig > 0 else np.zeros(4)
        q_ms = rng.uniform(0, jit, n_sw).sum() if jit > 0 else 0.0
        q_sm = rng.uniform(0, jit, n_sw).sum() if jit > 0 else 0.0
        t1 = _quantize(now + noise[0], g)
        ta = now + d_ms + q_ms
        t2 = _quantize(ta + s.offset_at(ta) + noise[1], g)
        if now - s.t_delay_req >= cfg.delay_req_interval - 1e-12 or s.mean_path_delay is None:
            tb = ta + cfg.turnaround
            t3 = _quantize(tb + s.offset_at(tb) + noise[2], g)
            t4 = _quantize(tb + d_sm + q_sm + noise[3], g)
            sample = SyncSample(t1, t2, t3, t4)
            s.mean_path_delay = ((t2 - t1) + (t4 - t3)) / 2
            s.t_delay_req = now
            return e2e_offset_estimate(sample)
        return (t2 - t1) - s.mean_path_delay

    def ntp_exchange(s: _Slave, now: float) -> float:
        d_ms, d_sm, _ = geometry[s.dev]
        ref = slaves.get(server)
        ref_off = (lambda x: ref.offset_at(x)) if ref else (lambda x: 0.0)
        sig = cfg.ntp_noise
        noise = s.rng.normal(0.0, sig, 4) if sig > 0 else np.zeros(4)
        # client-initiated: request leaves at `now`, reply returns after turnaround
        t1 = now + s.offset_at(now) + noise[0]
        ta = now + d_sm
        t2 = ta + ref_off(ta) + noise[1]
        tb = ta + cfg.turnaround
        t3 = tb + ref_off(tb) + noise[2]
        t4 = tb + d_ms + s.offset_at(tb + d_ms) + noise[3]
        # standard NTP offset is server minus client; the servo wants client minus server
        return -((t2 - t1) + (t3 - t4)) / 2

    kernel = Kernel()
    for now in times:
        for dev in ptp:
            kernel.schedule(float(now), dev, "ptp")
    ntp_times = np.arange(0.0, duration + 1e-9, cfg.ntp_interval) + cfg.sync_interval / 2
    for now in ntp_times:
        for dev in ntp:
            kernel.schedule(float(now), dev, "ntp")

    ntp_records: dict[str, list[tuple[float, float]]] = {d: [] for d in ntp}

    def handle(kern: Kernel, ev: Event) -> None:
        s = slaves[ev.source]
        now = ev.time
        s.advance(now)
        if ev.payload == "ptp":
            s.record.append(s.state.offset)
            est = ptp_exchange(s, now)
            dt = cfg.sync_interval
        else:
            ntp_records[s.dev].append((now, s.state.offset))
            est = ntp_exchange(s, now)
            dt = cfg.ntp_interval
        s.state = _correct(s.state, est, cfg, dt)

    kernel.run(handle)

    offsets: dict[str, np.ndarray] = {gm: np.zeros(n_steps)}
    for dev in ptp:
        offsets[dev] = np.asarray(slaves[dev].record)
    for dev in ntp:
        tt, oo = zip(*ntp_records[dev]) if ntp_records[dev] else ((0.0,), (0.0,))
        offsets[dev] = np.interp(times, tt, oo)
    for dev in hosted:
        host = nodes[dev].host
        if host not in offsets:
            raise TopologyError(f"host {host!r} of {dev!r} has no clock")
        offsets[dev] = offsets[host].copy()
    return OffsetSeries(times, dict(sorted(offsets.items())))


@dataclass(frozen=True)
class OffsetStats:
    mean_abs: float
    max_abs: float


def measure_offsets(
    series: OffsetSeries,
    n_samples: int = 30,
    window: float = 180.0,
    devices: Iterable[str] | None = None,
) -> dict[str, OffsetStats]:
    """Sample each device ``n_samples`` times evenly over the trailing window."""
    if series.duration < window:
        raise ValueError(f"series spans {series.duration} s, shorter than window {window} s")
    end = float(series.times[-1])
    at = np.linspace(end - window, end, n_samples)
    out = {}
    for dev in devices if devices is not None else series.offsets:
        vals = np.abs(np.interp(at, series.times, series.offsets[dev]))
        out[dev] = OffsetStats(float(vals.mean()), float(vals.max()))
    return out


def steady_state_offsets(series: OffsetSeries, tail: int = 10) -> dict[str, float]:
    """Mean of the last ``tail`` samples per device."""
    return {dev: float(np.mean(v[-tail:])) for dev, v in series.offsets.items()}
