"""Drive-by-wire modes, safety envelope and kinematic single-track vehicle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np


class OperationMode(str, Enum):
    STOCK = "Stock"
    SHADOW = "Shadow"
    AUTOMATED = "Automated"


class DbwEvent(str, Enum):
    POWER_ON = "power_on"
    POWER_OFF = "power_off"
    SELECT_AUTOMATED = "select_automated"
    SELECT_SHADOW = "select_shadow"
    ENGAGE = "engage"
    DISENGAGE = "disengage"
    OVERRIDE = "override"
    OVERRIDE_RELEASE = "override_release"
    ESTOP = "estop"
    CLEAR_ESTOP = "clear_estop"
    KEY_INSERT = "key_insert"
    KEY_REMOVE = "key_remove"


@dataclass(frozen=True)
class DbwState:
    mode: OperationMode = OperationMode.STOCK
    engaged: bool = False
    estop: bool = False
    driver_override: bool = False
    key_access: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", OperationMode(self.mode))

    def invariant_holds(self) -> bool:
        return not self.engaged or (
            self.mode == OperationMode.AUTOMATED
            and self.key_access
            and not self.estop
            and not self.driver_override
        )

    @property
    def sensors_powered(self) -> bool:
        return self.mode != OperationMode.STOCK

    @property
    def can_attached(self) -> bool:
        """DbW is physically connected to the vehicle CAN only in Automated."""
        return self.mode == OperationMode.AUTOMATED


def transition(s: DbwState, event: DbwEvent | str) -> DbwState:
    """Guarded transition; events whose guard fails leave the state as is."""
    ev = DbwEvent(event)
    Mode = OperationMode
    if ev == DbwEvent.POWER_ON:
        return replace(s, mode=Mode.SHADOW) if s.mode == Mode.STOCK else s
    if ev == DbwEvent.POWER_OFF:
        return replace(s, mode=Mode.STOCK, engaged=False)
    if ev == DbwEvent.SELECT_AUTOMATED:
        return replace(s, mode=Mode.AUTOMATED) if s.mode == Mode.SHADOW else s
    if ev == DbwEvent.SELECT_SHADOW:
        return replace(s, mode=Mode.SHADOW, engaged=False) if s.mode == Mode.AUTOMATED else s
    if ev == DbwEvent.ENGAGE:
        ok = s.mode == Mode.AUTOMATED and s.key_access and not s.estop and not s.driver_override
        return replace(s, engaged=True) if ok else s
    if ev == DbwEvent.DISENGAGE:
        return replace(s, engaged=False)
    if ev == DbwEvent.OVERRIDE:
        return replace(s, engaged=False, driver_override=True)
    if ev == DbwEvent.OVERRIDE_RELEASE:
        return replace(s, driver_override=False)
    if ev == DbwEvent.ESTOP:
        return replace(s, engaged=False, estop=True)
    if ev == DbwEvent.CLEAR_ESTOP:
        return replace(s, estop=False)
    if ev == DbwEvent.KEY_INSERT:
        return replace(s, key_access=True)
    if ev == DbwEvent.KEY_REMOVE:
        return replace(s, key_access=False, engaged=False)
    raise AssertionError(ev)


@dataclass(frozen=True)
class TransitionRecord:
    event: str
    before: DbwState
    after: DbwState

    @property
    def applied(self) -> bool:
        return self.before != self.after


def run_script(events: Iterable[DbwEvent | str], start: DbwState | None = None) -> list[TransitionRecord]:
    s = start or DbwState()
    log = []
    for ev in events:
        nxt = transition(s, ev)
        log.append(TransitionRecord(DbwEvent(ev).value, s, nxt))
        s = nxt
    return log


def all_states() -> list[DbwState]:
    return [
        DbwState(m, e, st, o, k)
        for m in OperationMode
        for e in (False, True)
        for st in (False, True)
        for o in (False, True)
        for k in (False, True)
    ]


def reachable_states(start: DbwState | None = None) -> set[DbwState]:
    start = start or DbwState()
    seen = {start}
    todo = [start]
    while todo:
        s = todo.pop()
        for ev in DbwEvent:
            n = transition(s, ev)
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return seen


@dataclass(frozen=True)
class ControlRequest:
    accel: float = 0.0
    curvature: float = 0.0
    turn_signal: str = "none"

    def __post_init__(self) -> None:
        if self.turn_signal not in ("none", "left", "right"):
            raise ValueError(f"bad turn signal {self.turn_signal!r}")


@dataclass(frozen=True)
class SafetyEnvelope:
    """Speed-dependent longitudinal and lateral limits.

    Deceleration magnitude is ``decel_low`` below ``v_low`` and ``decel_high``
    from ``v_high`` on, linear in between.
    """

    decel_low: float = 5.0
    decel_high: float = 3.5
    v_low: float = 5.0
    v_high: float = 20.0
    accel_max: float = 2.5
    kappa_abs_max: float = 0.2
    a_lat_max: float = 3.0
    kappa_rate_base: float = 0.1
    kappa_rate_ref_speed: float = 5.0

    def decel_limit(self, v: float) -> float:
        if v < self.v_low:
            return self.decel_low
        if v >= self.v_high:
            return self.decel_high
        frac = (v - self.v_low) / (self.v_high - self.v_low)
        return self.decel_low + (self.decel_high - self.decel_low) * frac

    def accel_limit(self, v: float) -> float:
        return self.accel_max

    def kappa_max(self, v: float) -> float:
        # compare a_lat against kappa * v^2 to avoid dividing by a tiny v^2
        if self.kappa_abs_max * v * v <= self.a_lat_max:
            return self.kappa_abs_max
        return self.a_lat_max / (v * v)

    def kappa_rate_max(self, v: float) -> float:
        return self.kappa_rate_base * self.kappa_rate_ref_speed / max(v, self.kappa_rate_ref_speed)


def clamp_request(
    req: ControlRequest, v: float, prev_kappa: float, dt: float, env: SafetyEnvelope
) -> ControlRequest:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not (math.isfinite(req.accel) and math.isfinite(req.curvature)):
        raise ValueError(f"non-finite request {req}")
    accel = min(max(req.accel, -env.decel_limit(v)), env.accel_limit(v))

    kmax = env.kappa_max(v)
    step = env.kappa_rate_max(v) * dt
    lo = max(-kmax, prev_kappa - step)
    hi = min(kmax, prev_kappa + step)
    if lo <= hi:
        kappa = min(max(req.curvature, lo), hi)
    else:
        # previous command outside the (shrunk) envelope: walk back at the rate limit
        kappa = prev_kappa - step if prev_kappa > kmax else prev_kappa + step
    return replace(req, accel=accel, curvature=kappa)


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v: float = 0.0
    a: float = 0.0
    kappa: float = 0.0
    wheelbase: float = 3.124

    def __post_init__(self) -> None:
        if self.v < 0:
            raise ValueError("reverse driving is not modelled")

    @property
    def steering_angle(self) -> float:
        return math.atan(self.kappa * self.wheelbase)


DEFAULT_LAG = 0.1


def _lag_gain(dt: float, lag: float) -> float:
    return 1.0 if lag <= 0 else 1.0 - math.exp(-dt / lag)


def step_vehicle(state: VehicleState, req: ControlRequest, dt: float, actuator_lag: float = DEFAULT_LAG) -> VehicleState:
    """First-order actuator response, then one explicit Euler step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = _lag_gain(dt, actuator_lag)
    a = state.a + g * (req.accel - state.a)
    kappa = state.kappa + g * (req.curvature - state.kappa)
    x = state.x + state.v * math.cos(state.heading) * dt
    y = state.y + state.v * math.sin(state.heading) * dt
    heading = state.heading + state.v * kappa * dt
    v = max(0.0, state.v + a * dt)
    return replace(state, x=x, y=y, heading=heading, v=v, a=a, kappa=kappa)


def measure_response(trace, window: float = 0.2, rate: float = 50.0) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the ends."""
    x = np.asarray(trace, dtype=float)
    n = int(round(window * rate)) + 1
    if n % 2 == 0:
        n += 1
    if len(x) < n:
        raise ValueError(f"trace of {len(x)} samples shorter than window of {n}")
    half = n // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(len(x))
    h = np.minimum(half, np.minimum(idx, len(x) - 1 - idx))
    return (csum[idx + h + 1] - csum[idx - h]) / (2 * h + 1)


@dataclass
class StepReport:
    nominal: float
    v0: float
    target: float  # nominal after clamping
    settled: float
    settled_ok: bool
    adherence: bool
    trace: dict[str, np.ndarray] = field(repr=False)

    TOLERANCE = 0.05

    @property
    def passed(self) -> bool:
        return self.settled_ok and self.adherence

    def rows(self) -> list[tuple]:
        tr = self.trace
        return [
            tuple(f"{tr[k][i]:.6f}" for k in STEP_COLUMNS)
            for i in range(len(tr["t"]))
        ]

    def write_csv(self, fp: str | Path) -> None:
        with open(fp, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(STEP_COLUMNS)
            w.writerows(self.rows())


STEP_COLUMNS = ("t", "v", "a_nominal", "a_clamped", "a_measured")


def run_step_experiment(
    nominal_accel: float,
    v0: float,
    env: SafetyEnvelope | None = None,
    lag: float = DEFAULT_LAG,
    dt: float = 1e-3,
    rate: float = 50.0,
    pre: float = 1.0,
    limit_speed: str = "onset",
) -> StepReport:
    """Longitudinal step from steady cruise at ``v0``.

    The request is zero for ``pre`` seconds, then ``nominal_accel``. With
    ``limit_speed="onset"`` the deceleration limit is taken at the speed where
    the step starts; ``"current"`` re-evaluates it every tick. The measured
    trace is the realised acceleration sampled at ``rate`` and smoothed with
    :func:`measure_response`.
    """
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    if limit_speed not in ("onset", "current"):
        raise ValueError(f"limit_speed must be 'onset' or 'current', not {limit_speed!r}")
    env = env or SafetyEnvelope()
    target = clamp_request(ControlRequest(nominal_accel), v0, 0.0, dt, env).accel
    run_for = v0 / abs(target) + 2.0 if target < 0 else 5.0
    n_ticks = int(round((pre + run_for) / dt))
    every = int(round(1.0 / (rate * dt)))

    st = VehicleState(v=v0)
    cols: dict[str, list[float]] = {k: [] for k in ("t", "v", "a_nominal", "a_clamped", "a_real", "limit")}
    for k in range(n_ticks + 1):
        t = k * dt
        nominal = nominal_accel if t >= pre - 1e-12 else 0.0
        v_lim = v0 if limit_speed == "onset" else st.v
        req = clamp_request(ControlRequest(nominal), v_lim, 0.0, dt, env)
        nxt = step_vehicle(st, req, dt, lag)
        if k % every == 0:
            cols["t"].append(t)
            cols["v"].append(st.v)
            cols["a_nominal"].append(nominal)
            cols["a_clamped"].append(req.accel)
            cols["a_real"].append((nxt.v - st.v) / dt)
            cols["limit"].append(env.decel_limit(v_lim))
        st = nxt

    trace = {k: np.asarray(v) for k, v in cols.items()}
    measured = measure_response(trace["a_real"], rate=rate)
    trace["a_measured"] = measured

    tol = 1e-9
    adherence = bool(
        np.all(measured >= -trace["limit"] - tol) and np.all(measured <= env.accel_limit(v0) + tol)
    )
    braking = (trace["t"] >= pre) & (trace["v"] > 0)
    if target == 0 or not braking.any():
        settled = float(measured[braking].mean()) if braking.any() else 0.0
    else:
        # first-order response without overshoot: the plateau is the extreme value
        seg = measured[braking]
        settled = float(seg[np.argmax(np.abs(seg))])
    settled_ok = abs(settled - target) <= StepReport.TOLERANCE
    return StepReport(nominal_accel, v0, target, settled, settled_ok, adherence, trace)


@dataclass
class CurvatureReport:
    max_rate: float  # largest |dkappa/dt| of the vehicle curvature
    rate_ok: bool
    max_ok: bool
    final_kappa: float
    target: float


def run_curvature_experiment(
    nominal_kappa: float,
    v: float,
    env: SafetyEnvelope | None = None,
    lag: float = DEFAULT_LAG,
    dt: float = 1e-3,
    duration: float = 10.0,
) -> CurvatureReport:
    """Curvature step at constant speed; checks rate and magnitude limits."""
    env = env or SafetyEnvelope()
    st = VehicleState(v=v)
    prev_cmd = 0.0
    max_rate = 0.0
    rate_lim = env.kappa_rate_max(v)
    kmax = env.kappa_max(v)
    rate_ok = max_ok = True
    for _ in range(int(round(duration / dt))):
        req = clamp_request(ControlRequest(0.0, nominal_kappa), st.v, prev_cmd, dt, env)
        nxt = step_vehicle(st, req, dt, lag)
        r = abs(nxt.kappa - st.kappa) / dt
        max_rate = max(max_rate, r)
        rate_ok &= r <= rate_lim * (1 + 1e-9)
        max_ok &= abs(nxt.kappa) <= kmax * (1 + 1e-9)
        prev_cmd = req.curvature
        st = nxt
    target = max(-kmax, min(kmax, nominal_kappa))
    return CurvatureReport(max_rate, rate_ok, max_ok, st.kappa, target)


def circle_closure_error(kappa: float, v: float, dt: float = 1e-3, lag: float = DEFAULT_LAG) -> float:
    """Distance from the start after one period of a constant-curvature circle.

    The vehicle starts already on the circle (actuators settled), so the lag
    plays no role. The period ``2 pi / (v kappa)`` is rounded to whole ticks.
    """
    if kappa == 0 or v <= 0:
        raise ValueError("need non-zero curvature and positive speed")
    n = int(round(2 * math.pi / (v * abs(kappa)) / dt))
    st = VehicleState(v=v, kappa=kappa)
    req = ControlRequest(0.0, kappa)
    for _ in range(n):
        st = step_vehicle(st, req, dt, lag)
    return math.hypot(st.x, st.y)
