"""Auxiliary power system: battery, cabin and rooftop distribution stages.

The cabin stage has 24 fused DC outputs plus the inverter's AC outlets. One DC
output (the feeder) supplies the rooftop stage, whose channels sit either on
the 12 V line directly or behind a 12->24 V step-up converter. Loads are
given in watts at the channel output; ``total_load`` refers them back to the
battery through the conversion efficiencies on the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum


class PowerError(ValueError):
    pass


class Stage(str, Enum):
    CABIN = "cabin"
    ROOFTOP = "rooftop"


class Rail(str, Enum):
    AC_230 = "ac-230"
    DC_12 = "dc-12"
    DC_24 = "dc-24"

    @property
    def voltage(self) -> float:
        return {"ac-230": 230.0, "dc-12": 12.0, "dc-24": 24.0}[self.value]


@dataclass(frozen=True)
class Battery:
    capacity: float = 5000.0  # Wh usable
    soc: float = 1.0
    max_charge_current: float = 90.0
    charge_bus_voltage: float = 12.0

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise PowerError("battery capacity must be positive")
        if not 0.0 <= self.soc <= 1.0:
            raise PowerError(f"soc {self.soc} outside [0, 1]")

    @property
    def charge_power(self) -> float:
        return self.max_charge_current * self.charge_bus_voltage


@dataclass(frozen=True)
class PowerChannel:
    id: str
    stage: Stage
    rail: Rail
    fuse_rating: float
    on: bool = True
    loads: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "rail", Rail(self.rail))
        object.__setattr__(self, "loads", tuple((str(d), float(w)) for d, w in self.loads))
        if self.fuse_rating <= 0:
            raise PowerError(f"{self.id}: fuse rating must be positive")

    @property
    def load(self) -> float:
        return sum(w for _, w in self.loads)


@dataclass(frozen=True)
class PowerTree:
    battery: Battery
    channels: tuple[PowerChannel, ...]
    feeder: str = "cabin-01"
    ac_limit: float = 3000.0
    dc_limit: float = 2160.0
    eff_dc: float = 0.95  # battery -> DC rail
    eff_boost: float = 0.92  # rooftop 12 -> 24 V step-up
    eff_ac: float = 0.90  # battery -> AC inverter

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        for e in (self.eff_dc, self.eff_boost, self.eff_ac):
            if not 0.0 < e <= 1.0:
                raise PowerError(f"efficiency {e} outside (0, 1]")
        ids = [c.id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise PowerError("duplicate channel id")
        feeder = self.channel(self.feeder)
        if feeder.stage != Stage.CABIN or feeder.rail != Rail.DC_12:
            raise PowerError("rooftop feeder must be a cabin dc-12 channel")
        for c in self.channels:
            if c.stage == Stage.CABIN and c.rail == Rail.DC_24:
                raise PowerError(f"{c.id}: no 24 V rail in the cabin stage")
            if c.stage == Stage.ROOFTOP and c.rail == Rail.AC_230:
                raise PowerError(f"{c.id}: no AC on the rooftop stage")

    def channel(self, cid: str) -> PowerChannel:
        for c in self.channels:
            if c.id == cid:
                return c
        raise PowerError(f"unknown channel {cid!r}")

    @property
    def rooftop(self) -> list[PowerChannel]:
        return [c for c in self.channels if c.stage == Stage.ROOFTOP]

    def efficiency(self, c: PowerChannel) -> float:
        """Product of conversion efficiencies from battery to ``c``."""
        if c.rail == Rail.AC_230:
            return self.eff_ac
        if c.rail == Rail.DC_24:
            return self.eff_dc * self.eff_boost
        return self.eff_dc

    def channel_of(self, device: str) -> PowerChannel:
        for c in self.channels:
            if any(d == device for d, _ in c.loads):
                return c
        raise PowerError(f"device {device!r} is not attached to any channel")


def switch_channel(tree: PowerTree, cid: str, on: bool) -> PowerTree:
    tree.channel(cid)
    chans = tuple(replace(c, on=bool(on)) if c.id == cid else c for c in tree.channels)
    return replace(tree, channels=chans)


def set_loads(tree: PowerTree, cid: str, loads) -> PowerTree:
    tree.channel(cid)
    chans = tuple(replace(c, loads=tuple(loads)) if c.id == cid else c for c in tree.channels)
    return replace(tree, channels=chans)


def set_fuse(tree: PowerTree, cid: str, rating: float) -> PowerTree:
    tree.channel(cid)
    chans = tuple(replace(c, fuse_rating=rating) if c.id == cid else c for c in tree.channels)
    return replace(tree, channels=chans)


@dataclass(frozen=True)
class PowerState:
    """Outcome of evaluating a tree: delivered watts and tripped fuses."""

    delivered: dict[str, float] = field(default_factory=dict)
    tripped: tuple[str, ...] = ()
    feeder_draw: float = 0.0  # W on the feeder's 12 V line


def evaluate(tree: PowerTree) -> PowerState:
    delivered: dict[str, float] = {}
    tripped: list[str] = []

    def fuse_ok(c: PowerChannel, watts: float) -> bool:
        if watts / c.rail.voltage > c.fuse_rating:
            tripped.append(c.id)
            return False
        return True

    feeder = tree.channel(tree.feeder)
    roof_draw = 0.0
    for c in tree.rooftop:
        w = c.load if c.on and fuse_ok(c, c.load) else 0.0
        delivered[c.id] = w
        roof_draw += w / tree.eff_boost if c.rail == Rail.DC_24 else w
    feeder_draw = roof_draw + feeder.load
    feeder_live = feeder.on and fuse_ok(feeder, feeder_draw)
    if not feeder_live:
        for c in tree.rooftop:
            delivered[c.id] = 0.0
        feeder_draw = 0.0
    delivered[feeder.id] = feeder.load if feeder_live else 0.0

    for c in tree.channels:
        if c.stage == Stage.CABIN and c.id != tree.feeder:
            delivered[c.id] = c.load if c.on and fuse_ok(c, c.load) else 0.0
    return PowerState(dict(sorted(delivered.items())), tuple(sorted(tripped)), feeder_draw)


def check_fuses(tree: PowerTree) -> list[str]:
    return list(evaluate(tree).tripped)


def total_load(tree: PowerTree) -> float:
    """Battery-side power of everything that is actually powered."""
    st = evaluate(tree)
    return sum(st.delivered[c.id] / tree.efficiency(c) for c in tree.channels)


def rail_loads(tree: PowerTree) -> dict[str, float]:
    """Output-side load on the inverter (ac) and on the DC rail (dc)."""
    st = evaluate(tree)
    ac = sum(st.delivered[c.id] for c in tree.channels if c.rail == Rail.AC_230)
    dc = sum(
        st.delivered[c.id]
        for c in tree.channels
        if c.stage == Stage.CABIN and c.rail != Rail.AC_230 and c.id != tree.feeder
    )
    return {"ac": ac, "dc": dc + st.feeder_draw}


def limit_violations(tree: PowerTree) -> list[str]:
    r = rail_loads(tree)
    out = []
    if r["ac"] > tree.ac_limit:
        out.append(f"ac load {r['ac']:.0f} W exceeds {tree.ac_limit:.0f} W")
    if r["dc"] > tree.dc_limit:
        out.append(f"dc load {r['dc']:.0f} W exceeds {tree.dc_limit:.0f} W")
    return out


def device_powered(tree: PowerTree, device: str) -> bool:
    c = tree.channel_of(device)
    return evaluate(tree).delivered[c.id] > 0


PRACTICALLY_UNBOUNDED_H = 100.0


def endurance(tree: PowerTree, charging: bool = False) -> float:
    """Hours until the battery is empty; ``math.inf`` when charging keeps up."""
    net = total_load(tree) - (tree.battery.charge_power if charging else 0.0)
    if net <= 0:
        return math.inf
    return tree.battery.capacity * tree.battery.soc / net


def discharge(tree: PowerTree, hours: float, charging: bool = False) -> PowerTree:
    net = total_load(tree) - (tree.battery.charge_power if charging else 0.0)
    soc = tree.battery.soc - net * hours / tree.battery.capacity
    soc = min(1.0, max(0.0, soc))
    return replace(tree, battery=replace(tree.battery, soc=soc))


def all_off(tree: PowerTree) -> PowerTree:
    return replace(tree, channels=tuple(replace(c, on=False) for c in tree.channels))


# Per-device draws in W at the channel output. Only the idle/full-load totals
# are known; the split is a plausible calibration and the HPC absorbs the rest.
_CABIN_DC = [
    # channel, device, idle, full
    ("cabin-02", "cabin_pdu", 4.0, 4.0),
    ("cabin-03", "ins", 5.0, 5.0),
    ("cabin-04", "ae_switch", 10.0, 12.0),
    ("cabin-05", "router_5g", 12.0, 20.0),
    ("cabin-06", "v2x", 6.0, 8.0),
    ("cabin-07", "monitors", 30.0, 40.0),
    ("cabin-08", "dbw", 40.0, 45.0),
    ("cabin-10", "radar_fc", 12.0, 15.0),
    ("cabin-11", "radar_fl", 5.0, 6.0),
    ("cabin-12", "radar_fr", 5.0, 6.0),
    ("cabin-13", "radar_rl", 5.0, 6.0),
    ("cabin-14", "radar_rr", 5.0, 6.0),
]
_ROOFTOP = [
    # channel, rail, fuse A, device, idle, full
    ("roof-01", "dc-12", 10.0, "roof_switch", 15.0, 20.0),
    ("roof-02", "dc-12", 5.0, "roof_pdu", 5.0, 5.0),
    ("roof-03", "dc-24", 6.0, "orin_1", 25.0, 75.0),
    ("roof-04", "dc-24", 6.0, "orin_2", 25.0, 75.0),
    ("roof-05", "dc-24", 3.0, "lidar_fl", 20.0, 24.0),
    ("roof-06", "dc-24", 3.0, "lidar_fr", 20.0, 24.0),
    ("roof-07", "dc-24", 3.0, "lidar_rl", 20.0, 24.0),
    ("roof-08", "dc-24", 3.0, "lidar_rr", 20.0, 24.0),
    ("roof-09", "dc-24", 4.0, "lidar_fc", 35.0, 40.0),
    ("roof-10", "dc-12", 5.0, "roof_fans", 15.0, 30.0),
]
_AC = [
    # core switch fixed; HPC chosen so the battery-side totals are 660 / 1100 W
    ("ac-1", "hpc", 199.25, 409.49),
    ("ac-2", "core_switch", 60.0, 70.0),
]
N_CABIN_DC = 24
FEEDER_FUSE = 50.0
CABIN_FUSE = 10.0
AC_FUSE = 10.0
PROFILES = ("idle", "full-load")


def reference_tree(profile: str = "full-load", battery: Battery | None = None) -> PowerTree:
    if profile not in PROFILES:
        raise PowerError(f"unknown power profile {profile!r}")
    col = 0 if profile == "idle" else 1
    cabin_loads = {ch: ((dev, (idle, full)[col]),) for ch, dev, idle, full in _CABIN_DC}
    chans = []
    for i in range(1, N_CABIN_DC + 1):
        cid = f"cabin-{i:02d}"
        fuse = FEEDER_FUSE if cid == "cabin-01" else CABIN_FUSE
        chans.append(PowerChannel(cid, Stage.CABIN, Rail.DC_12, fuse, True, cabin_loads.get(cid, ())))
    for cid, dev, idle, full in _AC:
        chans.append(PowerChannel(cid, Stage.CABIN, Rail.AC_230, AC_FUSE, True, ((dev, (idle, full)[col]),)))
    for cid, rail, fuse, dev, idle, full in _ROOFTOP:
        chans.append(PowerChannel(cid, Stage.ROOFTOP, Rail(rail), fuse, True, ((dev, (idle, full)[col]),)))
    return PowerTree(battery or Battery(), tuple(chans))


class ModbusError(Exception):
    """Modbus exception response; ``code`` follows the protocol numbering."""

    ILLEGAL_ADDRESS = 2
    ILLEGAL_VALUE = 3

    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


FEEDER_REGISTER = 100


class RooftopRegisterMap:
    """Holding-register view of the rooftop stage.

    Register ``n`` (1-based) holds the on/off state of the n-th rooftop channel
    in id order; register 100 holds the cabin feeder state. Writes replace the
    wrapped tree, which is available as ``tree``.
    """

    def __init__(self, tree: PowerTree):
        self.tree = tree
        self._order = sorted(c.id for c in tree.rooftop)

    def _channel_for(self, address: int) -> str:
        if address == FEEDER_REGISTER:
            return self.tree.feeder
        if 1 <= address <= len(self._order):
            return self._order[address - 1]
        raise ModbusError(ModbusError.ILLEGAL_ADDRESS, f"no register at {address}")

    def address_of(self, cid: str) -> int:
        if cid == self.tree.feeder:
            return FEEDER_REGISTER
        return self._order.index(cid) + 1

    def read_holding_registers(self, address: int, count: int = 1) -> list[int]:
        return [int(self.tree.channel(self._channel_for(a)).on) for a in range(address, address + count)]

    def write_register(self, address: int, value: int) -> None:
        cid = self._channel_for(address)
        if value not in (0, 1):
            raise ModbusError(ModbusError.ILLEGAL_VALUE, f"register value must be 0/1, got {value}")
        self.tree = switch_channel(self.tree, cid, bool(value))

    def write_registers(self, address: int, values: list[int]) -> None:
        # validate everything first so a bad value leaves the map untouched
        for a, v in zip(range(address, address + len(values)), values):
            self._channel_for(a)
            if v not in (0, 1):
                raise ModbusError(ModbusError.ILLEGAL_VALUE, f"register value must be 0/1, got {v}")
        for a, v in zip(range(address, address + len(values)), values):
            self.write_register(a, v)
