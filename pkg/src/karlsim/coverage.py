"""Field-of-view tests, planar coverage grids, blind spots and redundancy."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from karlsim.sensors import MODALITY_GROUPS, VEHICLE_FOOTPRINT, Modality, SensorSpec


class GridError(ValueError):
    pass


def _wrap_deg(a: np.ndarray) -> np.ndarray:
    """Wrap angles to [-180, 180)."""
    return (a + 180.0) % 360.0 - 180.0


def covers_many(s: SensorSpec, x, y, z) -> np.ndarray:
    """Vectorised :func:`covers` over broadcastable coordinate arrays."""
    px, py, pz = s.pose.position
    dx = np.asarray(x, dtype=float) - px
    dy = np.asarray(y, dtype=float) - py
    dz = np.asarray(z, dtype=float) - pz
    horiz = np.hypot(dx, dy)
    rng = np.hypot(horiz, dz)
    f = s.frustum
    ok = (rng >= f.min_range) & (rng <= f.max_range)
    if s.modality != Modality.LIDAR_ROTATING and f.hfov < 360:
        az = np.degrees(np.arctan2(dy, dx))
        ok &= np.abs(_wrap_deg(az - s.pose.yaw)) <= f.hfov / 2
    elev = np.degrees(np.arctan2(dz, horiz))
    # boresight elevation is -pitch since pitch is positive downwards
    ok &= np.abs(elev + s.pose.pitch) <= f.vfov / 2
    return ok


def covers(s: SensorSpec, p: tuple[float, float, float]) -> bool:
    return bool(covers_many(s, p[0], p[1], p[2]))


@dataclass(frozen=True)
class GridSpec:
    extent: float
    cell: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cell) and self.cell > 0):
            raise GridError(f"cell size must be positive, got {self.cell}")
        if not (math.isfinite(self.extent) and self.extent >= 0):
            raise GridError(f"extent must be non-negative, got {self.extent}")

    @property
    def n(self) -> int:
        return int(math.ceil(2 * self.extent / self.cell - 1e-9))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        k = (np.arange(self.n) + 0.5) * self.cell - self.extent
        return self.center[0] + k, self.center[1] + k


@dataclass
class CoverageGrid:
    spec: GridSpec
    height: float
    xs: np.ndarray
    ys: np.ndarray
    counts: dict[Modality, np.ndarray]  # shape (len(ys), len(xs))
    excluded: np.ndarray

    @property
    def cell_area(self) -> float:
        return self.spec.cell**2

    def group_counts(self, group: str) -> np.ndarray:
        out = np.zeros(self.excluded.shape, dtype=int)
        for m, c in self.counts.items():
            if m.group == group:
                out += c
        return out

    def total(self) -> np.ndarray:
        return sum(self.counts.values(), np.zeros(self.excluded.shape, dtype=int))

    def bitmask(self) -> np.ndarray:
        """Bit i set when the i-th entry of ``MODALITY_GROUPS`` covers the cell."""
        mask = np.zeros(self.excluded.shape, dtype=np.uint8)
        for bit, group in enumerate(MODALITY_GROUPS):
            mask |= (self.group_counts(group) > 0).astype(np.uint8) << bit
        return mask


def footprint_mask(xx: np.ndarray, yy: np.ndarray, footprint=VEHICLE_FOOTPRINT) -> np.ndarray:
    (x0, x1), half_w = footprint
    return (xx >= x0) & (xx <= x1) & (np.abs(yy) <= half_w)


def compute_coverage(
    rig: Iterable[SensorSpec], grid: GridSpec, height: float = 1.0, footprint=VEHICLE_FOOTPRINT
) -> CoverageGrid:
    xs, ys = grid.axes()
    xx, yy = np.meshgrid(xs, ys)
    counts = {m: np.zeros(xx.shape, dtype=int) for m in Modality}
    for s in rig:
        counts[s.modality] += covers_many(s, xx, yy, height)
    excluded = footprint_mask(xx, yy, footprint) if footprint is not None else np.zeros(xx.shape, bool)
    return CoverageGrid(grid, height, xs, ys, counts, excluded)


def _select(g: CoverageGrid, modality: Modality | str) -> np.ndarray:
    if isinstance(modality, Modality):
        return g.counts[modality]
    if modality in MODALITY_GROUPS:
        return g.group_counts(modality)
    return g.counts[Modality(modality)]


def blind_spot_area(g: CoverageGrid, modality: Modality | str) -> float:
    """Area of non-excluded cells that no sensor of ``modality`` sees."""
    c = _select(g, modality)
    return float(np.count_nonzero((c == 0) & ~g.excluded)) * g.cell_area


def redundancy_histogram(g: CoverageGrid) -> dict[int, int]:
    tot = g.total()[~g.excluded]
    return dict(sorted(Counter(int(k) for k in tot.ravel()).items()))


def vehicle_center(footprint=VEHICLE_FOOTPRINT) -> tuple[float, float]:
    (x0, x1), _ = footprint
    return ((x0 + x1) / 2, 0.0)


def ring_counts(
    rig: Iterable[SensorSpec],
    radius: float,
    height: float = 1.0,
    n_bins: int = 360,
    center: tuple[float, float] | None = None,
) -> dict[str, np.ndarray]:
    """Per-azimuth covering-sensor counts on a circle around the vehicle.

    Bin ``k`` is evaluated at azimuth ``k * 360 / n_bins`` degrees. Returns the
    counts per modality group plus ``"total"``.
    """
    cx, cy = center if center is not None else vehicle_center()
    az = np.radians(np.arange(n_bins) * 360.0 / n_bins)
    x = cx + radius * np.cos(az)
    y = cy + radius * np.sin(az)
    out = {g: np.zeros(n_bins, dtype=int) for g in MODALITY_GROUPS}
    for s in rig:
        out[s.modality.group] += covers_many(s, x, y, height)
    out["total"] = sum(out[g] for g in MODALITY_GROUPS)
    return out


COVERAGE_COLUMNS = ("x", "y", "camera_n", "lidar_n", "radar_n")


def coverage_rows(g: CoverageGrid) -> list[tuple]:
    groups = {name: g.group_counts(name) for name in MODALITY_GROUPS}
    rows = []
    for i, y in enumerate(g.ys):
        for j, x in enumerate(g.xs):
            if g.excluded[i, j]:
                continue
            rows.append(
                (round(float(x), 6), round(float(y), 6))
                + tuple(int(groups[name][i, j]) for name in MODALITY_GROUPS)
            )
    return rows


def write_coverage_csv(g: CoverageGrid, fp: str | Path) -> None:
    with open(fp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COVERAGE_COLUMNS)
        w.writerows(coverage_rows(g))
