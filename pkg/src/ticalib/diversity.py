"""Rotation diversity on a 15-degree Euler grid and the calibration trigger."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rotmath

GRID_SHAPE = (24, 12, 24)
CELL_DEG = 15.0
GRID_CELLS = GRID_SHAPE[0] * GRID_SHAPE[1] * GRID_SHAPE[2]  # 6912

# Per-sensor trigger thresholds in sensor_model order:
# left forearm, right forearm, left lower leg, right lower leg, head, hip.
DEFAULT_THRESHOLDS = (30.0, 50.0, 30.0, 30.0, 25.0, 15.0)


def euler_cell(r: np.ndarray) -> tuple[int, int, int]:
    """Grid cell (i, j, k) of a rotation; bin boundaries are lower-inclusive."""
    i, j, k = euler_cells(np.asarray(r, dtype=float)[None, ...])[0]
    return int(i), int(j), int(k)


def euler_cells(rs: np.ndarray) -> np.ndarray:
    """Vectorized euler_cell over (..., 3, 3); returns integer (..., 3)."""
    e = rotmath.eulers_from_mats(rs)
    idx = np.floor((e + np.array([180.0, 90.0, 180.0])) / CELL_DEG).astype(int)
    return np.clip(idx, 0, np.array(GRID_SHAPE) - 1)


class EulerGrid:
    """Occupancy counts over the discretized Euler angle space."""

    def __init__(self):
        self.counts = np.zeros(GRID_SHAPE, dtype=np.int64)

    def add(self, r: np.ndarray) -> None:
        i, j, k = euler_cell(r)
        self.counts[i, j, k] += 1

    def add_many(self, rs: np.ndarray) -> None:
        cells = euler_cells(np.asarray(rs, dtype=float))
        np.add.at(self.counts, (cells[..., 0], cells[..., 1], cells[..., 2]), 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def rd(self) -> int:
        return int(np.count_nonzero(self.counts))


def rotation_diversity(rotations: np.ndarray) -> int:
    """Number of distinct occupied grid cells over a rotation sequence."""
    rotations = np.asarray(rotations, dtype=float)
    if rotations.size == 0:
        raise ValueError("rotation diversity of an empty sequence is undefined")
    cells = euler_cells(rotations.reshape(-1, 3, 3))
    flat = np.ravel_multi_index((cells[:, 0], cells[:, 1], cells[:, 2]), GRID_SHAPE)
    return int(np.unique(flat).size)


def cell_center_rotations() -> np.ndarray:
    """One rotation at the center of every grid cell (6912 total)."""
    xs = -180.0 + CELL_DEG * (np.arange(GRID_SHAPE[0]) + 0.5)
    ys = -90.0 + CELL_DEG * (np.arange(GRID_SHAPE[1]) + 0.5)
    zs = -180.0 + CELL_DEG * (np.arange(GRID_SHAPE[2]) + 0.5)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    eulers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    return rotmath.mats_from_eulers(eulers)


@dataclass(frozen=True)
class TriggerConfig:
    """Per-sensor RD thresholds; inf disables the trigger for a sensor."""

    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        if any(t < 1 for t in self.thresholds):
            raise ValueError("trigger thresholds must be >= 1")

    @classmethod
    def disabled(cls, sensors: int = 6) -> "TriggerConfig":
        return cls(thresholds=(float("inf"),) * sensors)

    @classmethod
    def uniform(cls, value: float, sensors: int = 6) -> "TriggerConfig":
        return cls(thresholds=(value,) * sensors)


def should_update(rd: int, sensor: int, cfg: TriggerConfig) -> bool:
    """Strict RD > T_R gate."""
    return rd > cfg.thresholds[sensor]
