"""Ground-truth drift/offset trajectories for simulation.

A schedule is a sum of per-sensor, per-axis segments over time; each
segment contributes Euler degrees to either the drift or the offset of one
sensor (or all, or all non-root). Supported kinds:

* const: fixed angle over [start, end)
* step:  fixed angle from start onwards (alias for const with open end)
* ramp:  rate * (t - start), clamped at end

The CLI mini-grammar is semicolon-joined terms, e.g.
``ramp:sensor=3,axis=y,rate=0.07`` or
``step:sensor=all,axis=x,deg=10,at=30`` or ``identity``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .sensor_model import CalibState, ROOT_SENSOR

_AXES = {"x": 0, "y": 1, "z": 2}
_KINDS = ("const", "step", "ramp")
_PARAMS = ("drift", "offset")


class ScheduleError(ValueError):
    """Malformed or non-covering schedule."""


@dataclass(frozen=True)
class Segment:
    kind: str                 # const | step | ramp
    sensor: int | str         # index, "all", or "nonroot"
    axis: str = "y"
    param: str = "drift"
    deg: float = 0.0          # const/step magnitude
    rate_deg_s: float = 0.0   # ramp slope
    start_s: float = 0.0
    end_s: float = math.inf

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ScheduleError(f"unknown segment kind {self.kind!r}")
        if self.axis not in _AXES:
            raise ScheduleError(f"unknown axis {self.axis!r}")
        if self.param not in _PARAMS:
            raise ScheduleError(f"unknown param {self.param!r}")
        if self.end_s < self.start_s:
            raise ScheduleError("segment ends before it starts")

    def angle_at(self, t_s: np.ndarray) -> np.ndarray:
        t_s = np.asarray(t_s, dtype=float)
        if self.kind == "ramp":
            active = np.clip(t_s, self.start_s, self.end_s) - self.start_s
            return self.rate_deg_s * active
        hold = self.deg * ((t_s >= self.start_s) & (t_s < self.end_s))
        return hold

    def sensor_indices(self, sensors: int, root_index: int) -> list[int]:
        if self.sensor == "all":
            return list(range(sensors))
        if self.sensor == "nonroot":
            return [s for s in range(sensors) if s != root_index]
        idx = int(self.sensor)
        if not 0 <= idx < sensors:
            raise ScheduleError(f"sensor index {idx} out of range")
        return [idx]


@dataclass
class DriftSchedule:
    """Additive piecewise drift/offset trajectory for S sensors."""

    segments: tuple = ()
    sensors: int = 6
    root_index: int = ROOT_SENSOR
    duration_s: float | None = None  # declared coverage, if any

    @classmethod
    def identity(cls, sensors: int = 6) -> "DriftSchedule":
        return cls(segments=(), sensors=sensors)

    def validate(self, motion_duration_s: float) -> None:
        if self.duration_s is not None and self.duration_s < motion_duration_s:
            raise ScheduleError(
                f"schedule covers {self.duration_s}s but motion lasts {motion_duration_s:.2f}s"
            )

    def angles_at(self, t_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Euler degree tracks; returns (drift, offset), each (T, S, 3)."""
        t_s = np.atleast_1d(np.asarray(t_s, dtype=float))
        out = {
            "drift": np.zeros((t_s.size, self.sensors, 3)),
            "offset": np.zeros((t_s.size, self.sensors, 3)),
        }
        for seg in self.segments:
            contrib = seg.angle_at(t_s)
            for s in seg.sensor_indices(self.sensors, self.root_index):
                out[seg.param][:, s, _AXES[seg.axis]] += contrib
        return out["drift"], out["offset"]

    def states(self, t_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rotation tracks; returns (drift, offset), each (T, S, 3, 3)."""
        d_ang, o_ang = self.angles_at(t_s)
        return rotmath.mats_from_eulers(d_ang), rotmath.mats_from_eulers(o_ang)

    def state_at(self, t_s: float) -> CalibState:
        drift, offset = self.states(np.array([t_s]))
        return CalibState(drift=drift[0], offset=offset[0])


def parse_schedule(text: str, sensors: int = 6) -> DriftSchedule:
    """Parse the CLI schedule mini-grammar into a DriftSchedule."""
    text = text.strip()
    if text in ("", "identity"):
        return DriftSchedule.identity(sensors)
    segments = []
    for term in text.split(";"):
        term = term.strip()
        if not term:
            continue
        if ":" not in term:
            raise ScheduleError(f"bad schedule term {term!r} (expected kind:key=value,...)")
        kind, _, rest = term.partition(":")
        kind = kind.strip()
        kv = {}
        for pair in rest.split(","):
            if not pair.strip():
                continue
            if "=" not in pair:
                raise ScheduleError(f"bad schedule field {pair!r}")
            key, _, val = pair.partition("=")
            kv[key.strip()] = val.strip()
        sensor: int | str = kv.pop("sensor", "all")
        try:
            if sensor not in ("all", "nonroot"):
                sensor = int(sensor)
            seg = Segment(
                kind=kind,
                sensor=sensor,
                axis=kv.pop("axis", "y"),
                param=kv.pop("param", kv.pop("target", "drift")),
                deg=float(kv.pop("deg", 0.0)),
                rate_deg_s=float(kv.pop("rate", 0.0)),
                start_s=float(kv.pop("at", kv.pop("start", 0.0))),
                end_s=float(kv.pop("end", "inf")),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScheduleError):
                raise
            raise ScheduleError(f"bad schedule term {term!r}: {exc}") from exc
        if kv:
            raise ScheduleError(f"unknown schedule fields {sorted(kv)} in {term!r}")
        segments.append(seg)
    return DriftSchedule(segments=tuple(segments), sensors=sensors)
