"""Synthetic data: parameter sampling, motion generation, window construction, files.

Dataset file (TICD) layout, little-endian:
    magic "TICD", u32 version=1, u32 S, u32 n, u64 count
    per sample: n*S*(9+3) f32 readings (per frame, per sensor: rotation
    row-major then acceleration), then S*(6+6) f32 labels (per sensor:
    drift 6D then offset 6D).

Motion file: JSON lines, one record per frame:
    {"t": int, "sensors": [{"R": [9 floats row-major], "a": [3 floats]}, xS]}
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .sensor_model import GRAVITY, ImuFrame, ROOT_SENSOR

TICD_MAGIC = b"TICD"
TICD_VERSION = 1

DEFAULT_WINDOW = 256


class DatasetError(ValueError):
    """Malformed motion or dataset file."""


@dataclass(frozen=True)
class ParamDistribution:
    """Per-axis uniform bounds (degrees) for random drift and offset draws."""

    offset_bounds: tuple = ((-45.0, 45.0), (-45.0, 45.0), (-45.0, 45.0))
    drift_bounds: tuple = ((-20.0, 20.0), (-60.0, 60.0), (-20.0, 20.0))
    drift_root_bounds: tuple = ((-20.0, 20.0), (0.0, 0.0), (-20.0, 20.0))

    def scaled(self, factor: float) -> "ParamDistribution":
        sc = lambda bs: tuple((lo * factor, hi * factor) for lo, hi in bs)
        return ParamDistribution(
            offset_bounds=sc(self.offset_bounds),
            drift_bounds=sc(self.drift_bounds),
            drift_root_bounds=sc(self.drift_root_bounds),
        )


def _draw_euler(rng: np.random.Generator, bounds) -> np.ndarray:
    return np.array([rng.uniform(lo, hi) for lo, hi in bounds])


def sample_params(
    dist: ParamDistribution,
    is_root: bool,
    seed: int | np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One (drift, offset) rotation pair from the distribution.

    Draw order is fixed (drift x, y, z then offset x, y, z) so a seed fully
    determines the pair. Root drift has zero yaw by construction.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    drift_bounds = dist.drift_root_bounds if is_root else dist.drift_bounds
    drift = rotmath.mat_from_euler(_draw_euler(rng, drift_bounds))
    offset = rotmath.mat_from_euler(_draw_euler(rng, dist.offset_bounds))
    return drift, offset


@dataclass
class MotionSequence:
    """Ground-truth (R_GB, a_G) tracks for S sensors at a fixed rate."""

    orientations: np.ndarray  # (T, S, 3, 3)
    accels: np.ndarray        # (T, S, 3)
    rate_hz: float = 30.0

    def __len__(self) -> int:
        return self.orientations.shape[0]

    @property
    def sensors(self) -> int:
        return self.orientations.shape[1]

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate_hz

    def frame(self, t: int) -> ImuFrame:
        return ImuFrame(t=t, orientations=self.orientations[t], accels=self.accels[t])


@dataclass
class TrainingSample:
    """A measured window plus the constant (drift, offset) labels that made it."""

    orientations: np.ndarray  # (n, S, 3, 3) measured R_IMU
    accels: np.ndarray        # (n, S, 3) measured a_IMU
    drift_6d: np.ndarray      # (S, 6)
    offset_6d: np.ndarray     # (S, 6)

    @property
    def n(self) -> int:
        return self.orientations.shape[0]

    @property
    def sensors(self) -> int:
        return self.orientations.shape[1]

    def drift(self) -> np.ndarray:
        return np.stack([rotmath.mat_from_rot6d(v) for v in self.drift_6d])

    def offset(self) -> np.ndarray:
        return np.stack([rotmath.mat_from_rot6d(v) for v in self.offset_6d])


def make_sample(
    motion: MotionSequence,
    start: int,
    dist: ParamDistribution,
    seed: int,
    leakage: bool = True,
    n: int = DEFAULT_WINDOW,
    root_index: int = ROOT_SENSOR,
) -> TrainingSample:
    """Slice n frames from motion and corrupt them with one random state.

    One (drift, offset) pair per sensor, held constant over the window;
    labels are recorded in 6D form.
    """
    if start < 0 or start + n > len(motion):
        raise ValueError(f"window [{start}, {start + n}) out of range for motion of length {len(motion)}")
    s_count = motion.sensors
    rng = np.random.default_rng(seed)
    drift = np.empty((s_count, 3, 3))
    offset = np.empty((s_count, 3, 3))
    for s in range(s_count):
        drift[s], offset[s] = sample_params(dist, is_root=(s == root_index), seed=rng)
    ori = np.einsum("sij,tsjk,skl->tsil", drift, motion.orientations[start : start + n], offset)
    acc = np.einsum("sij,tsj->tsi", drift, motion.accels[start : start + n])
    if leakage:
        leak = GRAVITY[None, :] - np.einsum("sij,j->si", drift, GRAVITY)
        acc = acc + leak[None, :, :]
    drift_6d = np.stack([rotmath.rot6d_from_mat(d) for d in drift])
    offset_6d = np.stack([rotmath.rot6d_from_mat(o) for o in offset])
    return TrainingSample(orientations=ori, accels=acc, drift_6d=drift_6d, offset_6d=offset_6d)


# ---------------------------------------------------------------------------
# Parametric motion generator


@dataclass(frozen=True)
class MotionSpec:
    """Parameters of the sinusoidal motion generator.

    Each sensor's orientation is a shared slow heading times a per-sensor
    base orientation times 2..5 sinusoidal axis-angle components; the
    amplitude knob controls how much of the Euler grid a window can cover.
    Accelerations come from double-differenced synthetic limb endpoints.
    """

    duration_s: float = 60.0
    rate_hz: float = 30.0
    sensors: int = 6
    amplitude_deg: float = 60.0
    min_components: int = 2
    max_components: int = 5
    freq_range_hz: tuple = (0.15, 0.9)
    heading_amplitude_deg: float | None = None  # default: half the amplitude
    heading_period_s: float = 25.0
    limb_length_m: float = 0.35
    # Relative motion scale per sensor; limbs move most, hip least.
    sensor_activity: tuple = (1.0, 1.0, 1.0, 1.0, 0.45, 0.3)

    @classmethod
    def active(cls, duration_s: float = 60.0, rate_hz: float = 30.0) -> "MotionSpec":
        return cls(duration_s=duration_s, rate_hz=rate_hz)

    @classmethod
    def static(cls, duration_s: float = 60.0, rate_hz: float = 30.0) -> "MotionSpec":
        return cls(duration_s=duration_s, rate_hz=rate_hz, amplitude_deg=0.0)


def gen_motion(spec: MotionSpec, seed: int) -> MotionSequence:
    """Deterministic synthetic ground-truth motion per the spec and seed."""
    if spec.duration_s <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    frames = max(2, int(round(spec.duration_s * spec.rate_hz)))
    t = np.arange(frames) / spec.rate_hz
    s_count = spec.sensors
    head_amp = (
        spec.heading_amplitude_deg
        if spec.heading_amplitude_deg is not None
        else 0.5 * spec.amplitude_deg
    )
    head_phase = rng.uniform(0, 2 * math.pi)
    heading_deg = head_amp * np.sin(2 * math.pi * t / spec.heading_period_s + head_phase)
    heading = rotmath.mats_from_eulers(
        np.stack([np.zeros(frames), heading_deg, np.zeros(frames)], axis=-1)
    )

    orientations = np.empty((frames, s_count, 3, 3))
    for s in range(s_count):
        activity = spec.sensor_activity[s % len(spec.sensor_activity)]
        base = rotmath.random_rotation(rng)
        k = int(rng.integers(spec.min_components, spec.max_components + 1))
        track = np.broadcast_to(np.eye(3), (frames, 3, 3)).copy()
        for _ in range(k):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            amp = spec.amplitude_deg * activity * rng.uniform(0.4, 1.0)
            freq = rng.uniform(*spec.freq_range_hz)
            phase = rng.uniform(0, 2 * math.pi)
            angles = amp * np.sin(2 * math.pi * freq * t + phase)
            comp = _axis_angle_track(axis, angles)
            track = np.einsum("tij,tjk->tik", track, comp)
        orientations[:, s] = np.einsum("tij,jk,tkl->til", heading, base, track)

    accels = endpoint_accels(orientations, spec.rate_hz, spec.limb_length_m)
    return MotionSequence(orientations=orientations, accels=accels, rate_hz=spec.rate_hz)


def _axis_angle_track(axis: np.ndarray, angles_deg: np.ndarray) -> np.ndarray:
    a = np.radians(angles_deg)
    kx = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    kx2 = kx @ kx
    return (
        np.eye(3)[None, :, :]
        + np.sin(a)[:, None, None] * kx[None, :, :]
        + (1 - np.cos(a))[:, None, None] * kx2[None, :, :]
    )


LIMB_VECTOR = np.array([0.0, -1.0, 0.0])  # unit bone direction, scaled by limb length


def endpoint_accels(
    orientations: np.ndarray, rate_hz: float, limb_length_m: float
) -> np.ndarray:
    """Acceleration from double-differenced limb endpoint positions.

    3-frame central stencil; edge frames copy their nearest interior value.
    """
    pos = np.einsum("tsij,j->tsi", orientations, LIMB_VECTOR * limb_length_m)
    acc = np.zeros_like(pos)
    acc[1:-1] = (pos[2:] - 2 * pos[1:-1] + pos[:-2]) * rate_hz**2
    acc[0] = acc[1]
    acc[-1] = acc[-2]
    return acc


# ---------------------------------------------------------------------------
# Motion file I/O (JSON lines)


def save_motion(motion: MotionSequence, path) -> None:
    with open(path, "w") as f:
        for t in range(len(motion)):
            rec = {
                "t": t,
                "sensors": [
                    {
                        "R": [float(v) for v in motion.orientations[t, s].reshape(9)],
                        "a": [float(v) for v in motion.accels[t, s]],
                    }
                    for s in range(motion.sensors)
                ],
            }
            f.write(json.dumps(rec) + "\n")


def load_motion(path, rate_hz: float = 30.0) -> MotionSequence:
    oris = []
    accs = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                sensors = rec["sensors"]
                ori = np.array([s["R"] for s in sensors], dtype=float).reshape(-1, 3, 3)
                acc = np.array([s["a"] for s in sensors], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed frame record") from exc
            if not np.all(np.isfinite(ori)) or not np.all(np.isfinite(acc)):
                raise DatasetError(f"{path}:{lineno}: non-finite field")
            oris.append(ori)
            accs.append(acc)
    if not oris:
        raise DatasetError(f"{path}: no frames")
    return MotionSequence(
        orientations=np.stack(oris), accels=np.stack(accs), rate_hz=rate_hz
    )


# ---------------------------------------------------------------------------
# Dataset file I/O (TICD binary)

_HEADER = struct.Struct("<4sIIIQ")


def write_dataset(samples: list[TrainingSample], path, sensors: int | None = None, n: int | None = None) -> None:
    """Write samples to a TICD file; sensors/n default to the first sample's."""
    if samples:
        sensors = samples[0].sensors if sensors is None else sensors
        n = samples[0].n if n is None else n
    else:
        sensors = 6 if sensors is None else sensors
        n = DEFAULT_WINDOW if n is None else n
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TICD_MAGIC, TICD_VERSION, sensors, n, len(samples)))
        for i, smp in enumerate(samples):
            if smp.sensors != sensors or smp.n != n:
                raise DatasetError(f"sample {i} shape differs from header ({smp.n}x{smp.sensors})")
            readings = np.concatenate(
                [smp.orientations.reshape(n, sensors, 9), smp.accels], axis=-1
            ).astype("<f4")
            labels = np.concatenate([smp.drift_6d, smp.offset_6d], axis=-1).astype("<f4")
            f.write(readings.tobytes())
            f.write(labels.tobytes())


def read_dataset(path) -> tuple[list[TrainingSample], int, int]:
    """Read a TICD file; returns (samples, sensors, n)."""
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DatasetError(f"{path}: truncated header")
        magic, version, sensors, n, count = _HEADER.unpack(head)
        if magic != TICD_MAGIC:
            raise DatasetError(f"{path}: bad magic {magic!r}")
        if version != TICD_VERSION:
            raise DatasetError(f"{path}: unsupported version {version}")
        samples = []
        read_bytes = n * sensors * 12 * 4
        label_bytes = sensors * 12 * 4
        for i in range(count):
            buf = f.read(read_bytes + label_bytes)
            if len(buf) < read_bytes + label_bytes:
                raise DatasetError(f"{path}: truncated record {i}")
            readings = np.frombuffer(buf, dtype="<f4", count=n * sensors * 12).reshape(n, sensors, 12)
            labels = np.frombuffer(buf, dtype="<f4", offset=read_bytes).reshape(sensors, 12)
            if not np.all(np.isfinite(readings)) or not np.all(np.isfinite(labels)):
                raise DatasetError(f"{path}: non-finite field in record {i}")
            samples.append(
                TrainingSample(
                    orientations=readings[:, :, :9].reshape(n, sensors, 3, 3).astype(float),
                    accels=readings[:, :, 9:].astype(float),
                    drift_6d=labels[:, :6].astype(float),
                    offset_6d=labels[:, 6:].astype(float),
                )
            )
    return samples, sensors, n
