"""The dynamic calibration runtime: buffering, gating, state updates, metrics.

The loop keeps an n-frame buffer of raw readings. When the buffer is full
and the timing signal fires, the known drift/offset is removed from the
buffered data, the estimator runs once, rotation diversity is computed per
sensor, and only sensors whose RD strictly exceeds their threshold get the
delta applied (drift right-multiplied, offset left-multiplied). The buffer
is then cleared.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .diversity import TriggerConfig, rotation_diversity, should_update
from .estimator import Window, kabsch as _project_so3
from .schedule import DriftSchedule
from .sensor_model import GRAVITY, SENSOR_NAMES, CalibState, ImuFrame, ROOT_SENSOR, calibrate
from .synth import MotionSequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibratorConfig:
    n: int = 256                 # buffer length, frames
    t_interval: float = 1.0      # seconds between estimator runs
    rate_hz: float = 30.0
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    root_index: int = ROOT_SENSOR

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("buffer length must be >= 2")
        if self.t_interval <= 0:
            raise ValueError("t_interval must be positive")

    @property
    def period_frames(self) -> int:
        return max(1, int(round(self.rate_hz * self.t_interval)))


@dataclass
class PassEvent:
    """Diagnostics of one estimation pass."""

    frame: int
    rd: np.ndarray          # (S,) int
    triggered: np.ndarray   # (S,) bool
    error: str | None = None


class Calibrator:
    """Stateful per-stream calibrator (Alg.-2-style loop)."""

    def __init__(self, config: CalibratorConfig, estimator, sensors: int = 6):
        self.config = config
        self.estimator = estimator
        self.sensors = sensors
        self.state = CalibState.identity(sensors)
        self.events: list[PassEvent] = []
        self._buf_ori: list[np.ndarray] = []
        self._buf_acc: list[np.ndarray] = []
        self._buf_gt: list[ImuFrame] = []
        self._last_truth = None
        self._last_t = None

    @property
    def buffer_len(self) -> int:
        return len(self._buf_ori)

    def step(self, frame: ImuFrame, gt_frame: ImuFrame | None = None, truth=None) -> ImuFrame:
        """Calibrate one frame, buffer it, maybe run an estimation pass.

        gt_frame (ground-truth readings) and truth ((drift, offset) arrays at
        this frame) are harness-side context for the oracle and Procrustes
        estimators; the TIC estimator ignores them.
        """
        if self._last_t is not None and frame.t <= self._last_t:
            raise ValueError(f"out-of-order frame {frame.t} after {self._last_t}")
        self._last_t = frame.t
        out = calibrate(frame, self.state)
        self._buf_ori.append(frame.orientations)
        self._buf_acc.append(frame.accels)
        if gt_frame is not None:
            self._buf_gt.append(gt_frame)
        if truth is not None:
            self._last_truth = truth
        if self.buffer_len > self.config.n:
            self._buf_ori.pop(0)
            self._buf_acc.pop(0)
            if self._buf_gt:
                self._buf_gt.pop(0)
        # Estimation runs on one-second boundaries once the buffer is full.
        if self.buffer_len == self.config.n and (frame.t + 1) % self.config.period_frames == 0:
            self._run_pass(frame.t)
        return out

    def _run_pass(self, frame_idx: int) -> None:
        ori = np.stack(self._buf_ori)
        acc = np.stack(self._buf_acc)
        # Remove the known drift and offset from the buffered data.
        removed_ori = np.einsum("sji,tsjk,slk->tsil", self.state.drift, ori, self.state.offset)
        removed_acc = np.einsum("sji,tsj->tsi", self.state.drift, acc)
        window = Window(orientations=removed_ori, accels=removed_acc)
        gt = None
        if len(self._buf_gt) == self.config.n:
            labels = self._last_truth
            gt = Window(
                orientations=np.stack([f.orientations for f in self._buf_gt]),
                accels=np.stack([f.accels for f in self._buf_gt]),
                drift=None if labels is None else labels[0],
                offset=None if labels is None else labels[1],
            )
        rd = np.array(
            [rotation_diversity(removed_ori[:, s]) for s in range(self.sensors)], dtype=int
        )
        triggered = np.zeros(self.sensors, dtype=bool)
        try:
            est = self.estimator.estimate(window, gt=gt, state=self.state)
        except Exception as exc:  # estimator failure: keep state, log, move on
            log.warning("estimator failed at frame %d: %s", frame_idx, exc)
            self.events.append(PassEvent(frame=frame_idx, rd=rd, triggered=triggered, error=str(exc)))
            self._clear()
            return
        for s in range(self.sensors):
            if should_update(int(rd[s]), s, self.config.trigger):
                # Re-project after composing: non-orthogonality would
                # otherwise double on every update and eventually explode.
                self.state.drift[s] = _project_so3(self.state.drift[s] @ est.delta_drift[s])
                self.state.offset[s] = _project_so3(est.delta_offset[s] @ self.state.offset[s])
                self.state.last_update_frame[s] = frame_idx
                triggered[s] = True
        if np.any(triggered):
            self.state.last_trigger_frame = frame_idx
        self.events.append(PassEvent(frame=frame_idx, rd=rd, triggered=triggered))
        self._clear()

    def _clear(self) -> None:
        self._buf_ori.clear()
        self._buf_acc.clear()
        self._buf_gt.clear()


# ---------------------------------------------------------------------------
# Metrics


def ome(calibrated: np.ndarray, gt_bone: np.ndarray, root_yaw: np.ndarray) -> float:
    """Orientation measurement error in degrees, in the ego-yaw frame.

    The calibrated orientation is mapped by the measured root heading;
    gt_bone is expected in its own ego-yaw frame already.
    """
    return float(rotmath.geodesic_deg(np.asarray(root_yaw).T @ np.asarray(calibrated), gt_bone))


def ame(calibrated_accel: np.ndarray, gt_accel: np.ndarray, root_yaw: np.ndarray) -> float:
    """Acceleration measurement error (m/s^2) after ego-yaw mapping."""
    yt = np.asarray(root_yaw).T
    return float(np.linalg.norm(yt @ np.asarray(calibrated_accel) - yt @ np.asarray(gt_accel)))


def _yaw_angles(mats: np.ndarray) -> np.ndarray:
    """Vectorized heading angle (radians) with the yaw_decompose fallback."""
    cos1 = np.cos(np.radians(1.0))
    fwd_ok = np.abs(mats[..., 1, 2]) < cos1
    psi_fwd = np.arctan2(mats[..., 0, 2], mats[..., 2, 2])
    psi_side = np.arctan2(-mats[..., 2, 0], mats[..., 0, 0])
    side_ok = np.abs(mats[..., 1, 0]) < cos1
    return np.where(fwd_ok, psi_fwd, np.where(side_ok, psi_side, 0.0))


@dataclass
class MetricsReport:
    """Per-frame, per-sensor calibration quality of a simulation run."""

    ome_deg: np.ndarray          # (T, S)
    ame_ms2: np.ndarray          # (T, S)
    rd: np.ndarray               # (T, S) RD at the most recent pass
    triggered: np.ndarray        # (T, S) bool, update applied at this frame
    drift_angle_deg: np.ndarray  # (T, S) estimated state angle from identity
    offset_angle_deg: np.ndarray # (T, S)
    rate_hz: float
    sensor_names: tuple
    events: list = field(default_factory=list)

    @property
    def frames(self) -> int:
        return self.ome_deg.shape[0]

    def mean_ome(self, start_s: float = 0.0, sensors=None) -> float:
        i0 = int(start_s * self.rate_hz)
        block = self.ome_deg[i0:, :] if sensors is None else self.ome_deg[i0:, sensors]
        return float(block.mean())

    def final_ome(self) -> float:
        return float(self.ome_deg[-1].mean())

    def per_sensor_means(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ome_deg.mean(axis=0), self.ame_ms2.mean(axis=0)

    def to_csv(self, path) -> None:
        """Delimited output: frame,sensor,ome_deg,ame_ms2,rd,triggered,drift_angle_deg,offset_angle_deg."""
        t_count, s_count = self.ome_deg.shape
        with open(path, "w") as f:
            f.write("frame,sensor,ome_deg,ame_ms2,rd,triggered,drift_angle_deg,offset_angle_deg\n")
            for t in range(t_count):
                for s in range(s_count):
                    f.write(
                        f"{t},{s},{self.ome_deg[t, s]:.9g},{self.ame_ms2[t, s]:.9g},"
                        f"{int(self.rd[t, s])},{int(self.triggered[t, s])},"
                        f"{self.drift_angle_deg[t, s]:.9g},{self.offset_angle_deg[t, s]:.9g}\n"
                    )


def _angles_from_identity(mats: np.ndarray) -> np.ndarray:
    tr = np.einsum("...ii->...", mats)
    return np.degrees(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))


def run_simulation(
    motion: MotionSequence,
    drift_schedule: DriftSchedule,
    cfg: CalibratorConfig,
    estimator,
    leakage: bool = True,
    gravity: np.ndarray = GRAVITY,
) -> MetricsReport:
    """Stream a motion through the measurement model and the calibrator.

    Ground truth comes from the schedule; OME/AME are evaluated in the
    ego-yaw frames of the calibrated and ground-truth streams respectively.
    """
    drift_schedule.validate(motion.duration_s)
    t_count = len(motion)
    s_count = motion.sensors
    t_s = np.arange(t_count) / motion.rate_hz
    true_drift, true_offset = drift_schedule.states(t_s)

    meas_ori = np.einsum("tsij,tsjk,tskl->tsil", true_drift, motion.orientations, true_offset)
    meas_acc = np.einsum("tsij,tsj->tsi", true_drift, motion.accels)
    if leakage:
        meas_acc = meas_acc + (gravity[None, None, :] - np.einsum("tsij,j->tsi", true_drift, gravity))

    cal = Calibrator(cfg, estimator, sensors=s_count)
    calib_ori = np.empty_like(meas_ori)
    calib_acc = np.empty_like(meas_acc)
    drift_angle = np.empty((t_count, s_count))
    offset_angle = np.empty((t_count, s_count))
    for t in range(t_count):
        frame = ImuFrame(t=t, orientations=meas_ori[t], accels=meas_acc[t])
        out = cal.step(frame, gt_frame=motion.frame(t), truth=(true_drift[t], true_offset[t]))
        calib_ori[t] = out.orientations
        calib_acc[t] = out.accels
        drift_angle[t] = _angles_from_identity(cal.state.drift)
        offset_angle[t] = _angles_from_identity(cal.state.offset)

    root = cfg.root_index
    psi_m = _yaw_angles(calib_ori[:, root])
    psi_g = _yaw_angles(motion.orientations[:, root])
    rel = rotmath.mats_from_eulers(
        np.stack([np.zeros(t_count), np.degrees(psi_m - psi_g), np.zeros(t_count)], axis=-1)
    )
    gt_mapped = np.einsum("tij,tsjk->tsik", rel, motion.orientations)
    ome_deg = rotmath.geodesic_deg(calib_ori, gt_mapped)
    ame_ms2 = np.linalg.norm(
        calib_acc - np.einsum("tij,tsj->tsi", rel, motion.accels), axis=-1
    )

    rd = np.zeros((t_count, s_count))
    triggered = np.zeros((t_count, s_count), dtype=bool)
    for i, ev in enumerate(cal.events):
        until = cal.events[i + 1].frame if i + 1 < len(cal.events) else t_count
        rd[ev.frame : until, :] = ev.rd[None, :]
        triggered[ev.frame, :] = ev.triggered

    names = SENSOR_NAMES if s_count == len(SENSOR_NAMES) else tuple(f"s{i}" for i in range(s_count))
    return MetricsReport(
        ome_deg=ome_deg,
        ame_ms2=ame_ms2,
        rd=rd,
        triggered=triggered,
        drift_angle_deg=drift_angle,
        offset_angle_deg=offset_angle,
        rate_hz=motion.rate_hz,
        sensor_names=names,
        events=cal.events,
    )
