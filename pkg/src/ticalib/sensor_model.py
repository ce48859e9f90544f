"""Forward IMU measurement model (drift + offset + gravity leakage) and its inverse.

Frame roles: ground-truth frames carry bone orientation R_GB and global
acceleration a_G; measured frames carry R_IMU and a_IMU. The same ImuFrame
container is used for both, the role follows from context.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rotmath

GRAVITY = np.array([0.0, -9.80665, 0.0])

SENSOR_NAMES = (
    "left_forearm",
    "right_forearm",
    "left_lower_leg",
    "right_lower_leg",
    "head",
    "hip",
)
ROOT_SENSOR = 5  # hip

ACCEL_SANITY_LIMIT = 200.0  # m/s^2


@dataclass
class ImuFrame:
    """Per-sensor orientation + acceleration at one frame index."""

    t: int
    orientations: np.ndarray  # (S, 3, 3)
    accels: np.ndarray        # (S, 3) m/s^2
    yaw_indeterminate: bool = False

    @property
    def sensors(self) -> int:
        return self.orientations.shape[0]

    def validate(self) -> None:
        if not rotmath.is_rotation(self.orientations, tol=1e-6):
            raise ValueError("frame orientations are not valid rotations")
        if not np.all(np.isfinite(self.accels)):
            raise ValueError("frame accelerations are not finite")
        if np.any(np.linalg.norm(self.accels, axis=-1) >= ACCEL_SANITY_LIMIT):
            raise ValueError("frame acceleration exceeds sanity bound")


@dataclass
class CalibState:
    """Per-sensor drift (R_G'G) and offset (R_BS) plus last-update metadata."""

    drift: np.ndarray   # (S, 3, 3)
    offset: np.ndarray  # (S, 3, 3)
    last_trigger_frame: int = -1
    last_update_frame: np.ndarray = field(default=None)  # (S,) per-sensor

    def __post_init__(self):
        if self.last_update_frame is None:
            self.last_update_frame = np.full(self.drift.shape[0], -1, dtype=int)

    @classmethod
    def identity(cls, sensors: int) -> "CalibState":
        eye = np.broadcast_to(np.eye(3), (sensors, 3, 3)).copy()
        return cls(drift=eye.copy(), offset=eye.copy())

    def copy(self) -> "CalibState":
        return CalibState(
            drift=self.drift.copy(),
            offset=self.offset.copy(),
            last_trigger_frame=self.last_trigger_frame,
            last_update_frame=self.last_update_frame.copy(),
        )


def apply_measurement_model(
    gt: ImuFrame,
    state: CalibState,
    leakage: bool = True,
    gravity: np.ndarray = GRAVITY,
) -> ImuFrame:
    """Simulate measured readings from ground truth and a calibration state.

    Orientation: R_IMU = drift @ R_GB @ offset.
    Acceleration: drift @ a_G, plus the gravity-leakage term
    (I - drift) @ g when the hardware-level model is requested.
    """
    ori = np.einsum("sij,sjk,skl->sil", state.drift, gt.orientations, state.offset)
    acc = np.einsum("sij,sj->si", state.drift, gt.accels)
    if leakage:
        leak = gravity[None, :] - np.einsum("sij,j->si", state.drift, gravity)
        acc = acc + leak
    return replace(gt, orientations=ori, accels=acc)


def calibrate(frame: ImuFrame, state: CalibState) -> ImuFrame:
    """Remove drift and offset: R_cali = drift^T @ R_IMU @ offset^T, a_cali = drift^T @ a."""
    ori = np.einsum("sji,sjk,slk->sil", state.drift, frame.orientations, state.offset)
    acc = np.einsum("sji,sj->si", state.drift, frame.accels)
    return replace(frame, orientations=ori, accels=acc)


def extract_gt_params(
    r_imu: np.ndarray, r_gs: np.ndarray, r_gb: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth drift and offset from an absolute-orientation reference.

    drift = R_IMU @ R_GS^T, offset = R_GB^T @ R_GS. Accepts single matrices
    or leading batch axes.
    """
    r_imu = np.asarray(r_imu, dtype=float)
    r_gs = np.asarray(r_gs, dtype=float)
    r_gb = np.asarray(r_gb, dtype=float)
    drift = np.einsum("...ij,...kj->...ik", r_imu, r_gs)
    offset = np.einsum("...ji,...jk->...ik", r_gb, r_gs)
    return drift, offset


def to_ego_yaw(frame: ImuFrame, root_index: int = ROOT_SENSOR) -> ImuFrame:
    """Express a frame in the ego-yaw system defined by the root sensor heading.

    Every orientation and acceleration is left-multiplied by yaw^T of the
    root orientation; the resulting root orientation has zero heading. A
    yaw-indeterminate root returns the frame unchanged, flagged.
    """
    split = rotmath.yaw_decompose(frame.orientations[root_index])
    if split.indeterminate:
        return replace(frame, yaw_indeterminate=True)
    yt = split.yaw.T
    ori = np.einsum("ij,sjk->sik", yt, frame.orientations)
    acc = np.einsum("ij,sj->si", yt, frame.accels)
    return replace(frame, orientations=ori, accels=acc, yaw_indeterminate=False)
