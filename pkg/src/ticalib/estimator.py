"""Window -> (delta drift, delta offset) estimators.

Three implementations share the EstimateOut contract: a ground-truth oracle
(harness validation), an alternating orthogonal-Procrustes optimizer, and
the TIC transformer forward pass. Deltas compose with the running state as
``drift @ delta_drift`` and ``delta_offset @ offset``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotmath, ticnet
from .diversity import rotation_diversity
from .sensor_model import CalibState, GRAVITY
from .weights import WeightBundle

FLAG_DEGENERATE = "degenerate"
FLAG_NON_CONVERGENCE = "non-convergence"
FLAG_GRAVITY_REFINED = "gravity-refined"


@dataclass
class Window:
    """n frames x S sensors of readings, optionally with ground-truth labels."""

    orientations: np.ndarray  # (n, S, 3, 3)
    accels: np.ndarray        # (n, S, 3)
    drift: np.ndarray | None = None   # (S, 3, 3) ground-truth labels
    offset: np.ndarray | None = None  # (S, 3, 3)

    @property
    def n(self) -> int:
        return self.orientations.shape[0]

    @property
    def sensors(self) -> int:
        return self.orientations.shape[1]

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("window must hold at least 2 frames")
        if not rotmath.is_rotation(self.orientations, tol=1e-6):
            raise ValueError("window contains invalid rotations")


@dataclass
class EstimateOut:
    """Per-sensor delta rotations plus solver diagnostics."""

    delta_drift: np.ndarray   # (S, 3, 3)
    delta_offset: np.ndarray  # (S, 3, 3)
    residuals: np.ndarray     # (S,) Frobenius units
    iterations: np.ndarray    # (S,) int
    flags: tuple = ()
    extras: dict = field(default_factory=dict)


def oracle_estimate(window: Window, gt: Window, state: CalibState) -> EstimateOut:
    """Exact residual deltas from ground-truth labels.

    Updating state with these deltas reproduces the true parameters:
    delta_drift = drift^T @ drift_true, delta_offset = offset_true @ offset^T.
    """
    if gt.n != window.n or gt.sensors != window.sensors:
        raise ValueError("ground-truth window misaligned with input window")
    if gt.drift is None or gt.offset is None:
        raise ValueError("ground-truth window carries no labels")
    dd = np.einsum("sji,sjk->sik", state.drift, gt.drift)
    do = np.einsum("sij,skj->sik", gt.offset, state.offset)
    s = window.sensors
    return EstimateOut(
        delta_drift=dd,
        delta_offset=do,
        residuals=np.zeros(s),
        iterations=np.zeros(s, dtype=int),
        flags=("",) * s,
    )


def kabsch(a: np.ndarray) -> np.ndarray:
    """Closest rotation to a 3x3 matrix: U diag(1,1,det) V^T from the SVD."""
    u, _, vt = np.linalg.svd(a)
    d = np.linalg.det(u @ vt)
    return u @ np.diag([1.0, 1.0, d]) @ vt


def drift_tilt_from_leakage(mean_leak: np.ndarray, gravity: np.ndarray = GRAVITY) -> tuple[np.ndarray, float]:
    """Recover the drift tilt implied by a mean gravity-leakage residual.

    The hardware model gives leak = (I - D) g, so D g = g - leak; the
    minimal rotation taking g to (g - leak) carries D's tilt. Returns
    (rotation, tilt degrees).
    """
    g = np.asarray(gravity, dtype=float)
    target = g - np.asarray(mean_leak, dtype=float)
    ng, nt = np.linalg.norm(g), np.linalg.norm(target)
    if ng < 1e-12 or nt < 1e-12:
        return np.eye(3), 0.0
    a = g / ng
    b = target / nt
    c = float(np.clip(np.dot(a, b), -1.0, 1.0))
    axis = np.cross(a, b)
    deg = float(np.degrees(np.arccos(c)))
    if np.linalg.norm(axis) < 1e-12:
        return np.eye(3), deg  # parallel (or anti-parallel: tilt axis undefined)
    return rotmath.mat_from_axis_angle(axis, deg), deg


def _conjugation_init(measured: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Closed-form seed for X from relative rotations.

    With M_t = X R_t Y, relative rotations satisfy M_t M_0^T = X (R_t R_0^T) X^T,
    so the skew-part axis vectors of both relative tracks align by X alone.
    Aligning them with one Kabsch step lands the alternation in the global
    basin instead of a local minimum of the nonconvex joint objective.
    """
    a = np.einsum("tij,kj->tik", reference, reference[0])
    b = np.einsum("tij,kj->tik", measured, measured[0])
    p = np.stack([a[:, 2, 1] - a[:, 1, 2], a[:, 0, 2] - a[:, 2, 0], a[:, 1, 0] - a[:, 0, 1]], axis=1)
    q = np.stack([b[:, 2, 1] - b[:, 1, 2], b[:, 0, 2] - b[:, 2, 0], b[:, 1, 0] - b[:, 0, 1]], axis=1)
    c = np.einsum("ti,tj->ij", q, p)
    if np.linalg.norm(c) < 1e-12:
        return np.eye(3)
    return kabsch(c)


def _procrustes_single(
    measured: np.ndarray,
    reference: np.ndarray,
    init_offset: np.ndarray | None,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Alternate closed-form Procrustes steps on min ||X R_t Y - M_t||_F^2."""
    if init_offset is not None:
        y = init_offset
        x = np.eye(3)
    else:
        x = _conjugation_init(measured, reference)
        xr0 = np.einsum("ij,tjk->tik", x, reference)
        y = kabsch(np.einsum("tji,tjk->ik", xr0, measured))
    history = []
    prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        ry = np.einsum("tij,jk->tik", reference, y)
        x = kabsch(np.einsum("tij,tkj->ik", measured, ry))
        xr = np.einsum("ij,tjk->tik", x, reference)
        y = kabsch(np.einsum("tji,tjk->ik", xr, measured))
        resid = float(np.sum((np.einsum("tij,jk->tik", xr, y) - measured) ** 2))
        history.append(resid)
        if prev - resid < tol:
            prev = resid
            break
        prev = resid
    x, y, history = _gauss_newton_polish(measured, reference, x, y, history)
    return x, y, np.array(history), it


_HAT = np.zeros((3, 3, 3))
_HAT[0, 1, 2], _HAT[0, 2, 1] = -1.0, 1.0
_HAT[1, 0, 2], _HAT[1, 2, 0] = 1.0, -1.0
_HAT[2, 0, 1], _HAT[2, 1, 0] = -1.0, 1.0


def _gauss_newton_polish(measured, reference, x, y, history, steps: int = 25):
    """Joint small-rotation refinement of (x, y) past the alternation stall.

    Block coordinate descent converges linearly and stalls near sqrt(eps);
    solving the coupled 6-dof tangent update pushes the fit to the residual
    noise floor. Each step is accepted only if the residual decreases, so
    the appended history stays monotone.
    """
    best = history[-1] if history else float(np.sum(
        (np.einsum("ij,tjk,kl->til", x, reference, y) - measured) ** 2))
    for _ in range(steps):
        xr = np.einsum("ij,tjk->tik", x, reference)
        cur = np.einsum("tij,jk->tik", xr, y)
        r0 = (cur - measured).reshape(-1)
        # d/du_k exp(u^)x R y = hat_k @ cur; d/dv_k x R exp(v^) y = xr @ hat_k @ y
        ju = np.einsum("kab,tbc->tkac", _HAT, cur)
        jv = np.einsum("tab,kbc,cd->tkad", xr, _HAT, y)
        jac = np.concatenate([ju, jv], axis=1).transpose(0, 2, 3, 1).reshape(-1, 6)
        upd, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        if np.linalg.norm(upd) < 1e-14:
            break
        # Backtracking keeps the full step from overshooting narrow valleys.
        accepted = False
        for _ in range(12):
            u, v = upd[:3], upd[3:]
            x_new = rotmath.mat_from_axis_angle(u, np.degrees(np.linalg.norm(u))) @ x
            y_new = y @ rotmath.mat_from_axis_angle(v, np.degrees(np.linalg.norm(v)))
            resid = float(np.sum(
                (np.einsum("ij,tjk,kl->til", x_new, reference, y_new) - measured) ** 2))
            if resid < best:
                x, y, best = x_new, y_new, resid
                history.append(resid)
                accepted = True
                break
            upd = upd * 0.5
        if not accepted:
            break
    return x, y, history


def procrustes_estimate(
    window: Window,
    reference: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-10,
    init_offset: np.ndarray | None = None,
    gravity_refine: bool = False,
    ref_accels: np.ndarray | None = None,
    gravity: np.ndarray = GRAVITY,
    low_motion_accel: float = 0.5,
) -> EstimateOut:
    """Alternating orthogonal-Procrustes fit of (delta drift, delta offset).

    ``reference`` is the (n, S, 3, 3) ground-truth orientation track the
    measured window was generated from. When gravity_refine is set (hardware
    leakage mode) the mean acceleration residual over low-motion frames is
    used to recover the drift tilt, reported in extras and, for degenerate
    windows, folded into delta_drift.
    """
    window.validate()
    ref = np.asarray(reference, dtype=float)
    if ref.shape != window.orientations.shape:
        raise ValueError("reference misaligned with window")
    n, s = window.n, window.sensors
    dd = np.empty((s, 3, 3))
    do = np.empty((s, 3, 3))
    residuals = np.empty(s)
    iterations = np.empty(s, dtype=int)
    flags = []
    histories = []
    tilt_deg = np.full(s, np.nan)
    tilt_rot = np.broadcast_to(np.eye(3), (s, 3, 3)).copy()
    for si in range(s):
        meas = window.orientations[:, si]
        init = None if init_offset is None else np.asarray(init_offset[si], dtype=float)
        x, y, hist, it = _procrustes_single(meas, ref[:, si], init, max_iter, tol)
        flag = ""
        if rotation_diversity(meas) == 1:
            flag = FLAG_DEGENERATE
        elif it >= max_iter and len(hist) >= 2 and hist[-2] - hist[-1] >= tol:
            flag = FLAG_NON_CONVERGENCE
        if gravity_refine:
            if ref_accels is None:
                raise ValueError("gravity_refine requires reference accelerations")
            ra = np.asarray(ref_accels, dtype=float)[:, si]
            mask = np.linalg.norm(ra, axis=-1) < low_motion_accel
            if np.any(mask):
                leak = window.accels[mask, si] - np.einsum("ij,tj->ti", x, ra[mask])
                rot, deg = drift_tilt_from_leakage(leak.mean(axis=0), gravity)
                tilt_rot[si] = rot
                tilt_deg[si] = deg
                if flag == FLAG_DEGENERATE:
                    # Orientation fit is non-unique; keep the gravity tilt at least.
                    yaw = rotmath.yaw_decompose(x).yaw
                    x = rot @ yaw
                    flag = FLAG_GRAVITY_REFINED
        dd[si], do[si] = x, y
        residuals[si] = hist[-1]
        iterations[si] = it
        flags.append(flag)
        histories.append(hist)
    return EstimateOut(
        delta_drift=dd,
        delta_offset=do,
        residuals=residuals,
        iterations=iterations,
        flags=tuple(flags),
        extras={
            "residual_history": histories,
            "gravity_tilt_deg": tilt_deg,
            "gravity_tilt_rot": tilt_rot,
        },
    )


def tic_forward(window: Window, weights: WeightBundle) -> EstimateOut:
    """TIC transformer inference over a window; deterministic per inputs."""
    window.validate()
    drift_6d, offset_6d = ticnet.forward_6d(window.orientations, window.accels, weights)
    s = window.sensors
    return EstimateOut(
        delta_drift=ticnet.decode_rotations(drift_6d),
        delta_offset=ticnet.decode_rotations(offset_6d),
        residuals=np.zeros(s),
        iterations=np.ones(s, dtype=int),
        flags=("",) * s,
        extras={"drift_6d": drift_6d, "offset_6d": offset_6d},
    )


# ---------------------------------------------------------------------------
# Calibrator-facing estimator objects. estimate() receives the drift/offset-
# removed window; gt (ground-truth window with absolute labels) and state are
# supplied by the harness when available.


class OracleEstimator:
    name = "oracle"

    def estimate(self, window: Window, gt: Window | None = None, state: CalibState | None = None) -> EstimateOut:
        if gt is None or state is None:
            raise ValueError("oracle estimator needs ground truth and state")
        return oracle_estimate(window, gt, state)


class ProcrustesEstimator:
    name = "procrustes"

    def __init__(self, gravity_refine: bool = False, max_iter: int = 100, tol: float = 1e-10):
        self.gravity_refine = gravity_refine
        self.max_iter = max_iter
        self.tol = tol

    def estimate(self, window: Window, gt: Window | None = None, state: CalibState | None = None) -> EstimateOut:
        if gt is None:
            raise ValueError("procrustes estimator needs the ground-truth window")
        return procrustes_estimate(
            window,
            gt.orientations,
            max_iter=self.max_iter,
            tol=self.tol,
            gravity_refine=self.gravity_refine,
            ref_accels=gt.accels if self.gravity_refine else None,
        )


class TICEstimator:
    name = "tic"

    def __init__(self, weights: WeightBundle):
        weights.validate()
        self.weights = weights

    def estimate(self, window: Window, gt: Window | None = None, state: CalibState | None = None) -> EstimateOut:
        return tic_forward(window, self.weights)
