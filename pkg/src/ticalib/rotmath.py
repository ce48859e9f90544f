"""Rotation matrix utilities: Euler and 6D conversions, geodesic distance, yaw split.

Conventions used throughout the package:

* Rotations are 3x3 orthonormal numpy arrays with det +1.
* Euler angles are extrinsic X-then-Y-then-Z in degrees, i.e. the matrix
  is ``Rz(z) @ Ry(y) @ Rx(x)``. The pitch axis (y) is bounded to [-90, 90];
  x and z live in [-180, 180].
* The vertical axis is +Y; heading (yaw) is a rotation about +Y.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

ORTHONORMAL_TOL = 1e-9


def is_rotation(m: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """True if m is orthonormal with det +1 within tol (Frobenius)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        return False
    err = np.linalg.norm(m.swapaxes(-1, -2) @ m - np.eye(3), axis=(-2, -1))
    det = np.linalg.det(m)
    return bool(np.all(err <= tol) and np.all(np.abs(det - 1.0) <= tol))


def rot_x(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def mat_from_euler(euler_deg) -> np.ndarray:
    """Build ``Rz(z) @ Ry(y) @ Rx(x)`` from (x, y, z) angles in degrees."""
    e = np.asarray(euler_deg, dtype=float)
    return mats_from_eulers(e[None, :])[0]


def mats_from_eulers(eulers_deg: np.ndarray) -> np.ndarray:
    """Vectorized mat_from_euler over an (..., 3) array of degree triples."""
    e = np.radians(np.asarray(eulers_deg, dtype=float))
    cx, sx = np.cos(e[..., 0]), np.sin(e[..., 0])
    cy, sy = np.cos(e[..., 1]), np.sin(e[..., 1])
    cz, sz = np.cos(e[..., 2]), np.sin(e[..., 2])
    m = np.empty(e.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 0] = cz * cy
    m[..., 0, 1] = cz * sy * sx - sz * cx
    m[..., 0, 2] = cz * sy * cx + sz * sx
    m[..., 1, 0] = sz * cy
    m[..., 1, 1] = sz * sy * sx + cz * cx
    m[..., 1, 2] = sz * sy * cx - cz * sx
    m[..., 2, 0] = -sy
    m[..., 2, 1] = cy * sx
    m[..., 2, 2] = cy * cx
    return m


def euler_from_mat(r: np.ndarray) -> np.ndarray:
    """Inverse of mat_from_euler; returns (x, y, z) in degrees.

    At gimbal lock (|y| = 90 deg) the free rotation folds into z and x is
    reported as 0.
    """
    return eulers_from_mats(np.asarray(r, dtype=float)[None, ...])[0]


def eulers_from_mats(r: np.ndarray) -> np.ndarray:
    """Vectorized euler_from_mat over an (..., 3, 3) array."""
    r = np.asarray(r, dtype=float)
    sy = np.clip(-r[..., 2, 0], -1.0, 1.0)
    y = np.arcsin(sy)
    x = np.arctan2(r[..., 2, 1], r[..., 2, 2])
    z = np.arctan2(r[..., 1, 0], r[..., 0, 0])
    # Gimbal lock: cy ~ 0, the x/z split is arbitrary; fix x := 0.
    lock = np.abs(sy) >= 1.0 - 1e-12
    if np.any(lock):
        z_lock = np.arctan2(-r[..., 0, 1], r[..., 1, 1])
        x = np.where(lock, 0.0, x)
        z = np.where(lock, z_lock, z)
    return np.degrees(np.stack([x, y, z], axis=-1))


def geodesic_deg(r1: np.ndarray, r2: np.ndarray) -> float | np.ndarray:
    """Angle of r1^T r2 in degrees; the geodesic metric on SO(3)."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    d = np.einsum("...ji,...jk->...ik", r1, r2)
    c = (d[..., 0, 0] + d[..., 1, 1] + d[..., 2, 2] - 1.0) / 2.0
    # atan2 of (sin, cos) resolves small angles to machine precision where
    # arccos of the trace alone floors at sqrt(eps).
    s = 0.5 * np.sqrt(
        (d[..., 2, 1] - d[..., 1, 2]) ** 2
        + (d[..., 0, 2] - d[..., 2, 0]) ** 2
        + (d[..., 1, 0] - d[..., 0, 1]) ** 2
    )
    ang = np.degrees(np.arctan2(s, c))
    return float(ang) if ang.ndim == 0 else ang


def mat_from_rot6d(v: np.ndarray) -> np.ndarray:
    """Decode a 6-vector (first two matrix columns, column-major) to a rotation.

    Gram-Schmidt: b1 = |a1|, b2 = |a2 - (b1.a2) b1|, b3 = b1 x b2.
    Raises ValueError on parallel or zero columns.
    """
    v = np.asarray(v, dtype=float).reshape(6)
    a1, a2 = v[:3], v[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-12:
        raise ValueError("degenerate 6D input")
    b1 = a1 / n1
    u2 = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(u2)
    if n2 < 1e-12:
        raise ValueError("degenerate 6D input")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_from_mat(r: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix as a 6-vector."""
    r = np.asarray(r, dtype=float)
    return np.concatenate([r[:, 0], r[:, 1]])


def mat_from_axis_angle(axis: np.ndarray, deg: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return np.eye(3)
    k = axis / n
    a = np.radians(deg)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(a) * kx + (1 - np.cos(a)) * (kx @ kx)


def random_rotation(rng) -> np.ndarray:
    """Haar-uniform random rotation (via normalized quaternion)."""
    return random_rotations(rng, 1)[0]


def random_rotations(rng, count: int) -> np.ndarray:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    q = rng.normal(size=(count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((count, 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - z * w)
    m[:, 0, 2] = 2 * (x * z + y * w)
    m[:, 1, 0] = 2 * (x * y + z * w)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - x * w)
    m[:, 2, 0] = 2 * (x * z - y * w)
    m[:, 2, 1] = 2 * (y * z + x * w)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


class YawSplit(NamedTuple):
    yaw: np.ndarray        # Ry(psi)
    residual: np.ndarray   # yaw^T @ R, zero heading
    indeterminate: bool


_VERTICAL_COS = np.cos(np.radians(1.0))


def yaw_decompose(r: np.ndarray) -> YawSplit:
    """Split R into a heading rotation about +Y and a zero-heading residual.

    Heading comes from the body +Z axis projected to the horizontal plane;
    if +Z is within 1 degree of vertical, body +X is used instead. If both
    are degenerate the split is flagged indeterminate with yaw = I.
    """
    r = np.asarray(r, dtype=float)
    indeterminate = False
    if abs(r[1, 2]) < _VERTICAL_COS:
        psi = np.arctan2(r[0, 2], r[2, 2])
    elif abs(r[1, 0]) < _VERTICAL_COS:
        psi = np.arctan2(-r[2, 0], r[0, 0])
    else:
        psi = 0.0
        indeterminate = True
    yaw = rot_y(np.degrees(psi))
    return YawSplit(yaw, yaw.T @ r, indeterminate)
