"""Small fixed-dimension vector, matrix, and quaternion algebra.

Everything is float64. Quaternions are scalar-first (w, x, y, z) with the
Hamilton (right-handed) product. Angular velocities passed to the rate
helpers are plain 3-vectors; which frame they live in is the caller's
contract (see the two derivative variants).
"""
from __future__ import annotations

import numpy as np

Array = np.ndarray

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

UNIT_NORM_TOL = 1e-9


def vec3(x: float, y: float, z: float) -> Array:
    return np.array([x, y, z], dtype=np.float64)


def quat(w: float, x: float, y: float, z: float) -> Array:
    return np.array([w, x, y, z], dtype=np.float64)


def quat_mul(a: Array, b: Array) -> Array:
    """Hamilton product a ⊗ b, scalar-first."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], dtype=np.float64)


def quat_conjugate(q: Array) -> Array:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=np.float64)


def quat_norm(q: Array) -> float:
    return float(np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]))


def quat_normalize(q: Array) -> Array:
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("degenerate quaternion: zero norm")
    return np.asarray(q, dtype=np.float64) / n


def quat_derivative(q: Array, omega: Array) -> Array:
    """Rate ½·q⊗(0, ω) for a body-frame angular velocity ω."""
    return 0.5 * quat_mul(q, np.array([0.0, omega[0], omega[1], omega[2]]))


def quat_derivative_world(q: Array, omega: Array) -> Array:
    """Rate ½·(0, ω)⊗q for a world-frame angular velocity ω.

    This is the variant the simulator integrates: states carry ω in the
    world frame, and only this ordering keeps angular momentum and
    rotational energy invariants of torque-free anisotropic motion.
    """
    return 0.5 * quat_mul(np.array([0.0, omega[0], omega[1], omega[2]]), q)


def _require_unit(q: Array) -> None:
    if abs(quat_norm(q) - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"quaternion is not unit within {UNIT_NORM_TOL}: |q|={quat_norm(q)!r}")


def quat_rotate(q: Array, v: Array) -> Array:
    """Rotate vector v by unit quaternion q (body -> world for attitudes)."""
    _require_unit(q)
    return rotate_fast(q, v)


def rotate_fast(q: Array, v: Array) -> Array:
    """Rotation without the unit check; q must already be unit."""
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ], dtype=np.float64)


def quat_from_axis_angle(axis: Array, angle: float) -> Array:
    axis = np.asarray(axis, dtype=np.float64)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    s = np.sin(half) / n
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_matrix(q: Array) -> Array:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ], dtype=np.float64)


def inertia_world(q: Array, inertia_body_diag: Array) -> Array:
    """World-frame inertia tensor R·diag(I_body)·Rᵀ for unit attitude q."""
    diag = np.asarray(inertia_body_diag, dtype=np.float64)
    if np.any(diag <= 0.0):
        raise ValueError("inertia diagonal must be strictly positive")
    _require_unit(q)
    r = quat_to_matrix(q)
    return (r * diag) @ r.T


def cross(a: Array, b: Array) -> Array:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ], dtype=np.float64)
