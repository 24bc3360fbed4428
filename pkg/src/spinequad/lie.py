"""Rotation algebra on SO(3): hat/vee isomorphism, exponential and log maps.

Conventions: rotation vectors are radians, matrices are world-frame,
``hat`` follows the right-hand rule so that ``hat(w) @ p == cross(w, p)``.
"""

import numpy as np

from spinequad import backend

SKEW_TOL = 1e-9
NEAR_PI_TOL = 1e-6


class NotSkewError(ValueError):
    """Raised by vee() when the input is not antisymmetric."""


class NearPiRotationError(ValueError):
    """Raised by log_so3() when the rotation angle is within NEAR_PI_TOL of pi."""


def hat(w):
    """Map a 3-vector to the matching antisymmetric 3x3 matrix."""
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise ValueError(f"expected shape (3,), got {w.shape}")
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def vee(W):
    """Inverse of hat().  Requires ||W + W'|| < SKEW_TOL (Frobenius)."""
    W = np.asarray(W, dtype=float)
    if W.shape != (3, 3):
        raise ValueError(f"expected shape (3, 3), got {W.shape}")
    if np.linalg.norm(W + W.T) >= SKEW_TOL:
        raise NotSkewError("matrix is not antisymmetric within tolerance")
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def exp_so3(w):
    """Exponential map: rotation vector -> rotation matrix (Rodrigues form)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise ValueError(f"expected shape (3,), got {w.shape}")
    return backend.so3_exp(w)


def log_so3(R):
    """Log map: rotation matrix -> rotation vector.

    Raises NearPiRotationError when trace(R) <= -1 + 1e-9 or the recovered
    angle is within NEAR_PI_TOL of pi, where the axis is ill-conditioned.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"expected shape (3, 3), got {R.shape}")
    tr = float(np.trace(R))
    if tr <= -1.0 + 1e-9:
        raise NearPiRotationError("rotation angle too close to pi")
    c = min(1.0, max(-1.0, 0.5 * (tr - 1.0)))
    if np.pi - np.arccos(c) < NEAR_PI_TOL:
        raise NearPiRotationError("rotation angle too close to pi")
    return backend.so3_log(R)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def right_jacobian_inv(w):
    """Inverse right Jacobian of the exponential map.

    Satisfies log(exp(a)exp(e)) ~= a + right_jacobian_inv(a) @ e for small e.
    """
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    K = hat(w)
    if th2 < 1e-12:
        return np.eye(3) + 0.5 * K + (K @ K) / 12.0
    th = np.sqrt(th2)
    coeff = 1.0 / th2 - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) + 0.5 * K + coeff * (K @ K)


def left_jacobian(w):
    """Left Jacobian of the exponential map.

    Satisfies exp(a + e) ~= exp(left_jacobian(a) @ e) exp(a) for small e,
    equivalently log(exp(a + e) exp(-a)) ~= left_jacobian(a) @ e.
    """
    w = np.asarray(w, dtype=float)
    th2 = float(w @ w)
    K = hat(w)
    if th2 < 1e-12:
        b = 0.5 - th2 / 24.0
        c = 1.0 / 6.0 - th2 / 120.0
    else:
        th = np.sqrt(th2)
        b = (1.0 - np.cos(th)) / th2
        c = (th - np.sin(th)) / (th2 * th)
    return np.eye(3) + b * K + c * (K @ K)
