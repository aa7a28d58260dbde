"""Rotation and Euler-angle kinematics.

Attitudes use the intrinsic Z-Y-X sequence (yaw, then pitch, then roll).
``rotation_from_euler`` returns the inertial-to-body matrix; its transpose maps
body vectors into the inertial frame.
"""

import numpy as np
from numba import njit

from .errors import SingularAttitude, SingularMatrix

COS_PITCH_MIN = 1e-6
PIVOT_MIN = 1e-12


def cross(a, b):
    """Cross product over the last axis; much cheaper than ``np.cross`` for 3-vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 and b.ndim == 1:
        a0, a1, a2 = a
        b0, b1, b2 = b
        return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def skew(v):
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_from_euler(angles):
    """Inertial-to-body rotation for Z-Y-X Euler angles ``(roll, pitch, yaw)``."""
    phi, theta, psi = angles
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    # rows of Rz(psi) @ Ry(theta) @ Rx(phi), transposed
    return np.array([
        [ct * cp, ct * sp, -st],
        [sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct],
        [cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct],
    ])


def euler_rate_matrix(angles):
    """Matrix E with ``omega_body = E @ euler_rates``."""
    phi, theta, _ = angles
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])


def euler_rate_matrix_dot(angles, rates):
    """Time derivative of :func:`euler_rate_matrix` along ``rates``."""
    phi, theta, _ = angles
    dphi, dtheta, _ = rates
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([
        [0.0, 0.0, -ct * dtheta],
        [0.0, -sf * dphi, cf * ct * dphi - sf * st * dtheta],
        [0.0, -cf * dphi, -sf * ct * dphi - cf * st * dtheta],
    ])


def body_omega_from_euler_rates(angles, rates):
    return euler_rate_matrix(angles) @ np.asarray(rates, dtype=float)


def euler_rates_from_body_omega(angles, omega_b):
    """Invert the Z-Y-X kinematic map; raises ``SingularAttitude`` near gimbal lock."""
    phi, theta, _ = angles
    ct = np.cos(theta)
    if abs(ct) < COS_PITCH_MIN:
        raise SingularAttitude(f"pitch {theta!r} too close to +-pi/2")
    cf, sf = np.cos(phi), np.sin(phi)
    tt = np.sin(theta) / ct
    inv = np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])
    return inv @ np.asarray(omega_b, dtype=float)


@njit(cache=True)
def _lu_solve(A, b):
    n = A.shape[0]
    M = A.copy()
    x = b.copy()
    min_pivot = np.inf
    for k in range(n):
        p = k
        big = abs(M[k, k])
        for i in range(k + 1, n):
            if abs(M[i, k]) > big:
                big = abs(M[i, k])
                p = i
        if big < min_pivot:
            min_pivot = big
        if big == 0.0:
            return x, 0.0
        if p != k:
            for j in range(n):
                M[k, j], M[p, j] = M[p, j], M[k, j]
            x[k], x[p] = x[p], x[k]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            if f != 0.0:
                for j in range(k + 1, n):
                    M[i, j] -= f * M[k, j]
                x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= M[i, j] * x[j]
        x[i] = acc / M[i, i]
    return x, min_pivot


def solve_dense_linear(A, b):
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises ``SingularMatrix`` when a pivot falls below ``PIVOT_MIN``.
    """
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    x, min_pivot = _lu_solve(A, b)
    if min_pivot < PIVOT_MIN:
        raise SingularMatrix(f"pivot {min_pivot:.3e} below {PIVOT_MIN}")
    return x
