"""Configuration kinematic model of the mecanum-wheel rovers.

Each rover is a planar double integrator driven by acceleration commands
``(ax, ay, alpha)``; wheel-speed references follow from the standard
four-wheel X-roller mecanum kinematics.
"""

from dataclasses import dataclass

import numpy as np

UGV_STATE_SIZE = 6  # x, y, theta, vx, vy, omega
WHEEL_ORDER = ("front_left", "front_right", "rear_left", "rear_right")


@dataclass(frozen=True)
class UgvGeometry:
    wheel_radius: float = 0.05
    half_length: float = 0.1
    half_width: float = 0.1


def ckm_derivative(state, u):
    """``[x, y, theta, vx, vy, omega] -> [vx, vy, omega, u1, u2, u3]``."""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(state.shape)
    out[..., 0:3] = state[..., 3:6]
    out[..., 3:3 + u.shape[-1]] = u
    if u.shape[-1] < 3:
        out[..., 5] = 0.0
    return out


def kinematic_matrix(geom):
    """Maps body twist ``(vx, vy, omega)`` to wheel rates (FL, FR, RL, RR)."""
    k = geom.half_length + geom.half_width
    return np.array([
        [1.0, -1.0, -k],
        [1.0, 1.0, k],
        [1.0, 1.0, -k],
        [1.0, -1.0, k],
    ]) / geom.wheel_radius


def body_velocity(state):
    """Inertial planar velocity rotated into the rover frame."""
    theta = state[2]
    c, s = np.cos(theta), np.sin(theta)
    return np.array([c * state[3] + s * state[4], -s * state[3] + c * state[4]])


def wheel_speeds(state, geom):
    state = np.asarray(state, dtype=float)
    twist = np.append(body_velocity(state), state[5])
    return kinematic_matrix(geom) @ twist


def clip_inputs(u, a_max):
    """Saturate translational commands at ``a_max`` and zero the yaw command."""
    u = np.array(u, dtype=float)
    u[..., 0:2] = np.clip(u[..., 0:2], -a_max, a_max)
    u[..., 2] = 0.0
    return u


def velocity_reference_update(v_start, accel_cmd, control_dt, rate_hz=20.0):
    """Velocity reference ramp over one control interval.

    The commanded acceleration is held constant for ``control_dt`` and added to
    the velocity measured at the interval start.  Returns ``(times, v)`` with
    one sample per wheel-command tick, ending at ``t = control_dt``.
    """
    if control_dt <= 0:
        raise ValueError("control_dt must be positive")
    v_start = np.asarray(v_start, dtype=float)
    a = np.asarray(accel_cmd, dtype=float)[: v_start.size]
    n = int(round(control_dt * rate_hz))
    times = np.arange(1, n + 1) / rate_hz
    return times, v_start + np.outer(times, a)
