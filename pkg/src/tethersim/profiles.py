"""Synthetic rover acceleration profiles for open-loop replay.

The bundled ``case1``..``case3`` CSVs are trapezoidal-velocity manoeuvres:
accelerate, cruise, decelerate, then hold still.
"""

import numpy as np

from .simulation import AccelProfile

PROFILE_DT = 0.1


def trapezoid_profile(directions, accel=0.05, ramp=2.0, cruise=2.0, hold=6.0, dt=PROFILE_DT):
    """Per-rover planar ``directions`` (n, 2) scaled by ``accel`` during the ramps."""
    d = np.asarray(directions, dtype=float).reshape(-1, 2)
    total = 2 * ramp + cruise + hold
    times = np.round(np.arange(0.0, total - 1e-9, dt), 10)
    sign = np.where(times < ramp - 1e-9, 1.0, np.where(times < ramp + cruise - 1e-9, 0.0,
                    np.where(times < 2 * ramp + cruise - 1e-9, -1.0, 0.0)))
    accels = np.zeros((len(times), len(d), 3))
    accels[:, :, 0:2] = accel * sign[:, None, None] * d[None, :, :]
    return AccelProfile(times, accels)


def case_profile(case, n=3):
    """Case 1: all rovers along +X.  Case 2: all along +Y.  Case 3: rover 1 +X, the others -X."""
    if case == 1:
        d = np.tile([1.0, 0.0], (n, 1))
    elif case == 2:
        d = np.tile([0.0, 1.0], (n, 1))
    elif case == 3:
        d = np.tile([-1.0, 0.0], (n, 1))
        d[0] = [1.0, 0.0]
    else:
        raise ValueError(f"unknown case {case}")
    return trapezoid_profile(d)
