"""Coupled balloon / pendulum-payload / tether equations of motion.

The balloon is a buoyant rigid body; the payload is a point mass on a
massless inextensible tether hanging from the balloon; each ground rover pulls
on the balloon through another inextensible tether that can only carry
tension.  At every instant the accelerations and tension magnitudes are found
from one linear system (translational, rotational and payload equations plus
one acceleration-level length constraint per rover tether).

Balloon-payload state layout (16 reals)::

    0:3   r_B         balloon centre position, inertial [m]
    3:6   Theta_B     roll, pitch, yaw [rad]
    6:8   Theta_P     payload swing angles (phi_P, theta_P) [rad]
    8:11  r_B dot
    11:14 Theta_B dot
    14:16 Theta_P dot

Rover states are rows ``[x, y, theta, vx, vy, omega]`` (see :mod:`tethersim.ugv`).
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NoConvergence, SingularConfiguration, SingularMatrix
from .spatial import (
    cross,
    euler_rate_matrix,
    euler_rate_matrix_dot,
    euler_rates_from_body_omega,
    rotation_from_euler,
    solve_dense_linear,
)

STATE_SIZE = 16
POS = slice(0, 3)
ATT = slice(3, 6)
SWING = slice(6, 8)
VEL = slice(8, 11)
ATT_RATE = slice(11, 14)
SWING_RATE = slice(14, 16)

# unknown vector: [r_B ddot (3), omega_b dot (3), Theta_P ddot (2), |T_P|, |T_i| ...]
N_BODY_UNKNOWNS = 9


def sphere_volume(radius):
    return 4.0 / 3.0 * np.pi * radius**3


def attachment_points(radius, n, elevation_deg=30.0, azimuth_offset_deg=0.0):
    """Tether anchor points on the sphere surface, below the equator, evenly spaced in azimuth."""
    el = np.radians(elevation_deg)
    az = np.radians(azimuth_offset_deg) + 2.0 * np.pi * np.arange(n) / max(n, 1)
    return radius * np.column_stack([
        np.cos(el) * np.cos(az),
        np.cos(el) * np.sin(az),
        -np.sin(el) * np.ones(n),
    ])


def shell_inertia(structural_mass, gas_density, radius):
    # thin shell envelope plus solid sphere of lifting gas
    volume = sphere_volume(radius)
    j = 2.0 / 3.0 * structural_mass * radius**2 + 0.4 * gas_density * volume * radius**2
    return j * np.eye(3)


@dataclass(frozen=True)
class Environment:
    air_density: float = 1.225
    gravity: float = 9.81
    wind: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def with_wind(self, wind):
        return Environment(self.air_density, self.gravity, np.asarray(wind, dtype=float))


@dataclass(frozen=True)
class BalloonParams:
    structural_mass: float
    volume: float
    gas_density: float
    inertia: np.ndarray
    drag_coeff: float
    reference_area: float
    added_mass_coeff: float
    payload_attach: np.ndarray
    ugv_attach: np.ndarray  # (n, 3) body-frame anchor points

    @classmethod
    def sphere(cls, diameter=2.2, structural_mass=3.6, gas_density=0.1786, n=3,
               elevation_deg=30.0, azimuth_offset_deg=0.0, drag_coeff=0.47,
               added_mass_coeff=0.5, inertia=None):
        r = 0.5 * diameter
        if inertia is None:
            inertia = shell_inertia(structural_mass, gas_density, r)
        return cls(
            structural_mass=structural_mass,
            volume=sphere_volume(r),
            gas_density=gas_density,
            inertia=np.asarray(inertia, dtype=float),
            drag_coeff=drag_coeff,
            reference_area=np.pi * r**2,
            added_mass_coeff=added_mass_coeff,
            payload_attach=np.array([0.0, 0.0, -r]),
            ugv_attach=attachment_points(r, n, elevation_deg, azimuth_offset_deg),
        )

    @property
    def radius(self):
        return (3.0 * self.volume / (4.0 * np.pi)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class PayloadParams:
    mass: float = 1.0
    tether_length: float = 0.8
    drag_area: float = 0.01  # C_D * A [m^2]


@dataclass(frozen=True)
class TetherParams:
    length: float = 2.0
    count: int = 3


@dataclass(frozen=True)
class SystemParams:
    balloon: BalloonParams
    payload: PayloadParams
    tether: TetherParams
    baumgarte_alpha: float = 5.0
    baumgarte_beta: float = 5.0

    @classmethod
    def default(cls, n=3, **overrides):
        return cls(BalloonParams.sphere(n=n), PayloadParams(), TetherParams(count=n), **overrides)

    @property
    def n(self):
        return len(self.balloon.ugv_attach)


@dataclass
class TensionSolution:
    payload_tension: float
    ugv_tensions: np.ndarray
    slack: np.ndarray
    balloon_accel: np.ndarray
    omega_dot: np.ndarray
    swing_accel: np.ndarray


def buoyancy_force(bp, env):
    """Net upward lift: displaced air minus lifting gas minus envelope weight [N]."""
    return (env.air_density - bp.gas_density) * bp.volume * env.gravity - bp.structural_mass * env.gravity


def added_mass(bp, env):
    """Translational inertia: envelope, enclosed gas and entrained air."""
    return bp.structural_mass + bp.gas_density * bp.volume + bp.added_mass_coeff * env.air_density * bp.volume


def drag_force(velocity_rel_air, density, coeff_area):
    v = np.asarray(velocity_rel_air, dtype=float)
    return -0.5 * density * coeff_area * np.linalg.norm(v) * v


def payload_direction(swing):
    """Unit vector from the payload anchor to the payload; ``(0, 0)`` hangs straight down."""
    phi, theta = swing
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    return np.array([st, -sf * ct, -cf * ct])


def payload_direction_jacobian(swing):
    phi, theta = swing
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    return np.array([
        [0.0, ct],
        [-cf * ct, sf * st],
        [sf * ct, cf * st],
    ])


def payload_direction_curvature(swing, swing_rate):
    """Second-order term of d^2/dt^2 e_P(Theta_P) that does not involve Theta_P ddot."""
    phi, theta = swing
    dphi, dtheta = swing_rate
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    e_ff = np.array([0.0, sf * ct, cf * ct])
    e_ft = np.array([0.0, cf * st, -sf * st])
    e_tt = np.array([-st, sf * ct, cf * ct])
    return dphi * dphi * e_ff + 2.0 * dphi * dtheta * e_ft + dtheta * dtheta * e_tt


def payload_position(x, bp, pp):
    R = rotation_from_euler(x[ATT])
    return x[POS] + R.T @ bp.payload_attach + pp.tether_length * payload_direction(x[SWING])


def payload_velocity(x, bp, pp):
    R = rotation_from_euler(x[ATT])
    omega = euler_rate_matrix(x[ATT]) @ x[ATT_RATE]
    return (x[VEL] + R.T @ cross(omega, bp.payload_attach)
            + pp.tether_length * payload_direction_jacobian(x[SWING]) @ x[SWING_RATE])


def tether_vectors(x, ugv_states, bp):
    """Per-rover ``(delta_r, delta_r_dot)``: rover position minus balloon anchor, and its rate."""
    R = rotation_from_euler(x[ATT])
    omega = euler_rate_matrix(x[ATT]) @ x[ATT_RATE]
    ugv_states = np.atleast_2d(ugv_states)
    n = len(bp.ugv_attach)
    rover_pos = np.zeros((n, 3))
    rover_vel = np.zeros((n, 3))
    if n:
        rover_pos[:, :2] = ugv_states[:, 0:2]
        rover_vel[:, :2] = ugv_states[:, 3:5]
    anchors = x[POS] + bp.ugv_attach @ R
    anchor_vel = x[VEL] + cross(omega, bp.ugv_attach) @ R
    return rover_pos - anchors, rover_vel - anchor_vel


@njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _assemble_kernel(x, ugv, acc, with_rovers, inertia, r_bp, r_bi, m_eff, lift, k_drag_b,
                     m_p, l_p, k_drag_p, g, wind, alpha, beta, l_r):
    n = r_bi.shape[0]
    A = np.zeros((9 + n, 9 + n))
    b = np.zeros(9 + n)

    cf, sf = np.cos(x[3]), np.sin(x[3])
    ct, st = np.cos(x[4]), np.sin(x[4])
    cp, sp = np.cos(x[5]), np.sin(x[5])
    # inertial -> body (Z-Y-X); body -> inertial is R.T
    R = np.array([
        [ct * cp, ct * sp, -st],
        [sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct],
        [cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct],
    ])
    Q = R.T.copy()
    dphi, dth, dpsi = x[11], x[12], x[13]
    omega = np.array([dphi - st * dpsi, cf * dth + sf * ct * dpsi, -sf * dth + cf * ct * dpsi])

    # payload direction, its Jacobian and curvature term
    spf, cpf = np.sin(x[6]), np.cos(x[6])
    spt, cpt = np.sin(x[7]), np.cos(x[7])
    wf, wt = x[14], x[15]
    e_p = np.array([spt, -spf * cpt, -cpf * cpt])
    J = np.array([[0.0, cpt], [-cpf * cpt, spf * spt], [spf * cpt, cpf * spt]])
    curv = (wf * wf * np.array([0.0, spf * cpt, cpf * cpt])
            + 2.0 * wf * wt * np.array([0.0, cpf * spt, -spf * spt])
            + wt * wt * np.array([-spt, spf * cpt, cpf * cpt]))

    vel = x[8:11]

    # balloon translation
    v_rel = vel - wind
    drag_b = -k_drag_b * np.sqrt(v_rel @ v_rel) * v_rel
    for i in range(3):
        A[i, i] = m_eff
        A[i, 8] = -e_p[i]
        b[i] = drag_b[i]
    b[2] += lift

    # balloon rotation, body frame
    mom_p = _cross(r_bp, R @ e_p)
    gyro = _cross(omega, inertia @ omega)
    for i in range(3):
        for j in range(3):
            A[3 + i, 3 + j] = inertia[i, j]
        A[3 + i, 8] = -mom_p[i]
        b[3 + i] = -gyro[i]

    # payload
    v_p = vel + Q @ _cross(omega, r_bp) + l_p * (J @ x[14:16])
    vp_rel = v_p - wind
    drag_p = -k_drag_p * np.sqrt(vp_rel @ vp_rel) * vp_rel
    skew_bp = np.array([[0.0, -r_bp[2], r_bp[1]], [r_bp[2], 0.0, -r_bp[0]], [-r_bp[1], r_bp[0], 0.0]])
    QS = Q @ skew_bp
    cent_p = Q @ _cross(omega, _cross(omega, r_bp))
    for i in range(3):
        A[6 + i, i] = m_p
        for j in range(3):
            A[6 + i, 3 + j] = -m_p * QS[i, j]
        A[6 + i, 6] = m_p * l_p * J[i, 0]
        A[6 + i, 7] = m_p * l_p * J[i, 1]
        A[6 + i, 8] = e_p[i]
        b[6 + i] = drag_p[i] - m_p * (cent_p[i] + l_p * curv[i])
    b[8] -= m_p * g

    if with_rovers:
        for k in range(n):
            r = r_bi[k]
            anchor = x[0:3] + Q @ r
            anchor_vel = vel + Q @ _cross(omega, r)
            dr = np.array([ugv[k, 0] - anchor[0], ugv[k, 1] - anchor[1], -anchor[2]])
            dr_dot = np.array([ugv[k, 3] - anchor_vel[0], ugv[k, 4] - anchor_vel[1], -anchor_vel[2]])
            length = np.sqrt(dr @ dr)
            if length < 1e-12:
                return A, b, False
            e_k = dr / length
            mom_k = _cross(r, R @ e_k)
            row_w = _cross(R @ dr, r)
            cent = Q @ _cross(omega, _cross(omega, r))
            rover_acc = np.array([acc[k, 0], acc[k, 1], 0.0])
            col = 9 + k
            for i in range(3):
                A[i, col] = -e_k[i]
                A[3 + i, col] = -mom_k[i]
                A[col, i] = -dr[i]
                A[col, 3 + i] = row_w[i]
            b[col] = (-(dr_dot @ dr_dot) - 2.0 * alpha * (dr @ dr_dot)
                      - 0.5 * beta * beta * (length * length - l_r * l_r)
                      - dr @ (rover_acc - cent))
    return A, b, True


def assemble_constrained_system(x, ugv_states, ugv_accels, params, env):
    """Build ``A u = b`` for u = [r_B ddot, omega_dot, Theta_P ddot, |T_P|, |T_1..n|].

    Rows: balloon translation (3, with added mass), balloon rotation in the
    body frame (3), payload translation (3, payload acceleration expanded from
    its position kinematics) and one Baumgarte-stabilised acceleration-level
    length constraint per rover tether.
    """
    bp, pp = params.balloon, params.payload
    n = len(bp.ugv_attach)
    x = np.ascontiguousarray(x, dtype=float)
    if n:
        ugv = np.ascontiguousarray(np.atleast_2d(ugv_states), dtype=float)
        acc = np.ascontiguousarray(np.atleast_2d(ugv_accels), dtype=float)
    else:
        ugv = np.zeros((0, 6))
        acc = np.zeros((0, 2))
    A, b, ok = _assemble_kernel(
        x, ugv, acc, n > 0,
        np.ascontiguousarray(bp.inertia, dtype=float),
        np.ascontiguousarray(bp.payload_attach, dtype=float),
        np.ascontiguousarray(bp.ugv_attach, dtype=float).reshape(n, 3),
        added_mass(bp, env), buoyancy_force(bp, env),
        0.5 * env.air_density * bp.drag_coeff * bp.reference_area,
        pp.mass, pp.tether_length, 0.5 * env.air_density * pp.drag_area,
        env.gravity, np.ascontiguousarray(env.wind, dtype=float),
        params.baumgarte_alpha, params.baumgarte_beta, params.tether.length,
    )
    if not ok:
        raise SingularConfiguration("rover coincides with its balloon anchor")
    return A, b


def _split(u, n, active):
    tensions = np.where(active, u[N_BODY_UNKNOWNS:N_BODY_UNKNOWNS + n], 0.0)
    return TensionSolution(
        payload_tension=float(u[8]),
        ugv_tensions=tensions,
        slack=~active,
        balloon_accel=u[0:3].copy(),
        omega_dot=u[3:6].copy(),
        swing_accel=u[6:8].copy(),
    )


def _solve_subset(A, b, active):
    if active.all():
        A_sub, b_sub = A, b
    else:
        keep = np.concatenate([np.ones(N_BODY_UNKNOWNS, dtype=bool), active])
        A_sub, b_sub = A[np.ix_(keep, keep)], b[keep]
    try:
        return solve_dense_linear(A_sub, b_sub)
    except SingularMatrix as exc:
        raise SingularConfiguration(str(exc)) from exc


def _complementary(A, b, u_full, active, tol):
    """True if active tensions are >= 0 and inactive tethers are not being stretched."""
    if np.any(u_full[N_BODY_UNKNOWNS:][active] < -tol):
        return False
    for i in np.flatnonzero(~active):
        row = N_BODY_UNKNOWNS + i
        # stabilised stretch rate of a released tether must not be positive
        if A[row, :N_BODY_UNKNOWNS] @ u_full[:N_BODY_UNKNOWNS] - b[row] > tol:
            return False
    return True


def solve_tensions(A, b, tol=1e-9):
    """Solve the assembled system with non-negative rover-tether tensions.

    Starts with every tether taut; while a tension comes out negative the most
    negative one is released (tension fixed at zero, its constraint row
    dropped) and the system is re-solved.  If the clamped set does not satisfy
    complementarity, all taut/slack combinations are enumerated.
    """
    n = A.shape[0] - N_BODY_UNKNOWNS
    active = np.ones(n, dtype=bool)

    def expand(sol, act):
        u = np.zeros(N_BODY_UNKNOWNS + n)
        u[:N_BODY_UNKNOWNS] = sol[:N_BODY_UNKNOWNS]
        u[N_BODY_UNKNOWNS:][act] = sol[N_BODY_UNKNOWNS:]
        return u

    for _ in range(n + 1):
        sol = _solve_subset(A, b, active)
        tensions = sol[N_BODY_UNKNOWNS:]
        if tensions.size == 0 or tensions.min() >= 0.0:
            break
        idx = np.flatnonzero(active)[np.argmin(tensions)]
        active[idx] = False
    else:
        raise NoConvergence("tension clamping did not terminate")

    u = expand(sol, active)
    if n and not _complementary(A, b, u, active, tol):
        for mask in range(2**n - 1, -1, -1):
            cand = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
            try:
                sol = _solve_subset(A, b, cand)
            except SingularConfiguration:
                continue
            u_c = expand(sol, cand)
            if _complementary(A, b, u_c, cand, tol):
                u, active = u_c, cand
                break
    u[N_BODY_UNKNOWNS:] = np.maximum(u[N_BODY_UNKNOWNS:], 0.0)
    return _split(u, n, active)


def _rates_to_derivative(x, sol):
    att = x[ATT]
    att_rate = x[ATT_RATE]
    E_dot = euler_rate_matrix_dot(att, att_rate)
    att_acc = euler_rates_from_body_omega(att, sol.omega_dot - E_dot @ att_rate)
    dx = np.empty(STATE_SIZE)
    dx[0:8] = x[8:16]
    dx[VEL] = sol.balloon_accel
    dx[ATT_RATE] = att_acc
    dx[SWING_RATE] = sol.swing_accel
    return dx


def evaluate(x, ugv_states, ugv_accels, params, env):
    """State derivative together with the tension solution that produced it."""
    x = np.asarray(x, dtype=float)
    A, b = assemble_constrained_system(x, ugv_states, ugv_accels, params, env)
    sol = solve_tensions(A, b)
    return _rates_to_derivative(x, sol), sol


def state_derivative(x, ugv_states, ugv_accels, params, env):
    return evaluate(x, ugv_states, ugv_accels, params, env)[0]


def derivative_given_tensions(x, ugv_states, tensions, params, env):
    """Balloon-payload derivative with rover tether tensions prescribed.

    This is the prediction model used by the controller: tether tensions are
    inputs and the length constraints are imposed separately.
    """
    x = np.asarray(x, dtype=float)
    n = len(params.balloon.ugv_attach)
    A, b = assemble_constrained_system(x, ugv_states, np.zeros((n, 2)), params, env)
    rhs = b[:N_BODY_UNKNOWNS] - A[:N_BODY_UNKNOWNS, N_BODY_UNKNOWNS:] @ np.asarray(tensions, dtype=float)
    try:
        sol = solve_dense_linear(A[:N_BODY_UNKNOWNS, :N_BODY_UNKNOWNS], rhs)
    except SingularMatrix as exc:
        raise SingularConfiguration(str(exc)) from exc
    ts = TensionSolution(
        payload_tension=float(sol[8]),
        ugv_tensions=np.asarray(tensions, dtype=float),
        slack=np.zeros(n, dtype=bool),
        balloon_accel=sol[0:3],
        omega_dot=sol[3:6],
        swing_accel=sol[6:8],
    )
    return _rates_to_derivative(x, ts)


def mechanical_energy(x, params, env):
    """Kinetic energy plus gravitational/buoyant potential of balloon and payload [J]."""
    bp, pp = params.balloon, params.payload
    omega = euler_rate_matrix(x[ATT]) @ x[ATT_RATE]
    v_p = payload_velocity(x, bp, pp)
    r_p = payload_position(x, bp, pp)
    kinetic = 0.5 * added_mass(bp, env) * x[VEL] @ x[VEL] + 0.5 * omega @ bp.inertia @ omega + 0.5 * pp.mass * v_p @ v_p
    potential = -buoyancy_force(bp, env) * x[2] + pp.mass * env.gravity * r_p[2]
    return kinetic + potential
