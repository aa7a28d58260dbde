"""Linear-time-varying model predictive control of the rover fleet.

Each control step the coupled balloon/payload/rover model is linearised at the
current state, discretised with zero-order hold, condensed over the horizon
into a QP in the (scaled) input sequence and solved.  Tether tensions are
decision variables of the prediction model; only the rover accelerations of
the first input block are emitted.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import STATE_SIZE, SWING_RATE
from .errors import InfeasibleBounds
from .qp import OPTIMAL, QuadraticProgram, solve_qp
from .ugv import UGV_STATE_SIZE, ckm_derivative, clip_inputs

log = logging.getLogger(__name__)

N_OUTPUTS = 5
FAILSAFE_DECAY = 0.5
TAYLOR_ORDER = 4
SQUARING_THRESHOLD = 2.0**-8

TRACE_COLUMNS = ("t", "status", "iterations", "cost", "n_active", "failsafe")


# -- reference schedule ---------------------------------------------------


@dataclass
class ReferenceSchedule:
    times: np.ndarray  # (W,) strictly increasing activation times
    positions: np.ndarray  # (W, 3)
    swing_rates: np.ndarray  # (W, 2)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.swing_rates = np.asarray(self.swing_rates, dtype=float).reshape(-1, 2)
        if len(self.times) == 0:
            raise ValueError("reference schedule needs at least one waypoint")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("activation times must be strictly increasing")

    @classmethod
    def constant(cls, position):
        return cls([0.0], [position], [[0.0, 0.0]])

    @classmethod
    def from_waypoints(cls, waypoints):
        return cls([w.t for w in waypoints], [w.position for w in waypoints],
                   [w.swing_rate for w in waypoints])

    def at(self, t):
        """Output reference active at ``t``; the first waypoint applies before its time."""
        i = max(0, int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1)
        return np.concatenate([self.positions[i], self.swing_rates[i]])

    def preview(self, t, sample_time, horizon):
        """References for prediction steps ``k = 1..horizon`` at ``t + k*sample_time``."""
        return np.array([self.at(t + k * sample_time) for k in range(1, horizon + 1)])


# -- prediction model -----------------------------------------------------


class PredictionModel:
    """Stacked state ``[balloon/payload (16), rovers (6n)]``, inputs ``[tensions (n), accels (3n)]``."""

    def __init__(self, params, env):
        self.params = params
        self.env = env
        self.n = params.n
        self.nx = STATE_SIZE + UGV_STATE_SIZE * self.n
        self.nu = 4 * self.n

    def split(self, x):
        return x[:STATE_SIZE], x[STATE_SIZE:].reshape(self.n, UGV_STATE_SIZE)

    def derivative(self, x, u):
        bp, ugvs = self.split(x)
        tens = u[:self.n]
        acc = u[self.n:].reshape(self.n, 3)
        out = np.empty(self.nx)
        out[:STATE_SIZE] = dynamics.derivative_given_tensions(bp, ugvs, tens, self.params, self.env)
        out[STATE_SIZE:] = ckm_derivative(ugvs, acc).ravel()
        return out

    def output(self, x):
        bp, _ = self.split(x)
        r_p = dynamics.payload_position(bp, self.params.balloon, self.params.payload)
        return np.concatenate([r_p, bp[SWING_RATE]])

    def constraint(self, x):
        """Squared tether lengths ``K_i(x)``."""
        bp, ugvs = self.split(x)
        dr, _ = dynamics.tether_vectors(bp, ugvs, self.params.balloon)
        return np.einsum("ij,ij->i", dr, dr)


def _fd_step(v, rel):
    return np.maximum(1e-6, rel * np.abs(v))


def jacobian(fun, x0, rel=1e-6, central=True):
    """Finite-difference Jacobian with per-variable step ``max(1e-6, rel*|x|)``."""
    x0 = np.asarray(x0, dtype=float)
    f0 = None if central else np.asarray(fun(x0))
    h = _fd_step(x0, rel)
    cols = []
    for j in range(len(x0)):
        xp = x0.copy()
        xp[j] += h[j]
        if central:
            xm = x0.copy()
            xm[j] -= h[j]
            cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h[j]))
        else:
            cols.append((np.asarray(fun(xp)) - f0) / h[j])
    return np.column_stack(cols)


@dataclass
class LinearizedModel:
    A: np.ndarray
    B: np.ndarray
    residual: np.ndarray  # f(x0,u0) - A x0 - B u0
    C: np.ndarray
    y_offset: np.ndarray  # y(x0) - C x0
    G: np.ndarray  # constraint Jacobian (n, nx)
    g_offset: np.ndarray  # K(x0) - G x0
    x0: np.ndarray
    u0: np.ndarray


def linearize(f, x0, u0, rel=1e-6):
    """Central-difference ``(A, B, residual)`` of ``xdot = f(x, u)`` about ``(x0, u0)``."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    A = jacobian(lambda x: f(x, u0), x0, rel)
    B = jacobian(lambda u: f(x0, u), u0, rel)
    residual = f(x0, u0) - A @ x0 - B @ u0
    return A, B, residual


def linearize_model(model, x0, u0):
    A, B, residual = linearize(model.derivative, x0, u0)
    C = jacobian(model.output, x0)
    G = jacobian(model.constraint, x0)
    return LinearizedModel(A, B, residual, C, model.output(x0) - C @ x0,
                           G, model.constraint(x0) - G @ x0, x0.copy(), u0.copy())


# -- discretisation -------------------------------------------------------


def expm_taylor(M, order=TAYLOR_ORDER, threshold=SQUARING_THRESHOLD):
    """Matrix exponential by truncated Taylor series with scaling and squaring."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    s = 0 if norm <= threshold else int(np.ceil(np.log2(norm / threshold)))
    X = M / 2.0**s
    E = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, order + 1):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def discretize(A, B, residual, sample_time):
    """Zero-order-hold discretisation via the augmented exponential of ``[[A, B, c], [0, 0, 0]]``."""
    if sample_time <= 0:
        raise ValueError("sample_time must be positive")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(len(A), -1)
    c = np.asarray(residual, dtype=float).reshape(len(A))
    nx, nu = B.shape
    M = np.zeros((nx + nu + 1, nx + nu + 1))
    M[:nx, :nx] = A
    M[:nx, nx:nx + nu] = B
    M[:nx, -1] = c
    E = expm_taylor(M * sample_time)
    return E[:nx, :nx], E[:nx, nx:nx + nu], E[:nx, -1]


# -- condensed QP ---------------------------------------------------------


@dataclass
class MpcProblem:
    qp: QuadraticProgram
    input_scale: np.ndarray  # c_u per input; u = z / c_u
    horizon: int
    nu: int
    cost_constant: float
    predicted_outputs: np.ndarray = field(default=None, repr=False)  # (N, 5, nz) map and offsets
    output_offsets: np.ndarray = field(default=None, repr=False)

    @property
    def H(self):
        return self.qp.H

    @property
    def g(self):
        return self.qp.g

    def inputs(self, z):
        """Unscaled ``(N, nu)`` input sequence from a scaled decision vector."""
        return (np.asarray(z).reshape(self.horizon, self.nu) / self.input_scale)

    def cost(self, z):
        return float(self.qp.objective(z) + self.cost_constant)

    def outputs(self, z):
        """Predicted ``(N, 5)`` outputs for a scaled decision vector."""
        return np.einsum("kij,j->ki", self.predicted_outputs, z) + self.output_offsets


def _stack_models(steps, x0):
    """Condensed predictions ``x_k = v_k + M_k U`` for ``k = 1..N``."""
    N = len(steps)
    nx, nu = steps[0][1].shape
    M = np.zeros((nx, N * nu))
    v = np.asarray(x0, dtype=float).copy()
    Ms, vs = [], []
    for k, (Ad, Bd, cd) in enumerate(steps):
        M = Ad @ M
        M[:, k * nu:(k + 1) * nu] += Bd
        v = Ad @ v + cd
        Ms.append(M.copy())
        vs.append(v.copy())
    return np.array(Ms), np.array(vs)


def _rover_rows(n):
    """Indices into the stacked state of rover (x, y) and (vx, vy)."""
    pos, vel = [], []
    for i in range(n):
        base = STATE_SIZE + UGV_STATE_SIZE * i
        pos += [base, base + 1]
        vel += [base + 3, base + 4]
    return np.array(pos), np.array(vel)


def build_qp(lin, config, refs, x0, u_prev, n, tether_length):
    """Condensed horizon QP in scaled inputs ``z = c_u * u``.

    ``lin`` is a single :class:`LinearizedModel` (held along the horizon) or a
    list of ``N`` of them.  ``refs`` is the ``(N, 5)`` previewed reference.
    """
    if config.a_u <= 0:
        raise InfeasibleBounds("a_u must be positive")
    for name in ("rover_position_bound", "rover_speed_bound", "payload_position_bound"):
        if getattr(config, name) <= 0:
            raise InfeasibleBounds(f"{name} must be positive")
    N = config.horizon
    lins = list(lin) if isinstance(lin, (list, tuple)) else [lin] * N
    if len(lins) != N:
        raise ValueError(f"need {N} linearizations, got {len(lins)}")
    refs = np.asarray(refs, dtype=float).reshape(N, N_OUTPUTS)
    nx, nu = lins[0].B.shape
    nz = N * nu

    cache = {}
    steps = []
    for L in lins:
        key = id(L)
        if key not in cache:
            cache[key] = discretize(L.A, L.B, L.residual, config.sample_time)
        steps.append(cache[key])
    Ms, vs = _stack_models(steps, x0)

    c_u = config.input_scales(n)
    w_du = config.input_weights(n)
    if len(c_u) != nu or len(w_du) != nu:
        raise ValueError("input weight/scale length mismatch")
    inv_scale = np.tile(1.0 / c_u, N)
    wy = np.asarray(config.c_y, dtype=float) * np.asarray(config.w_y, dtype=float)

    # tracking terms: W_y (y_k - r_k) = E_k z + f_k, with y_{k+1} from x_{k+1}
    E = np.empty((N, N_OUTPUTS, nz))
    F = np.empty((N, N_OUTPUTS))
    Y_map = np.empty((N, N_OUTPUTS, nz))
    Y_off = np.empty((N, N_OUTPUTS))
    for k in range(N):
        L = lins[k]
        Y_map[k] = (L.C @ Ms[k]) * inv_scale
        Y_off[k] = L.C @ vs[k] + L.y_offset
        E[k] = wy[:, None] * Y_map[k]
        F[k] = wy * (Y_off[k] - refs[k])
    E2 = E.reshape(N * N_OUTPUTS, nz)
    F2 = F.reshape(-1)

    # input-variation terms in scaled units: (c_u*w_du)(u_k - u_{k-1}) = w_du (z_k - z_{k-1})
    D = np.eye(nz)
    D[nu:, :-nu] -= np.eye(nz - nu)
    D = np.tile(w_du, N)[:, None] * D
    d0 = np.zeros(nz)
    d0[:nu] = -w_du * c_u * np.asarray(u_prev, dtype=float)

    H = 2.0 * (E2.T @ E2 + D.T @ D) + config.regularization * np.eye(nz)
    H = 0.5 * (H + H.T)
    g = 2.0 * (E2.T @ F2 + D.T @ d0)
    const = float(F2 @ F2 + d0 @ d0)

    # equalities: linearised tether lengths at every predicted state, yaw input zero
    eq_rows, eq_rhs = [], []
    l2 = tether_length**2
    for k in range(N):
        L = lins[k]
        eq_rows.append((L.G @ Ms[k]) * inv_scale)
        eq_rhs.append(l2 - L.g_offset - L.G @ vs[k])
    yaw = np.zeros((N * n, nz))
    for k in range(N):
        for i in range(n):
            yaw[k * n + i, k * nu + n + 3 * i + 2] = 1.0
    A_eq = np.vstack(eq_rows + [yaw])
    b_eq = np.concatenate(eq_rhs + [np.zeros(N * n)])

    # state/output boxes
    pos_idx, vel_idx = _rover_rows(n)
    G_rows, h_rows = [], []
    for k in range(N):
        for idx, bound in ((pos_idx, config.rover_position_bound), (vel_idx, config.rover_speed_bound)):
            S = Ms[k][idx] * inv_scale
            G_rows += [S, -S]
            h_rows += [bound - vs[k][idx], bound + vs[k][idx]]
        P = Y_map[k][:3]
        G_rows += [P, -P]
        h_rows += [config.payload_position_bound - Y_off[k][:3], config.payload_position_bound + Y_off[k][:3]]
    G = np.vstack(G_rows)
    h = np.concatenate(h_rows)

    lb_step = np.concatenate([np.zeros(n), np.full(3 * n, -config.a_u)]) * c_u
    ub_step = np.concatenate([np.full(n, np.inf), np.full(3 * n, config.a_u)]) * c_u
    qp = QuadraticProgram(H, g, A_eq, b_eq, G, h, np.tile(lb_step, N), np.tile(ub_step, N))
    return MpcProblem(qp, c_u, N, nu, const, Y_map, Y_off)


# -- controller -----------------------------------------------------------


@dataclass
class TraceRow:
    time: float
    status: str
    iterations: int
    cost: float
    n_active: int
    failsafe: bool
    first_input: np.ndarray


class MpcController:
    """Receding-horizon controller compatible with :func:`tethersim.simulation.run_scenario`."""

    def __init__(self, config, schedule=None):
        self.config = config
        self.schedule = schedule
        self.sample_time = config.sample_time
        self.trace = []
        self.failsafe_count = 0
        self.last_solution = None

    def reset(self, state, params, env):
        self.params = params
        self.model = PredictionModel(params, env)
        if self.schedule is None:
            r_p = dynamics.payload_position(state.balloon_payload, params.balloon, params.payload)
            self.schedule = ReferenceSchedule.constant(r_p)
        self.prev_accels = np.zeros((params.n, 3))
        self.trace = []
        self.failsafe_count = 0
        self.last_solution = None

    def _nominal_input(self, state):
        """Previous accelerations with the tensions the simulator would produce under them."""
        n = self.params.n
        _, sol = dynamics.evaluate(state.balloon_payload, state.ugvs, self.prev_accels[:, 0:2],
                                   self.params, self.model.env)
        return np.concatenate([sol.ugv_tensions, self.prev_accels.ravel()])[: 4 * n]

    def plan(self, state):
        """Build and solve the horizon QP; returns ``(problem, result, u0)``."""
        cfg = self.config
        x0 = state.flat()
        u0 = self._nominal_input(state)
        if cfg.relinearize:
            lins = self._trajectory_linearizations(x0, u0)
        else:
            lins = linearize_model(self.model, x0, u0)
        refs = self.schedule.preview(state.time, cfg.sample_time, cfg.horizon)
        problem = build_qp(lins, cfg, refs, x0, u0, self.params.n, self.params.tether.length)
        result = solve_qp(problem.qp, max_iter=cfg.max_iter, tol=cfg.tol)
        return problem, result, u0

    def _trajectory_linearizations(self, x0, u0):
        lins = []
        x = x0.copy()
        for _ in range(self.config.horizon):
            L = linearize_model(self.model, x, u0)
            lins.append(L)
            Ad, Bd, cd = discretize(L.A, L.B, L.residual, self.config.sample_time)
            x = Ad @ x + Bd @ u0 + cd
        return lins

    def control_step(self, state):
        n = self.params.n
        try:
            problem, result, _ = self.plan(state)
            ok = result.status == OPTIMAL
        except Exception as exc:  # noqa: BLE001 - any model failure engages the fail-safe
            log.warning("t=%.2f: MPC step failed: %s", state.time, exc)
            problem, result, ok = None, None, False
        if ok:
            seq = problem.inputs(result.z)
            self.last_solution = seq
            accels = seq[0, n:].reshape(n, 3)
            u = clip_inputs(accels, self.config.a_u)
        else:
            self.failsafe_count += 1
            u = clip_inputs(FAILSAFE_DECAY * self.prev_accels, self.config.a_u)
            log.info("t=%.2f: fail-safe engaged (status %s)", state.time,
                     result.status if result is not None else "error")
        self.trace.append(TraceRow(
            time=state.time,
            status=result.status if result is not None else "error",
            iterations=result.iterations if result is not None else 0,
            cost=problem.cost(result.z) if ok else float("nan"),
            n_active=int(np.count_nonzero(result.active)) if result is not None else 0,
            failsafe=not ok,
            first_input=(seq[0].copy() if ok else np.concatenate([np.zeros(n), u.ravel()])),
        ))
        self.prev_accels = u
        return u


def controller_from_config(config):
    """MPC controller for a :class:`~tethersim.config.ScenarioConfig`, or ``None`` if disabled."""
    if not config.mpc.enabled:
        return None
    schedule = ReferenceSchedule.from_waypoints(config.references) if config.references else None
    return MpcController(config.mpc, schedule)
