"""Self-checks of the simulator and controller against independent oracles.

Each check returns a :class:`CheckResult`; :func:`run_checks` executes the
suite used by ``tethersim validate``.
"""

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import dynamics, simulation as sim
from .config import ScenarioConfig
from .dynamics import SWING
from .mpc import PredictionModel, jacobian
from .qp import QuadraticProgram, solve_qp

ENERGY_LIMIT = 1e-3
DRIFT_LIMIT = 1e-3  # fraction of l_R
PENDULUM_LIMIT = 1e-2
JACOBIAN_LIMIT = 1e-4
QP_LIMIT = 1e-6
UNCONSTRAINED_LIMIT = 1e-8
HELD_PIVOT_INERTIA = 1e4


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<22} {self.value:12.3e} (limit {self.limit:.1e}) {self.detail}"


def _zero_inputs(n):
    zero = np.zeros((n, 3))
    return lambda t: zero


# -- scenario builders ------------------------------------------------------


def energy_setup(swing=(0.0, 0.3)):
    """Neutrally buoyant, drag-free balloon with every rover tether slack.

    Rovers sit directly beneath their anchors, closer than ``l_R``; the payload
    starts swinging.  Returns ``(config, state)``.
    """
    base = ScenarioConfig()
    bp = base.system_params().balloon
    env = base.environment_base()
    lift_only = (env.air_density - base.balloon.gas_density) * bp.volume
    neutral_mass = lift_only - base.payload.mass
    cfg = ScenarioConfig.model_validate({
        "balloon": {"structural_mass": neutral_mass, "drag_coeff": 0.0},
        "payload": {"drag_area": 0.0},
        "mpc": {"enabled": False},
    })
    params = cfg.system_params()
    x = np.zeros(dynamics.STATE_SIZE)
    x[2] = 2.0
    x[SWING] = swing
    ugvs = np.zeros((params.n, 6))
    ugvs[:, 0:2] = params.balloon.ugv_attach[:, 0:2]
    return cfg, sim.SystemState(0.0, x, ugvs)


def energy_drift(duration=10.0, dt=1e-3):
    """Maximum relative deviation of mechanical energy over the slack-tether run."""
    cfg, state = energy_setup()
    cfg = sim.with_overrides(cfg, dt=dt, telemetry_rate=10.0)
    params, env = cfg.system_params(), cfg.environment_base()
    records = sim._simulate(cfg, _zero_inputs(params.n), duration=duration, state=state)
    if any(r.slack.sum() < params.n for r in records):
        raise RuntimeError("energy run: a rover tether became taut")
    energy = np.array([dynamics.mechanical_energy(r.balloon_payload, params, env) for r in records])
    return float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))


def drift_setup(alpha=5.0, beta=5.0, kick=0.01):
    """Hover with taut tethers and a balloon velocity inconsistent with the tether lengths."""
    cfg = ScenarioConfig.model_validate({
        "initial": {"payload_position": [0.0, 0.0, 0.5]},
        "mpc": {"enabled": False},
        "sim": {"baumgarte_alpha": alpha, "baumgarte_beta": beta},
    })
    state = sim.initial_state(cfg)
    state.balloon_payload[8] += kick
    return cfg, state


def max_tether_error(records, params):
    """Largest ``| |dr_i| - l_R | / l_R`` over the records."""
    return max(float(np.max(np.abs(sim.tether_length_error(r.balloon_payload, r.ugvs, params))))
               for r in records) / params.tether.length


def constraint_drift(duration=10.0, alpha=5.0, beta=5.0):
    cfg, state = drift_setup(alpha, beta)
    params = cfg.system_params()
    records = sim._simulate(cfg, _zero_inputs(params.n), duration=duration, state=state)
    return max_tether_error(records, params)


def held_pivot_config(swing=0.01, inertia=HELD_PIVOT_INERTIA):
    """Default system with a balloon whose rotational inertia pins the pendulum pivot."""
    return ScenarioConfig.model_validate({
        "balloon": {"inertia": np.diag([inertia] * 3).tolist()},
        "initial": {"swing": [0.0, swing]},
        "mpc": {"enabled": False},
        "sim": {"telemetry_rate": 1000.0},
    })


def oscillation_frequency(t, signal):
    """Mean frequency from linearly interpolated upward zero crossings."""
    s = np.asarray(signal)
    idx = np.where((s[:-1] < 0) & (s[1:] >= 0))[0]
    if len(idx) < 2:
        raise RuntimeError("fewer than two zero crossings")
    tc = t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])
    return 1.0 / np.mean(np.diff(tc))


def swing_frequency(config, duration=15.0):
    records = sim.run_scenario(config, duration=duration)
    t = np.array([r.time for r in records])
    theta = np.array([r.balloon_payload[7] for r in records])
    return oscillation_frequency(t, theta)


def pendulum_error(duration=15.0):
    cfg = held_pivot_config()
    f = swing_frequency(cfg, duration)
    g, l_p = cfg.environment.gravity, cfg.payload.tether_length
    ideal = np.sqrt(g / l_p) / (2.0 * np.pi)
    return abs(f / ideal - 1.0)


def random_feasible_point(rng, params):
    """Random taut configuration near hover with random rates and inputs."""
    x = np.zeros(dynamics.STATE_SIZE)
    x[0:3] = rng.uniform([-1.0, -1.0, 1.4], [1.0, 1.0, 2.1])
    x[3:6] = rng.uniform(-0.2, 0.2, 3)
    x[6:8] = rng.uniform(-0.4, 0.4, 2)
    x[8:16] = rng.uniform(-0.3, 0.3, 8)
    R = dynamics.rotation_from_euler(x[3:6])
    anchors = x[0:3] + params.balloon.ugv_attach @ R
    n = params.n
    ugvs = np.zeros((n, 6))
    for i in range(n):
        h = anchors[i, 2]
        if abs(h) >= params.tether.length:
            raise RuntimeError("anchor out of tether reach")
        radial = anchors[i, :2] - x[0:2]
        radial /= np.linalg.norm(radial)
        ugvs[i, 0:2] = anchors[i, :2] + np.sqrt(params.tether.length**2 - h**2) * radial
    ugvs[:, 2] = rng.uniform(-np.pi, np.pi, n)
    ugvs[:, 3:6] = rng.uniform(-0.3, 0.3, (n, 3))
    u = np.concatenate([rng.uniform(1.0, 10.0, n), rng.uniform(-0.1, 0.1, 3 * n)])
    return np.concatenate([x, ugvs.ravel()]), u


def jacobian_relative_error(J, J_ref):
    """Worst column-wise relative discrepancy."""
    num = np.linalg.norm(J - J_ref, axis=0)
    den = np.maximum(np.linalg.norm(J_ref, axis=0), 1e-8)
    return float(np.max(num / den))


def jacobian_fidelity(samples=100, seed=0):
    """Central differences at ``h`` vs. Richardson-refined central differences."""
    params = dynamics.SystemParams.default()
    model = PredictionModel(params, dynamics.Environment())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x0, u0 = random_feasible_point(rng, params)
        v0 = np.concatenate([x0, u0])
        nx = len(x0)

        def f(v):
            return model.derivative(v[:nx], v[nx:])

        J = jacobian(f, v0)
        # Richardson extrapolation of central differences with larger steps
        J1 = jacobian(f, v0, rel=1e-4)
        J2 = jacobian(f, v0, rel=5e-5)
        J_ref = (4.0 * J2 - J1) / 3.0
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(J_ref))):
            raise RuntimeError("non-finite Jacobian")
        worst = max(worst, jacobian_relative_error(J, J_ref))
    return worst


# -- QP oracle --------------------------------------------------------------


@njit(cache=True)
def _fista_box(Q, q, lb, ub, z0, step, tol, max_iter):
    z_prev = z0.copy()
    w = z0.copy()
    t = 1.0
    for _ in range(max_iter):
        z_new = np.minimum(np.maximum(w - step * (Q @ w + q), lb), ub)
        d = z_new - z_prev
        if np.max(np.abs(d)) < tol:
            return z_new
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = z_new + ((t - 1.0) / t_new) * d
        if d @ (w - z_new) > 0.0:  # adaptive restart
            w = z_new.copy()
            t_new = 1.0
        z_prev = z_new
        t = t_new
    return z_prev


def projected_gradient_qp(prob, tol=1e-12, max_outer=200, max_inner=1000000):
    """Augmented-Lagrangian outer loop with accelerated projected gradient on the box.

    Deliberately unrelated to the interior-point solver; slow but reliable on
    well-conditioned problems.
    """
    H, g, A, b = prob.H, prob.g, prob.A_eq, prob.b_eq
    if len(prob.h):
        raise ValueError("oracle handles box and equality constraints only")
    lb, ub = prob.lb, prob.ub
    rho = max(1.0, np.linalg.norm(H, 2))
    y = np.zeros(len(b))
    Q = np.ascontiguousarray(H + rho * A.T @ A)
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    z = np.clip(np.zeros(prob.n), lb, ub)
    for _ in range(max_outer):
        q = g + A.T @ y - rho * A.T @ b
        z = _fista_box(Q, q, lb, ub, z, step, tol, max_inner)
        r = A @ z - b
        y = y + rho * r
        if len(b) == 0 or np.max(np.abs(r)) < tol:
            break
    return z


def random_box_qp(rng, n=None, n_eq=None, unconstrained=False):
    n = int(rng.integers(2, 61)) if n is None else n
    M = rng.normal(size=(n, n))
    H = M.T @ M / n + 0.1 * np.eye(n)
    g = rng.normal(size=n) * 3.0
    if unconstrained:
        return QuadraticProgram(H, g)
    lb = -rng.uniform(0.1, 1.0, n)
    ub = rng.uniform(0.1, 1.0, n)
    n_eq = int(rng.integers(0, max(1, n // 4) + 1)) if n_eq is None else n_eq
    A = rng.normal(size=(n_eq, n))
    z_feas = rng.uniform(0.5 * lb, 0.5 * ub)
    return QuadraticProgram(H, g, A, A @ z_feas, lb=lb, ub=ub)


def qp_oracle_error(samples=100, seed=0):
    """Worst relative objective gap to the oracle and worst unconstrained solution error."""
    rng = np.random.default_rng(seed)
    worst_obj = 0.0
    worst_free = 0.0
    for i in range(samples):
        prob = random_box_qp(rng)
        res = solve_qp(prob)
        if not res.ok:
            return np.inf, np.inf
        f_ref = prob.objective(projected_gradient_qp(prob))
        worst_obj = max(worst_obj, abs(res.objective - f_ref) / max(1.0, abs(f_ref)))
        free = random_box_qp(rng, unconstrained=True)
        z_ref = np.linalg.solve(free.H, -free.g)
        z = solve_qp(free).z
        worst_free = max(worst_free, float(np.max(np.abs(z - z_ref)) / max(1.0, np.max(np.abs(z_ref)))))
    return worst_obj, worst_free


# -- integrator order -------------------------------------------------------


def benchmark_state():
    """Taut hover with the payload swinging and rovers moving."""
    cfg = ScenarioConfig.model_validate({
        "initial": {"payload_position": [0.0, 0.0, 0.5], "swing": [0.1, 0.2]},
        "mpc": {"enabled": False},
    })
    return cfg, sim.initial_state(cfg)


def rk4_order(duration=5.0, steps=(0.01, 0.005, 0.0025), reference_dt=0.0005):
    """Empirical convergence orders from successive step halvings against a fine reference."""
    cfg, state0 = benchmark_state()
    params = cfg.system_params()
    env = cfg.environment_base()
    accel = np.zeros((params.n, 3))
    accel[:, 0] = 0.02

    def final(dt):
        st = sim.SystemState(0.0, state0.balloon_payload.copy(), state0.ugvs.copy())
        for _ in range(int(round(duration / dt))):
            st = sim.rk4_step(st, accel, dt, params, env)
        return st.flat()

    ref = final(reference_dt)
    errs = [np.linalg.norm(final(dt) - ref) for dt in steps]
    orders = [np.log2(errs[i] / errs[i + 1]) * np.log(2) / np.log(steps[i] / steps[i + 1])
              for i in range(len(steps) - 1)]
    return orders, errs


# -- suite ------------------------------------------------------------------


def run_checks(fast=False, baumgarte=None):
    """Run the validation suite; ``baumgarte=(alpha, beta)`` overrides the drift-check gains."""
    alpha, beta = baumgarte if baumgarte is not None else (5.0, 5.0)
    checks = [
        ("energy", lambda: energy_drift(3.0 if fast else 10.0), ENERGY_LIMIT, "relative drift"),
        ("constraint_drift", lambda: constraint_drift(5.0 if fast else 10.0, alpha, beta), DRIFT_LIMIT,
         f"|len-l_R|/l_R, gains {alpha:g}/{beta:g}"),
        ("pendulum_frequency", lambda: pendulum_error(8.0 if fast else 15.0), PENDULUM_LIMIT, "relative error"),
        ("jacobian", lambda: jacobian_fidelity(10 if fast else 100), JACOBIAN_LIMIT, "column relative error"),
        ("qp_oracle", lambda: qp_oracle_error(10 if fast else 100)[0], QP_LIMIT, "relative objective gap"),
    ]
    results = []
    for name, fn, limit, detail in checks:
        t0 = time.perf_counter()
        try:
            value = float(fn())
            passed = bool(value < limit)
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            value, passed, detail = np.inf, False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, passed, value, limit, detail, time.perf_counter() - t0))
    return results
