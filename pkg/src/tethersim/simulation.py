"""Fixed-step integration of the balloon, payload and rover fleet."""

import logging
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import POS, SWING, SWING_RATE, STATE_SIZE
from .errors import InfeasibleInitialState, NumericalBlowup, ProfileGap, SingularConfiguration
from .spatial import solve_dense_linear
from .ugv import UGV_STATE_SIZE, ckm_derivative

log = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e6
RAMP_TIME = 0.5


@dataclass
class SystemState:
    time: float
    balloon_payload: np.ndarray  # (16,)
    ugvs: np.ndarray  # (n, 6)

    def flat(self):
        return np.concatenate([self.balloon_payload, self.ugvs.ravel()])

    @classmethod
    def from_flat(cls, time, y, n):
        return cls(time, y[:STATE_SIZE].copy(), y[STATE_SIZE:].reshape(n, UGV_STATE_SIZE).copy())


@dataclass
class TelemetryRecord:
    time: float
    payload_position: np.ndarray
    swing_rate: np.ndarray
    balloon_payload: np.ndarray
    ugvs: np.ndarray
    payload_tension: float
    ugv_tensions: np.ndarray
    slack: np.ndarray
    inputs: np.ndarray

    @property
    def balloon_pose(self):
        return self.balloon_payload[0:6]


def apply_wind(env, t, gusts):
    """Base wind plus box gusts with half-cosine ramps of ``RAMP_TIME`` at each edge.

    ``gusts`` holds ``(start, duration, velocity)`` triples or objects with those
    attributes; overlapping gusts add.
    """
    if not gusts:
        return env
    wind = np.array(env.wind, dtype=float)
    for g in gusts:
        start, duration, velocity = _gust_fields(g)
        wind += _gust_envelope(t - start, duration) * np.asarray(velocity, dtype=float)
    return env.with_wind(wind)


def _gust_fields(g):
    if hasattr(g, "start"):
        return g.start, g.duration, g.velocity
    return g


def _gust_envelope(s, duration):
    if s <= 0.0 or s >= duration:
        return 0.0
    ramp = min(RAMP_TIME, 0.5 * duration)
    if s < ramp:
        return 0.5 * (1.0 - np.cos(np.pi * s / ramp))
    if s > duration - ramp:
        return 0.5 * (1.0 - np.cos(np.pi * (duration - s) / ramp))
    return 1.0


def system_derivative(state_flat, inputs, params, env):
    n = params.n
    bp = state_flat[:STATE_SIZE]
    ugvs = state_flat[STATE_SIZE:].reshape(n, UGV_STATE_SIZE)
    out = np.empty_like(state_flat)
    out[:STATE_SIZE] = dynamics.state_derivative(bp, ugvs, inputs[:, 0:2], params, env)
    out[STATE_SIZE:] = ckm_derivative(ugvs, inputs).ravel()
    return out


def _env_at(env, t):
    return env(t) if callable(env) else env


def rk4_step(state, inputs, dt, params, env):
    """Classical Runge-Kutta step with inputs held constant over ``dt``.

    ``env`` may be an :class:`~tethersim.dynamics.Environment` or a callable
    ``t -> Environment`` sampled at the stage times.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")
    inputs = np.asarray(inputs, dtype=float).reshape(params.n, 3)
    t = state.time
    y = state.flat()
    k1 = system_derivative(y, inputs, params, _env_at(env, t))
    k2 = system_derivative(y + 0.5 * dt * k1, inputs, params, _env_at(env, t + 0.5 * dt))
    k3 = system_derivative(y + 0.5 * dt * k2, inputs, params, _env_at(env, t + 0.5 * dt))
    k4 = system_derivative(y + dt * k3, inputs, params, _env_at(env, t + dt))
    y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > BLOWUP_LIMIT:
        raise NumericalBlowup(f"state magnitude exceeded {BLOWUP_LIMIT:g} at t={t + dt:.4f}")
    return SystemState.from_flat(t + dt, y_new, params.n)


# -- initial conditions ---------------------------------------------------


def symmetric_formation(params, balloon_position):
    """Rovers on the ground, each radially outward of its anchor at exactly tether length."""
    bp = params.balloon
    anchors = np.asarray(balloon_position, dtype=float) + bp.ugv_attach
    heights = anchors[:, 2]
    l_r = params.tether.length
    if np.any(np.abs(heights) >= l_r):
        raise InfeasibleInitialState("balloon anchors are higher than the tether length")
    reach = np.sqrt(l_r**2 - heights**2)
    radial = bp.ugv_attach[:, :2]
    norms = np.linalg.norm(radial, axis=1)
    if np.any(norms < 1e-9):
        raise InfeasibleInitialState("anchor on the balloon axis has no radial direction")
    ugvs = np.zeros((params.n, UGV_STATE_SIZE))
    ugvs[:, 0:2] = anchors[:, :2] + reach[:, None] * radial / norms[:, None]
    return ugvs


def equilibrium_state(params, env, payload_position, tol=1e-10, max_iter=50):
    """Static hover with the payload hanging at ``payload_position``.

    Rovers are placed in the symmetric formation, then Newton iteration on the
    balloon pose and swing angles drives every acceleration to zero.
    """
    bp, pp = params.balloon, params.payload
    r_p = np.asarray(payload_position, dtype=float)
    x = np.zeros(STATE_SIZE)
    x[POS] = r_p - bp.payload_attach + np.array([0.0, 0.0, pp.tether_length])
    ugvs = symmetric_formation(params, x[POS])
    zero_acc = np.zeros((params.n, 2))

    def residual(q):
        xx = x.copy()
        xx[0:8] = q
        _, sol = dynamics.evaluate(xx, ugvs, zero_acc, params, env)
        if np.any(sol.slack):
            raise InfeasibleInitialState("a tether is slack in the initial configuration")
        return np.concatenate([sol.balloon_accel, sol.omega_dot, sol.swing_accel])

    q = x[0:8].copy()
    for _ in range(max_iter):
        r = residual(q)
        if np.linalg.norm(r) < tol:
            break
        J = np.empty((8, 8))
        for j in range(8):
            h = 1e-6 * max(1.0, abs(q[j]))
            dq = np.zeros(8)
            dq[j] = h
            J[:, j] = (residual(q + dq) - residual(q - dq)) / (2 * h)
        try:
            q = q - solve_dense_linear(J, r)
        except Exception as exc:
            raise InfeasibleInitialState(f"equilibrium Newton step failed: {exc}") from exc
    else:
        raise InfeasibleInitialState("equilibrium pre-solve did not converge")
    x[0:8] = q
    return x, ugvs


def initial_state(config, params=None, env=None):
    params = params or config.system_params()
    env = env or config.environment_base()
    try:
        x, ugvs = equilibrium_state(params, env, config.initial.payload_position)
    except SingularConfiguration as exc:
        raise InfeasibleInitialState(str(exc)) from exc
    x[SWING] += np.asarray(config.initial.swing, dtype=float)
    x[SWING_RATE] += np.asarray(config.initial.swing_rate, dtype=float)
    if config.initial.rover_velocity is not None:
        ugvs[:, 3:5] = np.asarray(config.initial.rover_velocity, dtype=float)
    check_tether_feasibility(x, ugvs, params)
    return SystemState(0.0, x, ugvs)


def tether_length_error(x, ugvs, params):
    dr, _ = dynamics.tether_vectors(x, ugvs, params.balloon)
    return np.linalg.norm(dr, axis=1) - params.tether.length


def check_tether_feasibility(x, ugvs, params, tol=0.05):
    err = tether_length_error(x, ugvs, params)
    if np.any(np.abs(err) > tol * params.tether.length):
        raise InfeasibleInitialState(f"tether length errors {err} exceed {tol:.0%} of l_R")


# -- runs -----------------------------------------------------------------


class WindField:
    """Base wind + gusts + optional seeded turbulence (piecewise constant per second)."""

    def __init__(self, base_env, gusts=(), turbulence=0.0, seed=0, duration=0.0):
        self.base = base_env
        self.gusts = list(gusts)
        self.samples = None
        if turbulence > 0:
            rng = np.random.default_rng(seed)
            self.samples = rng.normal(0.0, turbulence, size=(int(np.ceil(duration)) + 2, 3))

    def __call__(self, t):
        env = apply_wind(self.base, t, self.gusts)
        if self.samples is not None:
            idx = min(int(np.floor(max(t, 0.0))), len(self.samples) - 1)
            env = env.with_wind(env.wind + self.samples[idx])
        return env


def make_record(state, inputs, params, env):
    x, ugvs = state.balloon_payload, state.ugvs
    _, sol = dynamics.evaluate(x, ugvs, inputs[:, 0:2], params, env)
    return TelemetryRecord(
        time=state.time,
        payload_position=dynamics.payload_position(x, params.balloon, params.payload),
        swing_rate=x[SWING_RATE].copy(),
        balloon_payload=x.copy(),
        ugvs=ugvs.copy(),
        payload_tension=sol.payload_tension,
        ugv_tensions=sol.ugv_tensions.copy(),
        slack=sol.slack.copy(),
        inputs=np.array(inputs, dtype=float),
    )


def _simulate(config, input_fn, controller=None, duration=None, state=None, on_step=None):
    params = config.system_params()
    base_env = config.environment_base()
    duration = config.sim.duration if duration is None else duration
    wind = WindField(base_env, config.gusts, config.sim.turbulence, config.sim.seed, duration)
    dt = config.sim.dt
    n_steps = int(round(duration / dt))
    tel_every = max(1, int(round(1.0 / (config.sim.telemetry_rate * dt))))
    ctrl_every = None
    if controller is not None:
        ctrl_every = max(1, int(round(controller.sample_time / dt)))

    if state is None:
        state = initial_state(config, params, base_env)
    if controller is not None:
        controller.reset(state, params, base_env)
    inputs = np.zeros((params.n, 3))
    records = []
    for k in range(n_steps + 1):
        t = k * dt
        state.time = t
        if controller is not None and k % ctrl_every == 0:
            inputs = np.asarray(controller.control_step(state), dtype=float)
        elif controller is None:
            inputs = input_fn(t)
        if k % tel_every == 0:
            records.append(make_record(state, inputs, params, wind(t)))
        if on_step is not None:
            on_step(state, inputs)
        if k == n_steps:
            break
        state = rk4_step(state, inputs, dt, params, wind)
    return records


def run_scenario(config, controller=None, duration=None, on_step=None):
    """Simulate ``config`` from its equilibrium start.

    Without a controller the rovers receive zero acceleration.
    """
    n = config.tether.n
    zero = np.zeros((n, 3))
    return _simulate(config, lambda t: zero, controller, duration, on_step=on_step)


@dataclass
class AccelProfile:
    times: np.ndarray  # (T,)
    accels: np.ndarray  # (T, n, 3)

    def nominal_dt(self):
        return float(np.median(np.diff(self.times))) if len(self.times) > 1 else np.inf

    def at(self, t):
        i = np.searchsorted(self.times, t + 1e-12, side="right") - 1
        if i < 0:
            return np.zeros(self.accels.shape[1:])
        return self.accels[i]

    def check(self, duration):
        if len(self.times) == 0:
            raise ProfileGap("empty acceleration profile")
        if np.any(np.diff(self.times) <= 0):
            raise ProfileGap("profile times must be strictly increasing")
        dt = self.nominal_dt()
        gaps = np.diff(self.times)
        if len(gaps) and np.any(gaps > 2.0 * dt):
            i = int(np.argmax(gaps > 2.0 * dt))
            raise ProfileGap(f"gap of {gaps[i]:.3f} s after t={self.times[i]:.3f} (nominal {dt:.3f} s)")
        if self.times[0] > 0.0 + 1e-9:
            raise ProfileGap("profile must start at t=0")
        end = self.times[-1] + (dt if np.isfinite(dt) else 0.0)
        if end + 1e-9 < duration:
            raise ProfileGap(f"profile ends at {end:.3f} s before run end {duration:.3f} s")


def replay_inputs(config, profile, duration=None):
    """Open-loop run driven by piecewise-constant rover accelerations."""
    if profile.accels.shape[1] != config.tether.n:
        raise ValueError(f"profile has {profile.accels.shape[1]} rovers, config has {config.tether.n}")
    if duration is None:
        duration = profile.times[-1] + profile.nominal_dt() if len(profile.times) > 1 else config.sim.duration
    profile.check(duration)
    return _simulate(config, profile.at, None, duration)


def with_overrides(config, **sim_fields):
    return config.model_copy(update={"sim": config.sim.model_copy(update=sim_fields)})

