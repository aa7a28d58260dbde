import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tethersim import dynamics
from tethersim.dynamics import (
    N_BODY_UNKNOWNS,
    BalloonParams,
    Environment,
    PayloadParams,
    SystemParams,
    TetherParams,
    added_mass,
    assemble_constrained_system,
    buoyancy_force,
    drag_force,
    evaluate,
    payload_direction,
    payload_position,
    payload_velocity,
    solve_tensions,
    state_derivative,
)

small = st.floats(-0.5, 0.5, allow_nan=False)


def _slack_state(params, swing=(0.0, 0.0)):
    x = np.zeros(16)
    x[2] = 2.0
    x[6:8] = swing
    ugvs = np.zeros((params.n, 6))
    ugvs[:, 0:2] = params.balloon.ugv_attach[:, 0:2]
    return x, ugvs


# -- forces and geometry ----------------------------------------------------


def test_buoyancy_default_balloon():
    bp = BalloonParams.sphere()
    volume = 4.0 / 3.0 * np.pi * 1.1**3
    expected = (1.225 - 0.1786) * volume * 9.81 - 3.6 * 9.81
    assert bp.volume == pytest.approx(5.575, abs=1e-3)
    assert buoyancy_force(bp, Environment()) == pytest.approx(expected, rel=1e-12)
    assert buoyancy_force(bp, Environment()) == pytest.approx(21.9, abs=0.05)


def test_spare_lift_exceeds_two_kilograms():
    spare = buoyancy_force(BalloonParams.sphere(), Environment()) / 9.81
    assert 2.0 < spare < 2.4


def test_neutral_gas_massless_envelope_has_no_lift():
    bp = BalloonParams.sphere(structural_mass=0.0, gas_density=1.225)
    assert buoyancy_force(bp, Environment()) == pytest.approx(0.0, abs=1e-12)


def test_added_mass_reduces_to_structure():
    bp = BalloonParams.sphere(gas_density=0.0, added_mass_coeff=0.0)
    assert added_mass(bp, Environment()) == 3.6
    bp = BalloonParams.sphere()
    v = bp.volume
    assert added_mass(bp, Environment()) == pytest.approx(3.6 + 0.1786 * v + 0.5 * 1.225 * v)


def test_drag_quadratic_law():
    assert np.array_equal(drag_force(np.zeros(3), 1.225, 1.787), np.zeros(3))
    np.testing.assert_allclose(drag_force([1.0, 0, 0], 1.225, 1.787), [-1.094, 0, 0], atol=1e-3)


@given(small, small, small)
def test_drag_is_odd(a, b, c):
    v = np.array([a, b, c])
    np.testing.assert_allclose(drag_force(-v, 1.2, 0.7), -drag_force(v, 1.2, 0.7))


def test_payload_direction_rest_and_limit():
    np.testing.assert_array_equal(payload_direction([0.0, 0.0]), [0.0, 0.0, -1.0])
    np.testing.assert_allclose(payload_direction([0.0, np.pi / 2 - 1e-9]), [1.0, 0.0, 0.0], atol=1e-8)


def test_payload_direction_is_rotation_of_down_vector():
    phi, theta = 0.3, -0.7
    c, s = np.cos(-phi), np.sin(-phi)
    rx = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    c, s = np.cos(-theta), np.sin(-theta)
    ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    np.testing.assert_allclose(payload_direction([phi, theta]), rx @ ry @ [0, 0, -1.0], atol=1e-15)


def test_payload_direction_unit_norm(rng):
    angles = rng.uniform(-np.pi, np.pi, size=(1000, 2))
    norms = [np.linalg.norm(payload_direction(a)) for a in angles]
    np.testing.assert_allclose(norms, 1.0, atol=1e-15)


def test_payload_position_arithmetic():
    bp, pp = BalloonParams.sphere(), PayloadParams()
    x = np.zeros(16)
    x[2] = 2.0
    np.testing.assert_allclose(payload_position(x, bp, pp), [0.0, 0.0, 0.1], atol=1e-15)


def test_payload_position_translation_equivariant(rng):
    bp, pp = BalloonParams.sphere(), PayloadParams()
    x = rng.uniform(-0.5, 0.5, 16)
    shift = np.array([0.3, -1.2, 0.7])
    y = x.copy()
    y[0:3] += shift
    np.testing.assert_allclose(payload_position(y, bp, pp), payload_position(x, bp, pp) + shift, atol=1e-14)


def test_payload_velocity_by_finite_differences(rng):
    bp, pp = BalloonParams.sphere(), PayloadParams()
    x = rng.uniform(-0.5, 0.5, 16)
    h = 1e-6
    xdot = np.concatenate([x[8:16], np.zeros(8)])
    fd = (payload_position(x + h * xdot, bp, pp) - payload_position(x - h * xdot, bp, pp)) / (2 * h)
    np.testing.assert_allclose(payload_velocity(x, bp, pp), fd, atol=1e-6)


def test_default_attachments():
    bp = BalloonParams.sphere()
    np.testing.assert_allclose(np.linalg.norm(bp.ugv_attach, axis=1), 1.1)
    np.testing.assert_allclose(bp.ugv_attach[:, 2], -1.1 * np.sin(np.radians(30)))
    assert bp.ugv_attach[0, 0] > 0 and abs(bp.ugv_attach[0, 1]) < 1e-12
    np.testing.assert_allclose(bp.payload_attach, [0, 0, -1.1])


# -- constrained system -----------------------------------------------------


def test_static_equilibrium_force_balance(params, env, hover):
    x, ugvs = hover
    dx, sol = evaluate(x, ugvs, np.zeros((3, 2)), params, env)
    assert sol.payload_tension == pytest.approx(9.81, abs=1e-6)
    assert not sol.slack.any()
    np.testing.assert_allclose(sol.ugv_tensions, sol.ugv_tensions[0], rtol=1e-9)
    dr, _ = dynamics.tether_vectors(x, ugvs, params.balloon)
    vertical = np.sum(sol.ugv_tensions * dr[:, 2] / np.linalg.norm(dr, axis=1))
    assert vertical == pytest.approx(-(buoyancy_force(params.balloon, env) - 9.81), abs=1e-6)
    assert np.max(np.abs(dx)) < 1e-9


def test_constraint_rows_satisfied(params, env, hover, rng):
    x, ugvs = hover
    x = x.copy()
    x[8:16] += rng.uniform(-0.1, 0.1, 8)
    A, b = assemble_constrained_system(x, ugvs, rng.uniform(-0.1, 0.1, (3, 2)), params, env)
    assert A.shape == (12, 12)
    u = np.linalg.solve(A, b)
    assert np.max(np.abs(A[N_BODY_UNKNOWNS:] @ u - b[N_BODY_UNKNOWNS:])) < 1e-9


def test_free_buoyant_body_when_all_slack(params, env):
    x, ugvs = _slack_state(params)
    _, sol = evaluate(x, ugvs, np.zeros((3, 2)), params, env)
    assert sol.slack.all()
    np.testing.assert_array_equal(sol.ugv_tensions, 0.0)
    m_eff = added_mass(params.balloon, env)
    lift = buoyancy_force(params.balloon, env)
    # hanging payload rides along: (m' + m_P) a = F_B - m_P g, T_P = m_P (g + a)
    a = (lift - 9.81) / (m_eff + 1.0)
    np.testing.assert_allclose(sol.balloon_accel, [0, 0, a], atol=1e-12)
    assert sol.payload_tension == pytest.approx(9.81 + a, rel=1e-12)
    assert a == pytest.approx((lift - sol.payload_tension) / m_eff, rel=1e-12)


def test_rover_driven_toward_foot_point_goes_slack(params, env, hover):
    x, ugvs = hover
    ugvs = ugvs.copy()
    # rover 1 rolls toward the balloon: its tether would have to push
    ugvs[0, 3] = -0.5
    A, b = assemble_constrained_system(x, ugvs, np.zeros((3, 2)), params, env)
    unclamped = np.linalg.solve(A, b)
    assert unclamped[N_BODY_UNKNOWNS] < 0
    sol = solve_tensions(A, b)
    assert sol.slack[0] and sol.ugv_tensions[0] == 0.0
    assert not sol.slack[1:].any()


def _violation(A, b, sol):
    u = np.concatenate([sol.balloon_accel, sol.omega_dot, sol.swing_accel, [sol.payload_tension],
                        sol.ugv_tensions])
    # stretching acceleration of each tether beyond the stabilised target
    return np.maximum(A[N_BODY_UNKNOWNS:, :N_BODY_UNKNOWNS] @ u[:N_BODY_UNKNOWNS] - b[N_BODY_UNKNOWNS:], 0.0)


def test_clamped_not_worse_than_all_slack(params, env, hover, rng):
    x, ugvs = hover
    for _ in range(20):
        u = ugvs.copy()
        u[:, 3:5] = rng.uniform(-0.5, 0.5, (3, 2))
        A, b = assemble_constrained_system(x, u, rng.uniform(-0.1, 0.1, (3, 2)), params, env)
        clamped = solve_tensions(A, b)
        A_s = A.copy()
        A_s[N_BODY_UNKNOWNS:, :] = 0.0
        A_s[N_BODY_UNKNOWNS:, N_BODY_UNKNOWNS:] = np.eye(3)
        b_s = b.copy()
        b_s[N_BODY_UNKNOWNS:] = 0.0
        free = solve_tensions(A_s, b_s)
        assert _violation(A, b, clamped).sum() <= _violation(A, b, free).sum() + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tensions_never_negative(params, env, hover, seed):
    r = np.random.default_rng(seed)
    x, ugvs = hover
    x = x.copy()
    x[8:16] += r.uniform(-0.5, 0.5, 8)
    u = ugvs.copy()
    u[:, 0:2] += r.uniform(-0.3, 0.0, (3, 2)) * np.sign(u[:, 0:2])
    u[:, 3:5] = r.uniform(-1, 1, (3, 2))
    _, sol = evaluate(x, u, r.uniform(-0.1, 0.1, (3, 2)), params, env)
    assert min(sol.payload_tension, sol.ugv_tensions.min()) >= 0.0


# -- derivative -------------------------------------------------------------


def test_energy_rate_vanishes_without_drag_and_rover_tethers():
    base = BalloonParams.sphere(drag_coeff=0.0)
    params = SystemParams(base, PayloadParams(drag_area=0.0), TetherParams())
    env = Environment()
    x, ugvs = _slack_state(params, swing=(0.2, -0.3))
    x[8:16] = [0.1, -0.05, 0.02, 0.03, -0.02, 0.05, 0.4, -0.2]
    dx = state_derivative(x, ugvs, np.zeros((3, 2)), params, env)
    h = 1e-6
    rate = (dynamics.mechanical_energy(x + h * dx, params, env)
            - dynamics.mechanical_energy(x - h * dx, params, env)) / (2 * h)
    assert abs(rate) < 1e-6 * abs(dynamics.mechanical_energy(x, params, env))


def _rot_z(g):
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def test_frame_equivariance_about_vertical(params, hover):
    gamma = 0.7
    Rz = _rot_z(gamma)
    x, ugvs = hover
    x = x.copy()
    x[0:3] += [0.1, -0.2, 0.05]
    x[8:14] = [0.1, 0.05, -0.02, 0.03, -0.01, 0.2]
    env = Environment(wind=np.array([0.5, -0.3, 0.0]))
    accels = np.array([[0.05, -0.02], [0.01, 0.03], [-0.04, 0.0]])

    xr = x.copy()
    xr[0:3] = Rz @ x[0:3]
    xr[5] += gamma
    xr[8:11] = Rz @ x[8:11]
    ur = ugvs.copy()
    ur[:, 0:2] = ugvs[:, 0:2] @ Rz[:2, :2].T
    ur[:, 3:5] = ugvs[:, 3:5] @ Rz[:2, :2].T
    ar = accels @ Rz[:2, :2].T
    envr = Environment(wind=Rz @ env.wind)

    _, s0 = evaluate(x, ugvs, accels, params, env)
    _, s1 = evaluate(xr, ur, ar, params, envr)
    np.testing.assert_allclose(s1.balloon_accel, Rz @ s0.balloon_accel, atol=1e-10)
    np.testing.assert_allclose(s1.omega_dot, s0.omega_dot, atol=1e-10)
    np.testing.assert_allclose(s1.ugv_tensions, s0.ugv_tensions, atol=1e-9)
    # at zero swing the horizontal payload acceleration is (theta_ddot, -phi_ddot)
    h0 = np.array([s0.swing_accel[1], -s0.swing_accel[0], 0.0])
    h1 = np.array([s1.swing_accel[1], -s1.swing_accel[0], 0.0])
    np.testing.assert_allclose(h1, Rz @ h0, atol=1e-10)


def test_prescribed_tensions_reproduce_simulator(params, env, hover, rng):
    x, ugvs = hover
    x = x.copy()
    x[8:16] += rng.uniform(-0.05, 0.05, 8)
    dx, sol = evaluate(x, ugvs, np.zeros((3, 2)), params, env)
    assert not sol.slack.any()
    dx2 = dynamics.derivative_given_tensions(x, ugvs, sol.ugv_tensions, params, env)
    np.testing.assert_allclose(dx2, dx, atol=1e-10)


def test_tension_column_acts_along_tether(params, env, hover):
    """d(r_B ddot)/d|T_1| with rotation and swing held: e_1 / m'_B plus payload coupling."""
    x, ugvs = hover
    _, sol = evaluate(x, ugvs, np.zeros((3, 2)), params, env)
    h = 1e-4
    t = sol.ugv_tensions.copy()
    t_p, t_m = t.copy(), t.copy()
    t_p[0] += h
    t_m[0] -= h
    d = (dynamics.derivative_given_tensions(x, ugvs, t_p, params, env)
         - dynamics.derivative_given_tensions(x, ugvs, t_m, params, env)) / (2 * h)
    dr, _ = dynamics.tether_vectors(x, ugvs, params.balloon)
    e1 = dr[0] / np.linalg.norm(dr[0])
    # the response is along e_1 up to payload and rotational coupling, with the
    # in-plane component of magnitude close to 1/m'_B
    acc = d[8:11]
    cos = acc @ e1 / np.linalg.norm(acc)
    assert cos > 0.8
    assert np.linalg.norm(acc) == pytest.approx(1 / added_mass(params.balloon, env), rel=0.3)
