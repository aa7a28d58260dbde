import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tethersim.qp import INFEASIBLE, MAX_ITER, OPTIMAL, QuadraticProgram, solve_qp
from tethersim.validation import projected_gradient_qp, random_box_qp


def test_unconstrained_matches_direct_solve(rng):
    for _ in range(10):
        prob = random_box_qp(rng, unconstrained=True)
        z = solve_qp(prob).z
        np.testing.assert_allclose(z, np.linalg.solve(prob.H, -prob.g), atol=1e-8)


def test_clipped_separable_by_bounds():
    prob = QuadraticProgram(2 * np.eye(2), [-4.0, -4.0], ub=[1.0, 1.0])
    res = solve_qp(prob)
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.z, [1.0, 1.0], atol=1e-6)
    assert res.active.all()


def test_clipped_separable_by_general_rows():
    prob = QuadraticProgram(2 * np.eye(2), [-4.0, -4.0], G=np.eye(2), h=[1.0, 1.0])
    np.testing.assert_allclose(solve_qp(prob).z, [1.0, 1.0], atol=1e-6)


def test_equality_only():
    # min z1^2 + z2^2 s.t. z1 + z2 = 2
    prob = QuadraticProgram(2 * np.eye(2), np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[2.0])
    np.testing.assert_allclose(solve_qp(prob).z, [1.0, 1.0], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_box_qps_against_projected_gradient(seed):
    r = np.random.default_rng(seed)
    prob = random_box_qp(r, n=20)
    res = solve_qp(prob)
    assert res.status == OPTIMAL
    z_ref = projected_gradient_qp(prob)
    f_ref = prob.objective(z_ref)
    assert abs(res.objective - f_ref) <= 1e-6 * max(1.0, abs(f_ref))
    assert np.all(res.z >= prob.lb - 1e-6) and np.all(res.z <= prob.ub + 1e-6)
    np.testing.assert_allclose(prob.A_eq @ res.z, prob.b_eq, atol=1e-6)


def test_solver_is_deterministic(rng):
    prob = random_box_qp(rng, n=40)
    a, b = solve_qp(prob), solve_qp(prob)
    assert np.array_equal(a.z, b.z) and a.iterations == b.iterations


def test_inconsistent_equality_and_bounds_reported_infeasible():
    prob = QuadraticProgram(np.eye(2), np.zeros(2), A_eq=[[1.0, 0.0]], b_eq=[5.0], ub=[1.0, 1.0])
    assert solve_qp(prob).status == INFEASIBLE


def test_iteration_cap_returns_best_iterate(rng):
    prob = random_box_qp(rng, n=30, n_eq=0)
    res = solve_qp(prob, max_iter=2)
    assert res.status == MAX_ITER
    assert res.iterations == 2
    assert np.all(np.isfinite(res.z))


def test_objective_reports_quadratic_value(rng):
    prob = random_box_qp(rng, n=5)
    res = solve_qp(prob)
    assert res.objective == pytest.approx(0.5 * res.z @ prob.H @ res.z + prob.g @ res.z)
