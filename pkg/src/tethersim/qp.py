"""Dense convex quadratic programming by a primal-dual interior-point method.

Solves::

    minimise    0.5 z'Hz + g'z
    subject to  A_eq z  = b_eq
                G z    <= h
                lb <= z <= ub

with Mehrotra's predictor-corrector scheme.  Problems without inequality
rows are solved directly from the KKT system.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

STEP_FRACTION = 0.99
EQ_REGULARIZATION = 1e-12
DUAL_DIVERGENCE = 1e10


@dataclass
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    G: np.ndarray = None
    h: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        n = len(self.g)
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        if self.G is None:
            self.G, self.h = np.zeros((0, n)), np.zeros(0)
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @property
    def n(self):
        return len(self.g)

    def objective(self, z):
        return 0.5 * z @ self.H @ z + self.g @ z

    def inequality_rows(self):
        """All inequalities as ``G_all z <= h_all``, box bounds included."""
        n = self.n
        eye = np.eye(n)
        lo = np.isfinite(self.lb)
        hi = np.isfinite(self.ub)
        G = np.vstack([self.G, eye[hi], -eye[lo]])
        h = np.concatenate([self.h, self.ub[hi], -self.lb[lo]])
        return G, h


@dataclass
class QpResult:
    z: np.ndarray
    status: str
    iterations: int
    objective: float
    kkt_residual: float
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def ok(self):
        return self.status == OPTIMAL


def _kkt_solve(K_lu, n, rhs_z, rhs_y):
    sol = scipy.linalg.lu_solve(K_lu, np.concatenate([rhs_z, rhs_y]), check_finite=False)
    return sol[:n], sol[n:]


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _equality_only(prob):
    n, m = prob.n, len(prob.b_eq)
    K = np.block([[prob.H, prob.A_eq.T], [prob.A_eq, np.zeros((m, m))]])
    rhs = np.concatenate([-prob.g, prob.b_eq])
    try:
        sol = scipy.linalg.solve(K, rhs, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        return QpResult(np.zeros(n), INFEASIBLE, 1, np.nan, np.inf)
    z = sol[:n]
    r_d = prob.H @ z + prob.g + prob.A_eq.T @ sol[n:]
    r_e = prob.A_eq @ z - prob.b_eq
    res = max(np.max(np.abs(r_d), initial=0.0) / (1 + np.max(np.abs(prob.g), initial=0.0)),
              np.max(np.abs(r_e), initial=0.0) / (1 + np.max(np.abs(prob.b_eq), initial=0.0)))
    status = OPTIMAL if np.all(np.isfinite(z)) and res < 1e-6 else INFEASIBLE
    return QpResult(z, status, 1, prob.objective(z), res)


def solve_qp(prob, max_iter=200, tol=1e-6):
    """Interior-point solve; deterministic for identical inputs.

    Convergence requires scaled stationarity, primal feasibility and
    complementarity all below ``tol``.  Diverging inequality multipliers signal
    an infeasible problem.  On hitting ``max_iter`` the
    best iterate seen is returned with status ``max_iter``.
    """
    n = prob.n
    G, h = prob.inequality_rows()
    if len(h) == 0:
        return _equality_only(prob)
    H, g, A, b = prob.H, prob.g, prob.A_eq, prob.b_eq
    m_eq = len(b)

    scale_d = 1.0 + np.max(np.abs(g), initial=0.0)
    scale_e = 1.0 + np.max(np.abs(b), initial=0.0)
    scale_i = 1.0 + np.max(np.abs(h), initial=0.0)

    # starting point: regularised least-squares fit of the constraints
    K0 = np.block([[H + G.T @ G, A.T], [A, -EQ_REGULARIZATION * np.eye(m_eq)]])
    try:
        sol0 = scipy.linalg.solve(K0, np.concatenate([-g + G.T @ h, b]), check_finite=False)
        z = sol0[:n]
    except (scipy.linalg.LinAlgError, ValueError):
        z = np.zeros(n)
    y = np.zeros(m_eq)
    s = h - G @ z
    s = s + max(0.0, -1.5 * s.min()) + 1.0
    lam = np.ones(len(h))

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        z, status, it, best = _mehrotra(H, g, A, b, G, h, z, y, s, lam, max_iter, tol,
                                        scale_d, scale_e, scale_i)
    if status != OPTIMAL:
        z, kkt, s, lam = best
    else:
        kkt, s, lam = best[1], best[2], best[3]
    active = lam > s
    return QpResult(z, status, it, float(prob.objective(z)), float(kkt), active)


def _mehrotra(H, g, A, b, G, h, z, y, s, lam, max_iter, tol, scale_d, scale_e, scale_i):
    n, m_eq, m_in = len(g), len(b), len(h)
    best = None
    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        r_d = H @ z + g + A.T @ y + G.T @ lam
        r_e = A @ z - b
        r_i = G @ z + s - h
        mu = s @ lam / m_in
        obj = 0.5 * z @ H @ z + g @ z
        res_d = np.max(np.abs(r_d)) / scale_d
        res_p = max(np.max(np.abs(r_e), initial=0.0) / scale_e, np.max(np.abs(r_i)) / scale_i)
        gap = s @ lam / (1.0 + abs(obj))
        kkt = max(res_d, res_p, gap)
        if best is None or kkt < best[1]:
            best = (z.copy(), kkt, s.copy(), lam.copy())
        if res_d <= tol and res_p <= tol and gap <= 0.1 * tol:
            status = OPTIMAL
            best = (z.copy(), kkt, s.copy(), lam.copy())
            break

        if not np.isfinite(kkt) or np.max(lam) > DUAL_DIVERGENCE * scale_d:
            status = INFEASIBLE
            break
        W = lam / s
        K = np.block([[H + (G.T * W) @ G, A.T], [A, -EQ_REGULARIZATION * np.eye(m_eq)]])
        try:
            K_lu = scipy.linalg.lu_factor(K, check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError):
            status = INFEASIBLE
            break

        def direction(r_c):
            t = (lam * r_i - r_c) / s
            dz, dy = _kkt_solve(K_lu, n, -r_d - G.T @ t, -r_e)
            dlam = t + W * (G @ dz)
            ds = -r_i - G @ dz
            return dz, dy, dlam, ds

        # predictor
        dz, dy, dlam, ds = direction(s * lam)
        a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = (s + a_aff * ds) @ (lam + a_aff * dlam) / m_in
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dz, dy, dlam, ds = direction(s * lam + ds * dlam - sigma * mu)
        alpha = min(1.0, STEP_FRACTION * min(_max_step(s, ds), _max_step(lam, dlam)))
        z = z + alpha * dz
        y = y + alpha * dy
        lam = lam + alpha * dlam
        s = s + alpha * ds
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(lam))):
            status = INFEASIBLE
            break

    return z, status, it, best
