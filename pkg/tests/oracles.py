"""Independent reference solvers used only by the tests.

They use an interior-point QP (cvxpy + Clarabel) on the *pairwise* constraint
form, so they share neither the chain reduction nor the DP with the package.
"""

import itertools

import cvxpy as cp
import numpy as np

_TIGHT = dict(solver="CLARABEL", tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)


def _pairwise(z, p):
    cons = []
    for i, j in itertools.permutations(range(len(p)), 2):
        if p[i] <= p[j]:
            cons += [z[j] - z[i] >= 0, z[j] - z[i] <= p[j] - p[i]]
    return cons


def lpav_optimum(p, y):
    z = cp.Variable(len(p))
    prob = cp.Problem(cp.Minimize(cp.sum_squares(z - y)), _pairwise(z, p))
    prob.solve(**_TIGHT)
    return prob.value, z.value


def qpfit_optimum(X, p, q):
    z = cp.Variable(len(p))
    cons = [z >= 0, z <= 1] + _pairwise(z, p)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(X @ z + q)), cons)
    prob.solve(**_TIGHT)
    return prob.value, z.value


def project_l1(v, radius):
    w = cp.Variable(len(v))
    prob = cp.Problem(cp.Minimize(cp.sum_squares(w - v)), [cp.norm1(w) <= radius])
    prob.solve(**_TIGHT)
    return w.value


def project_l1_l2(v, r1, r2):
    """KKT form: the projection is a rescaled soft threshold of v.

    w = S(v, t) * min(1, r2 / ||S(v, t)||), with t >= 0 the smallest level
    for which ||w||_1 <= r1; found by bisection to machine precision.
    """
    v = np.asarray(v, dtype=float)

    def w_of(t):
        s = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        nrm = np.linalg.norm(s)
        return s * min(1.0, r2 / nrm) if nrm > 0 else s

    if np.abs(w_of(0.0)).sum() <= r1:
        return w_of(0.0)
    lo, hi = 0.0, float(np.abs(v).max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.abs(w_of(mid)).sum() > r1:
            lo = mid
        else:
            hi = mid
    return w_of(hi)


def silo_optimum(c, radius):
    w = cp.Variable(len(c))
    prob = cp.Problem(cp.Maximize(c @ w), [cp.norm1(w) <= radius, cp.norm2(w) <= 1])
    prob.solve(solver="CLARABEL")
    return prob.value


def slr_long_run(X, y, lam, eta, iters):
    """Plain proximal gradient, run far past the package's budget."""
    n = X.shape[0]
    w = np.zeros(X.shape[1])
    for _ in range(iters):
        grad = X.T @ (1.0 / (1.0 + np.exp(-(X @ w))) - y) / n
        v = w - eta * grad
        w = np.sign(v) * np.maximum(np.abs(v) - eta * lam, 0.0)
    u = X @ w
    return float(np.mean(np.logaddexp(0.0, u) - y * u) + lam * np.abs(w).sum())


def project_l1_l2_qp(v, r1, r2):
    """Projection onto the l1/l2 intersection through a sequence of pure QPs.

    Dualizing the l2 constraint with multiplier mu >= 0 leaves
    min (1 + mu) ||w - v / (1 + mu)||^2 s.t. ||w||_1 <= r1, i.e. an l1-ball
    QP; mu is the root of ||w(mu)||_2 = r2 (or 0 when that norm is small).
    """
    from scipy.optimize import brentq

    v = np.asarray(v, dtype=float)

    def w_of(mu):
        return project_l1(v / (1.0 + mu), r1)

    w0 = w_of(0.0)
    if np.linalg.norm(w0) <= r2:
        return w0
    hi = 1.0
    while np.linalg.norm(w_of(hi)) > r2:
        hi *= 4.0
    mu = brentq(lambda m: np.linalg.norm(w_of(m)) - r2, 0.0, hi, xtol=1e-13, rtol=1e-13)
    return w_of(mu)


def lpav_brute_force(p, y, gap_tol=1e-12, max_iter=500_000):
    """LPAV by accelerated projected gradient on the dual QP, all pairs kept.

    min 1/2 ||z - y||^2 s.t. A z <= b (one row per ordered pair and side) has
    the dual max_{lam >= 0} -1/2 ||A'lam||^2 + lam'(A y - b), whose projection
    step is a clip at zero.  The primal point is z = y - A'lam; iteration stops
    once z is feasible to 1e-10 and the duality gap lam'(b - A z) is below
    ``gap_tol``.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(p)
    rows, b = [], []
    for i, j in itertools.permutations(range(n), 2):
        if p[i] <= p[j]:
            a = np.zeros(n)
            a[j], a[i] = 1.0, -1.0
            rows += [-a, a]                # z_j - z_i >= 0 and <= p_j - p_i
            b += [0.0, p[j] - p[i]]
    if not rows:
        return 0.0, y.copy()
    A, b = np.array(rows), np.array(b)
    step = 1.0 / np.linalg.eigvalsh(A @ A.T).max()
    c = A @ y - b
    lam = np.zeros(len(b))
    mom, t = lam.copy(), 1.0
    for _ in range(max_iter):
        grad = c - A @ (A.T @ mom)
        new = np.maximum(mom + step * grad, 0.0)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if (new - lam) @ (mom - new) > 0:      # restart on non-monotone step
            mom, t = lam.copy(), 1.0
            continue
        mom = new + ((t - 1) / t_next) * (new - lam)
        lam, t = new, t_next
        z = y - A.T @ lam
        slack = b - A @ z
        if slack.min() > -1e-10 and lam @ slack < gap_tol:
            break
    z = y - A.T @ lam
    return float(np.sum((z - y) ** 2)), z
