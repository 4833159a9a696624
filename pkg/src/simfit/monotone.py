"""Monotone, 1-Lipschitz univariate fitting.

Both least-squares problems solved here (the Lipschitz PAV fit and the
calibrated-loss QPFit) live on the same feasible set: values ``z`` attached to
sorted projections ``p`` with ``0 <= z[k+1] - z[k] <= p[k+1] - p[k]``.  Only
adjacent constraints are imposed; the pairwise ones follow by telescoping.
Tied projections are merged into a single weighted variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

# Relative slack used when validating knots produced by floating-point solvers.
_SHAPE_RTOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration cap."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class MonotoneFn:
    """Piecewise-linear monotone function given by its knots.

    Evaluation clamps to the first/last knot value outside the knot range and
    interpolates linearly in between.
    """

    knots_x: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self):
        x = np.array(self.knots_x, dtype=float).ravel()
        y = np.array(self.knots_y, dtype=float).ravel()
        if x.size == 0 or x.size != y.size:
            raise ValueError("knots_x and knots_y must be non-empty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("knots must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots_x must be strictly increasing")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "knots_x", x)
        object.__setattr__(self, "knots_y", y)

    def __call__(self, zeta):
        return interpolate(self, zeta)

    def is_valid(self, atol=1e-12):
        """Monotone, 1-Lipschitz across knots and valued in [0, 1]."""
        dy = np.diff(self.knots_y)
        dx = np.diff(self.knots_x)
        slack = atol + _SHAPE_RTOL * np.maximum(np.abs(self.knots_x[1:]), 1.0)
        return bool(
            np.all(dy >= -slack)
            and np.all(dy <= dx + slack)
            and self.knots_y.min() >= -atol
            and self.knots_y.max() <= 1.0 + atol
        )

    @classmethod
    def constant(cls, value, at=0.0):
        return cls(np.array([at], dtype=float), np.array([value], dtype=float))

    def to_dict(self):
        return {"knots_x": self.knots_x.tolist(), "knots_y": self.knots_y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["knots_x"], dtype=float), np.asarray(d["knots_y"], dtype=float))


@dataclass(frozen=True)
class ChainQP:
    """Sorted, tie-merged projections in the canonical form used by the solvers.

    ``groups[i]`` is the merged index of original sample ``i``; ``weights`` are
    the group multiplicities.
    """

    p: np.ndarray
    weights: np.ndarray
    groups: np.ndarray

    @classmethod
    def from_projections(cls, p):
        p = np.asarray(p, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("empty input")
        if not np.all(np.isfinite(p)):
            raise ValueError("projections contain NaN or inf")
        uniq, inverse, counts = np.unique(p, return_inverse=True, return_counts=True)
        return cls(uniq, counts.astype(np.int64), inverse.astype(np.int64))

    @property
    def size(self):
        return self.p.size

    @property
    def gaps(self):
        return np.diff(self.p)

    def group_means(self, values):
        values = np.asarray(values, dtype=float)
        return np.bincount(self.groups, weights=values, minlength=self.size) / self.weights

    def merge_columns(self, X):
        """Sum the columns of a (d, n) matrix within each tie group -> (d, K)."""
        if self.size == X.shape[1]:
            out = np.empty_like(X)
            out[:, self.groups] = X
            return out
        out = np.zeros((X.shape[0], self.size))
        np.add.at(out.T, self.groups, X.T)
        return out


@numba.njit(cache=True)
def _chain_solve(v, w, gaps, lo, hi):
    """Exact minimizer of sum_k w[k] (z[k] - v[k])**2 over the Lipschitz chain.

    Constraints: 0 <= z[k+1] - z[k] <= gaps[k] and lo <= z <= hi.

    Dynamic program over F_k(z) = best cost of the first k variables with the
    k-th fixed at z.  F_k is convex piecewise quadratic on [lo, hi]; its
    derivative is stored as segments between breakpoints ``bx`` with one-sided
    end values ``dl`` (right limit at the left end) and ``dr`` (left limit at
    the right end), so jumps are allowed.  Passing to F_{k+1} takes the
    windowed minimum over [z - gap, z], which inserts a flat zero-derivative
    stretch of length ``gap`` at the minimizer and shifts everything to its
    right, then adds the new quadratic.
    """
    K = v.shape[0]
    cap = 2 * K + 4
    bx = np.empty(cap + 1)
    dl = np.empty(cap)
    dr = np.empty(cap)
    nbx = np.empty(cap + 1)
    ndl = np.empty(cap)
    ndr = np.empty(cap)
    roots = np.empty(K)

    m = 1
    bx[0] = lo
    bx[1] = hi
    dl[0] = 2.0 * w[0] * (lo - v[0])
    dr[0] = 2.0 * w[0] * (hi - v[0])

    for k in range(K):
        # minimizer of F_k on [lo, hi]
        if dl[0] >= 0.0:
            r = lo
            j = -1
        else:
            r = hi
            j = m
            for i in range(m):
                if dr[i] >= 0.0:
                    j = i
                    if dl[i] >= 0.0:
                        r = bx[i]
                    else:
                        t = -dl[i] / (dr[i] - dl[i])
                        r = bx[i] + t * (bx[i + 1] - bx[i])
                        if r > bx[i + 1]:
                            r = bx[i + 1]
                    break
        roots[k] = r
        if k == K - 1:
            break

        gap = gaps[k]
        # windowed minimum
        c = 0
        nbx[0] = lo
        if j >= 0:
            for i in range(j):
                ndl[c] = dl[i]
                ndr[c] = dr[i]
                nbx[c + 1] = bx[i + 1]
                c += 1
            if j < m and r > bx[j]:
                ndl[c] = dl[j]
                ndr[c] = 0.0
                nbx[c + 1] = r
                c += 1
        if r < hi:
            top = r + gap
            if top > hi:
                top = hi
            if top > r:
                ndl[c] = 0.0
                ndr[c] = 0.0
                nbx[c + 1] = top
                c += 1
            if top < hi and j < m:
                start = j if j >= 0 else 0
                for i in range(start, m):
                    a = bx[i]
                    b = bx[i + 1]
                    va = dl[i]
                    vb = dr[i]
                    if i == j and r > a:
                        va = 0.0
                        a = r
                    if b <= a:
                        continue
                    a2 = a + gap
                    b2 = b + gap
                    if a2 >= hi:
                        break
                    if b2 > hi:
                        vb = va + (vb - va) * (hi - a2) / (b2 - a2)
                        b2 = hi
                    ndl[c] = va
                    ndr[c] = vb
                    nbx[c + 1] = b2
                    c += 1
                    if b2 >= hi:
                        break
        nbx[c] = hi
        m = c
        wk = 2.0 * w[k + 1]
        vk = v[k + 1]
        for i in range(m):
            bx[i] = nbx[i]
            dl[i] = ndl[i] + wk * (nbx[i] - vk)
            dr[i] = ndr[i] + wk * (nbx[i + 1] - vk)
        bx[m] = nbx[m]

    z = np.empty(K)
    z[K - 1] = roots[K - 1]
    for k in range(K - 2, -1, -1):
        r = roots[k]
        low = z[k + 1] - gaps[k]
        if r < low:
            r = low
        if r > z[k + 1]:
            r = z[k + 1]
        z[k] = r
    # enforce the constraints exactly against rounding in the back-substitution
    for k in range(1, K):
        if z[k] < z[k - 1]:
            z[k] = z[k - 1]
        elif z[k] > z[k - 1] + gaps[k - 1]:
            z[k] = z[k - 1] + gaps[k - 1]
    return z


def chain_project(v, gaps, lo=-np.inf, hi=np.inf, weights=None):
    """Weighted Euclidean projection onto the box-bounded Lipschitz chain."""
    v = np.ascontiguousarray(v, dtype=float)
    gaps = np.ascontiguousarray(gaps, dtype=float)
    if gaps.size != max(v.size - 1, 0):
        raise ValueError("gaps must have length len(v) - 1")
    w = np.ones_like(v) if weights is None else np.ascontiguousarray(weights, dtype=float)
    # unbounded solutions lie in [min v, max v]; clipping is a 1-Lipschitz monotone map
    lo = max(lo, float(v.min()))
    hi = min(hi, float(v.max()))
    if hi < lo:
        # whole box lies on one side of the data
        return np.full_like(v, hi if float(v.min()) > hi else lo)
    if hi == lo:
        return np.full_like(v, lo)
    return _chain_solve(v, w, gaps, float(lo), float(hi))


def _check_inputs(*arrays):
    for a in arrays:
        if a.size == 0:
            raise ValueError("empty input")
        if not np.all(np.isfinite(a)):
            raise ValueError("input contains NaN or inf")


def lpav_fit(p, y, tol=1e-8):
    """Lipschitz PAV: least-squares monotone 1-Lipschitz fit of ``y`` against ``p``.

    The chain QP is solved exactly, so ``tol`` only guards the API contract.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = np.asarray(p, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if p.size != y.size:
        raise ValueError(f"p and y differ in length: {p.size} != {y.size}")
    _check_inputs(p, y)
    chain = ChainQP.from_projections(p)
    ybar = chain.group_means(y)
    z = chain_project(ybar, chain.gaps, weights=chain.weights.astype(float))
    return MonotoneFn(chain.p, z)


def lpav_objective(fn, p, y):
    r = interpolate(fn, p) - np.asarray(y, dtype=float)
    return float(r @ r)


def _lambda_max(G):
    K = G.shape[0]
    if K <= 64:
        return float(np.linalg.eigvalsh(G)[-1])
    import scipy.linalg

    return float(scipy.linalg.eigh(G, eigvals_only=True, subset_by_index=[K - 1, K - 1])[0])


def solve_chain_qp(G, b, c0, gaps, lo=0.0, hi=1.0, z0=None, tol=1e-8,
                   max_iter=50_000, lip=None):
    """Minimize ``z'Gz + 2b'z + c0`` over the box-bounded Lipschitz chain.

    Accelerated projected gradient with function-value restarts; the projection
    is the exact chain solver.  Stops when the relative objective decrease of a
    non-restarted step drops below ``tol``.  Returns ``(z, objective, iters)``.
    """
    K = b.size
    if lip is None:
        lip = _lambda_max(G)
    step = 1.0 / (2.0 * lip) if lip > 0 else 1.0
    ones = np.ones(K)

    def obj(z):
        return float(z @ (G @ z) + 2.0 * (b @ z) + c0)

    def proj(u):
        return chain_project(u, gaps, lo, hi, ones)

    x = proj(np.full(K, 0.5 * (lo + hi)) if z0 is None else np.asarray(z0, dtype=float))
    fx = obj(x)
    if lip == 0:
        return x, fx, 0
    yv = x.copy()
    t = 1.0
    scale = max(abs(fx), abs(c0), 1e-300)
    quiet = 0
    restarted = False
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ yv + b)
        xn = proj(yv - step * grad)
        fn = obj(xn)
        if fn > fx:
            if restarted:
                # a plain projected-gradient step cannot descend: rounding floor
                return x, fx, it
            # restart momentum from the last accepted point
            t = 1.0
            yv = x.copy()
            quiet = 0
            restarted = True
            continue
        restarted = False
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        yv = xn + ((t - 1.0) / tn) * (xn - x)
        decrease = fx - fn
        x, fx, t = xn, fn, tn
        if decrease <= tol * max(abs(fx), 1e-12 * scale):
            quiet += 1
            if quiet >= 3:
                return x, fx, it
        else:
            quiet = 0
    raise ConvergenceError(f"chain QP did not converge in {max_iter} iterations", x)


def qpfit(X, p, q, tol=1e-8, z0=None, max_iter=50_000):
    """Calibrated-loss transfer fit.

    Finds ``z`` minimizing ``||X z + q||^2`` with ``X`` of shape (d, n) (column
    ``i`` is sample ``i``), subject to ``0 <= z <= 1`` and the Lipschitz chain
    on sorted, tie-merged ``p``.  ``z0`` optionally warm-starts at the original
    (unmerged) sample order.
    """
    X = np.asarray(X, dtype=float)
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != p.size:
        raise ValueError(f"X must have {p.size} columns, got shape {X.shape}")
    if q.size != X.shape[0]:
        raise ValueError(f"q must have length {X.shape[0]}, got {q.size}")
    _check_inputs(X, p, q)
    chain = ChainQP.from_projections(p)
    A = chain.merge_columns(X)
    G = A.T @ A
    b = A.T @ q
    diag = np.diag(G).copy()
    if np.all(diag > 0) and np.count_nonzero(G - np.diag(diag)) == 0:
        # orthogonal columns: separable, i.e. a weighted chain projection
        z = chain_project(-b / diag, chain.gaps, 0.0, 1.0, diag)
        return MonotoneFn(chain.p, z)
    start = None if z0 is None else chain.group_means(z0)
    z, _, _ = solve_chain_qp(G, b, float(q @ q), chain.gaps, 0.0, 1.0, start, tol, max_iter)
    return MonotoneFn(chain.p, np.clip(z, 0.0, 1.0))


def qpfit_objective(fn, X, p, q):
    r = np.asarray(X, dtype=float) @ interpolate(fn, p) + np.asarray(q, dtype=float)
    return float(r @ r)


def interpolate(fn, zeta):
    """Evaluate ``fn`` with constant extrapolation beyond the end knots."""
    out = np.interp(zeta, fn.knots_x, fn.knots_y)
    return float(out) if np.ndim(zeta) == 0 else out


def integral_of(fn, a, b):
    """Exact integral of ``fn`` over [a, b].

    The integrand is linear between consecutive kinks (including the constant
    tails), so the trapezoid rule on the kink set is exact.
    """
    if a > b:
        raise ValueError("integral_of requires a <= b")
    if a == b:
        return 0.0
    inner = fn.knots_x[(fn.knots_x > a) & (fn.knots_x < b)]
    pts = np.concatenate(([a], inner, [b]))
    vals = np.interp(pts, fn.knots_x, fn.knots_y)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))


def antiderivative(fn, u):
    """Phi(u) = integral of fn from 0 to u (signed); accepts arrays."""
    def one(t):
        return integral_of(fn, 0.0, t) if t >= 0 else -integral_of(fn, t, 0.0)

    if np.ndim(u) == 0:
        return one(float(u))
    return np.array([one(t) for t in np.ravel(u)]).reshape(np.shape(u))
