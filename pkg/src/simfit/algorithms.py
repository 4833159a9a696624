"""SIM learners (SILO, iSILO, ciSILO) and the Slisotron / sparse logistic baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from simfit.core import (
    PHASE_G,
    PHASE_W,
    SimModel,
    SolverOptions,
    SplitDataset,
    TrainReport,
    mse,
    project_intersection,
    soft_threshold,
)
from simfit.monotone import MonotoneFn, lpav_fit, qpfit

ALGORITHMS = ("silo", "isilo", "cisilo", "slisotron", "slr")
INITS = ("from_silo", "random")

__all__ = [
    "ALGORITHMS", "FitSpec", "SplitDataset", "silo_fit", "isilo_fit", "cisilo_fit",
    "slisotron_fit", "slr_fit", "fit", "random_init", "identity_transfer",
]


@dataclass(frozen=True)
class FitSpec:
    algorithm: str
    options: SolverOptions = field(default_factory=SolverOptions)
    init: str = "from_silo"
    init_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; choose from {INITS}")


def _check_split(split, d=None):
    dims = {split.train.d, split.validation.d, split.test.d}
    if d is not None:
        dims.add(d)
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch across data/initializer: {sorted(dims)}")


def silo_fit(train, opts):
    """Linear-loss direction estimate over the l1/l2 ball intersection, then LPAV.

    Maximizes ``c.w`` with ``c = X'y / n`` by projected gradient ascent; the
    transfer is fitted once on the resulting projections.
    """
    if train.n < 1:
        raise ValueError("no training data")
    X, y = train.features, train.responses
    c = X.T @ y / train.n
    cnorm = np.linalg.norm(c)
    if cnorm == 0.0:
        w = np.zeros(train.d)
        return SimModel(w, lpav_fit(X @ w, y, opts.tol), degenerate=True)
    radius = opts.sparsity_budget
    inner_tol = min(opts.tol, 1e-10)
    step = c / cnorm
    w = project_intersection(step, radius, 1.0, inner_tol)
    for _ in range(5000):
        wn = project_intersection(w + step, radius, 1.0, inner_tol)
        moved = np.linalg.norm(wn - w)
        w = wn
        if moved < opts.tol:
            break
    return SimModel(w, lpav_fit(X @ w, y, opts.tol))


def identity_transfer():
    """u -> clip(u, 0, 1) as knots."""
    return MonotoneFn(np.array([0.0, 1.0]), np.array([0.0, 1.0]))


def random_init(d, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    return SimModel(w / np.linalg.norm(w), identity_transfer())


class _Bookkeeper:
    """Tracks the validation-MSE trace and the incumbent (ties go to the later probe)."""

    def __init__(self, validation, keep_weights=False):
        self.validation = validation
        self.trace = []
        self.best = None
        self.best_err = np.inf
        self.best_index = -1
        self.keep_weights = keep_weights
        self.weights = []

    def probe(self, it, phase, model):
        err = mse(model, self.validation)
        self.trace.append((it, phase, err))
        if self.keep_weights:
            self.weights.append(model.weights)
        if err <= self.best_err:
            self.best_err = err
            self.best = model
            self.best_index = len(self.trace) - 1
        return err

    def report(self, started):
        return TrainReport(self.trace, self.best_index, self.best_err, self.best,
                           (time.perf_counter() - started) * 1e3, self.weights)


def _alternate(split, opts, init, w_step, g_step, keep_weights=False):
    started = time.perf_counter()
    _check_split(split, init.d)
    book = _Bookkeeper(split.validation, keep_weights)
    w, g = init.weights, init.transfer
    book.probe(0, PHASE_G, init)
    for t in range(1, opts.max_iters + 1):
        w = w_step(w, g)
        book.probe(t, PHASE_W, SimModel(w, g))
        g = g_step(w, g)
        book.probe(t, PHASE_G, SimModel(w, g))
    return book.report(started)


def _perceptron_step(X, y, eta, lam):
    n = X.shape[0]

    def step(w, g):
        resid = g(X @ w) - y
        return soft_threshold(w - (eta / n) * (X.T @ resid), lam * eta)

    return step


def isilo_fit(split, opts, init, keep_weights=False):
    """Alternating proximal-perceptron / LPAV fit with validation book-keeping."""
    X, y = split.train.features, split.train.responses

    def g_step(w, g):
        return lpav_fit(X @ w, y, opts.tol)

    return _alternate(split, opts, init, _perceptron_step(X, y, opts.eta, opts.lam),
                      g_step, keep_weights)


def subgradient_l1(w):
    """Minimum-norm element of the l1 subdifferential (0 at zero coordinates)."""
    return np.sign(w)


def cisilo_fit(split, opts, init, keep_weights=False):
    """Calibrated-loss variant: same w-step, transfer refitted by QPFit."""
    X, y = split.train.features, split.train.responses
    n = X.shape[0]
    Xty = X.T @ y

    def g_step(w, g):
        p = X @ w
        q = n * opts.lam * subgradient_l1(w) - Xty
        return qpfit(X.T, p, q, opts.tol, z0=np.clip(g(p), 0.0, 1.0))

    return _alternate(split, opts, init, _perceptron_step(X, y, opts.eta, opts.lam),
                      g_step, keep_weights)


def slisotron_fit(split, opts, init=None, keep_weights=False):
    """Slisotron: unit-step perceptron update with LPAV, no sparsity penalty.

    Starts from w = 0 (a constant transfer) unless ``init`` is given.
    """
    X, y = split.train.features, split.train.responses
    n = X.shape[0]
    if init is None:
        w0 = np.zeros(X.shape[1])
        init = SimModel(w0, lpav_fit(X @ w0, y, opts.tol))

    def w_step(w, g):
        return w + (X.T @ (y - g(X @ w))) / n

    def g_step(w, g):
        return lpav_fit(X @ w, y, opts.tol)

    return _alternate(split, opts, init, w_step, g_step, keep_weights)


def _sigmoid_transfer(p, knots=257):
    lo, hi = float(np.min(p)), float(np.max(p))
    if hi <= lo:
        return MonotoneFn.constant(float(expit(lo)), at=lo)
    xs = np.linspace(lo, hi, knots)
    return MonotoneFn(xs, expit(xs))


def slr_objective(w, X, y, lam):
    u = X @ w
    return float(np.mean(np.logaddexp(0.0, u) - y * u) + lam * np.abs(w).sum())


def slr_fit(split, opts, keep_weights=False):
    """l1-penalized logistic regression by fixed-step proximal gradient."""
    started = time.perf_counter()
    _check_split(split)
    tr = split.train
    if not tr.is_binary():
        raise ValueError("slr needs labels in {0, 1}")
    X, y = tr.features, tr.responses
    n = tr.n
    book = _Bookkeeper(split.validation, keep_weights)
    w = np.zeros(tr.d)
    book.probe(0, PHASE_G, SimModel(w, _sigmoid_transfer(X @ w)))
    f = slr_objective(w, X, y, opts.lam)
    for t in range(1, opts.max_iters + 1):
        grad = X.T @ (expit(X @ w) - y) / n
        w = soft_threshold(w - opts.eta * grad, opts.eta * opts.lam)
        book.probe(t, PHASE_W, SimModel(w, _sigmoid_transfer(X @ w)))
        fn = slr_objective(w, X, y, opts.lam)
        if abs(f - fn) <= opts.tol * max(abs(f), 1e-300):
            break
        f = fn
    return book.report(started)


def _single_probe(split, model, started):
    book = _Bookkeeper(split.validation)
    book.probe(0, PHASE_G, model)
    return book.report(started)


def fit(spec, split, keep_weights=False):
    """Run the learner named by ``spec`` and return its TrainReport."""
    opts = spec.options
    algo = spec.algorithm
    if algo == "slisotron":
        return slisotron_fit(split, opts, keep_weights=keep_weights)
    if algo == "slr":
        return slr_fit(split, opts, keep_weights=keep_weights)
    _check_split(split)
    started = time.perf_counter()
    if algo == "silo" or spec.init == "from_silo":
        init = silo_fit(split.train, opts)
    else:
        init = random_init(split.train.d, spec.init_seed)
    if algo == "silo":
        return _single_probe(split, init, started)
    learner = isilo_fit if algo == "isilo" else cisilo_fit
    report = learner(split, opts, init, keep_weights=keep_weights)
    report.elapsed_ms = (time.perf_counter() - started) * 1e3
    return report
