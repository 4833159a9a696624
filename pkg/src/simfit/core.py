"""Data model, metrics, proximal operators and ball projections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from simfit.monotone import ConvergenceError, MonotoneFn

PHASE_W = "after_w_update"
PHASE_G = "after_g_update"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Dense features (n, d) with responses in [0, 1]."""

    features: np.ndarray
    responses: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = _frozen(self.features)
        y = _frozen(self.responses).ravel()
        if X.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {X.shape}")
        if y.size != n:
            raise ValueError(f"{y.size} responses for {n} samples")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("data contains NaN or inf")
        if y.min() < 0.0 or y.max() > 1.0:
            raise ValueError("responses must lie in [0, 1]")
        if self.feature_names is not None and len(self.feature_names) != d:
            raise ValueError("feature_names length does not match d")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.responses[idx], self.feature_names)

    def is_binary(self):
        return bool(np.all((self.responses == 0.0) | (self.responses == 1.0)))


@dataclass(frozen=True)
class SimModel:
    """h(x) = transfer(weights . x)."""

    weights: np.ndarray
    transfer: MonotoneFn
    # set when the weight estimate collapsed to zero (labels uncorrelated with features)
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights).ravel())

    @property
    def d(self):
        return self.weights.size

    def project(self, features):
        return np.asarray(features, dtype=float) @ self.weights

    def predict(self, features):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.d:
            raise ValueError(
                f"model has d={self.d} but data has shape {features.shape}")
        return self.transfer(features @ self.weights)


@dataclass(frozen=True)
class SolverOptions:
    lam: float = 0.01
    eta: float = 0.1
    max_iters: int = 100
    tol: float = 1e-8
    seed: int = 0
    sparsity_budget: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError("max_iters must be a non-negative integer")
        if not self.sparsity_budget > 0:
            raise ValueError("sparsity_budget must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class TrainReport:
    """Validation-MSE trace of an alternating fit plus its incumbent model.

    ``mse_trace`` holds ``(iteration, phase, val_mse)`` tuples; the initial
    probe is recorded as iteration 0 with phase ``after_g_update``.
    """

    mse_trace: list
    best_index: int
    best_val_mse: float
    model: SimModel
    elapsed_ms: float = 0.0
    weights_trace: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "mse_trace": [[int(t), ph, float(v)] for t, ph, v in self.mse_trace],
            "best_index": int(self.best_index),
            "best_val_mse": float(self.best_val_mse),
            "elapsed_ms": float(self.elapsed_ms),
        }


def _check_dims(model, data):
    if model.d != data.d:
        raise ValueError(f"dimension mismatch: model d={model.d}, data d={data.d}")


def mse(model, data):
    _check_dims(model, data)
    r = model.predict(data.features) - data.responses
    return float(np.mean(r * r))


def misclassification(model, data, threshold=0.5):
    """Fraction of samples where ``prediction >= threshold`` disagrees with the label."""
    _check_dims(model, data)
    if not data.is_binary():
        raise ValueError("misclassification needs labels in {0, 1}")
    pred = model.predict(data.features) >= threshold
    return float(np.mean(pred != (data.responses == 1.0)))


def soft_threshold(v, tau):
    if tau < 0:
        raise ValueError("tau must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def project_l1_ball(v, radius=1.0):
    """Euclidean projection onto {w : ||w||_1 <= radius} (sort-based)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def project_l2_ball(v, radius=1.0):
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def project_intersection(v, l1_radius, l2_radius, tol=1e-10, max_iter=10_000):
    """Projection onto the intersection of an l1 and an l2 ball via Dykstra."""
    if not (l1_radius > 0 and l2_radius > 0 and tol > 0):
        raise ValueError("radii and tol must be positive")
    x = np.asarray(v, dtype=float).copy()
    if np.abs(x).sum() <= l1_radius and np.linalg.norm(x) <= l2_radius:
        return x
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = project_l2_ball(x + p, l2_radius)
        p = x + p - y
        xn = project_l1_ball(y + q, l1_radius)
        q = y + q - xn
        if np.linalg.norm(xn - x) < tol:
            return xn
        x = xn
    raise ConvergenceError(
        f"Dykstra projection did not converge in {max_iter} iterations", x)


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    validation: Dataset
    test: Dataset
    # original row indices of each partition
    indices: Optional[tuple] = None
