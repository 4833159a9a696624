"""Synthetic single-index data, file loaders and train/validation/test splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, ndtr

from simfit.core import Dataset, SplitDataset

TRANSFER_KINDS = ("identity", "sign", "linear_clamped", "logistic", "probit",
                  "sign01", "piecewise_ramp")
NOISE_KINDS = ("none", "bernoulli", "gaussian_clamped")

_DEFAULT_PARAM = {"linear_clamped": 0.5, "logistic": 4.0, "probit": 1.0}
_MAX_PARAM = {"linear_clamped": 1.0, "logistic": 4.0, "probit": math.sqrt(2 * math.pi)}
_RAMP_KNOTS = (np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), np.array([0.0, 0.1, 0.5, 0.9, 1.0]))


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class Transfer:
    """A built-in monotone transfer function.

    ``identity`` and ``sign`` are only meant for ``compute_theta``; they do not
    map into [0, 1].  ``sign01`` is a hard step unless ``smoothed``, in which
    case it is the slope-1 ramp on [-0.5, 0.5].
    """

    kind: str
    scale: Optional[float] = None
    smoothed: bool = False

    def __post_init__(self):
        if self.kind not in TRANSFER_KINDS:
            raise ValueError(f"unknown transfer kind {self.kind!r}")
        if self.kind in _DEFAULT_PARAM:
            scale = _DEFAULT_PARAM[self.kind] if self.scale is None else float(self.scale)
            if not 0 < scale <= _MAX_PARAM[self.kind] + 1e-12:
                raise ValueError(
                    f"{self.kind} scale must be in (0, {_MAX_PARAM[self.kind]:.6g}] "
                    "to stay 1-Lipschitz")
            object.__setattr__(self, "scale", scale)
        elif self.scale is not None:
            raise ValueError(f"{self.kind} takes no scale parameter")

    @classmethod
    def parse(cls, text):
        """``"logistic"``, ``"logistic:2"``, ``"sign01:smooth"`` ..."""
        kind, _, arg = text.partition(":")
        if kind == "sign01" and arg in ("smooth", "smoothed"):
            return cls("sign01", smoothed=True)
        return cls(kind, float(arg) if arg else None)

    def __str__(self):
        if self.smoothed:
            return f"{self.kind}:smooth"
        if self.scale is not None:
            return f"{self.kind}:{self.scale:g}"
        return self.kind

    @property
    def lipschitz_ok(self):
        return not (self.kind == "sign" or (self.kind == "sign01" and not self.smoothed))

    @property
    def unit_range(self):
        return self.kind not in ("identity", "sign")

    def pieces(self):
        """Linear pieces ``(a, b, intercept, slope)`` for piecewise-linear kinds."""
        inf = math.inf
        if self.kind == "identity":
            return [(-inf, inf, 0.0, 1.0)]
        if self.kind == "sign":
            return [(-inf, 0.0, -1.0, 0.0), (0.0, inf, 1.0, 0.0)]
        if self.kind == "sign01" and not self.smoothed:
            return [(-inf, 0.0, 0.0, 0.0), (0.0, inf, 1.0, 0.0)]
        if self.kind == "sign01" or self.kind == "linear_clamped":
            c = 1.0 if self.kind == "sign01" else self.scale
            u0, u1 = -0.5 / c, 0.5 / c
            return [(-inf, u0, 0.0, 0.0), (u0, u1, 0.5, c), (u1, inf, 1.0, 0.0)]
        if self.kind == "piecewise_ramp":
            xs, ys = _RAMP_KNOTS
            out = [(-inf, xs[0], ys[0], 0.0)]
            for i in range(xs.size - 1):
                slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
                out.append((xs[i], xs[i + 1], ys[i] - slope * xs[i], slope))
            out.append((xs[-1], inf, ys[-1], 0.0))
            return out
        return None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "logistic":
            return expit(self.scale * u)
        if self.kind == "probit":
            return ndtr(self.scale * u)
        if self.kind == "sign":
            return np.sign(u)
        if self.kind == "sign01" and not self.smoothed:
            return (u >= 0).astype(float)
        out = np.zeros_like(u)
        for a, b, c0, c1 in self.pieces():
            mask = (u >= a) & (u < b) if b < math.inf else u >= a
            out = np.where(mask, c0 + c1 * u, out)
        return out


@dataclass(frozen=True)
class Noise:
    kind: str = "bernoulli"
    sigma: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian_clamped" and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def parse(cls, text):
        kind, _, arg = text.partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)

    def __str__(self):
        return f"{self.kind}:{self.sigma:g}" if self.kind == "gaussian_clamped" else self.kind


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    s: int
    transfer: Transfer = Transfer("logistic")
    noise: Noise = Noise()
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 1 <= self.s <= self.d:
            raise ValueError(f"sparsity s={self.s} must satisfy 1 <= s <= d={self.d}")


@dataclass(frozen=True)
class GroundTruth:
    w_star: np.ndarray
    transfer: Transfer
    theta: float

    def transfer_fn(self, u):
        return self.transfer(u)


def _rng(seed):
    # Philox is counter-based: the stream is a pure function of the seed.
    return np.random.Generator(np.random.Philox(int(seed)))


def generate(spec):
    """Draw a dataset from E[y|x] = g(w*.x) with x ~ N(0, I)."""
    tr = spec.transfer
    if not tr.lipschitz_ok:
        raise ValueError(f"{tr} is not Lipschitz; use 'sign01:smooth' for the ramp variant")
    if not tr.unit_range:
        raise ValueError(f"{tr} does not map into [0, 1]")
    rng = _rng(spec.seed)
    support = np.sort(rng.choice(spec.d, size=spec.s, replace=False))
    signs = rng.choice(np.array([-1.0, 1.0]), size=spec.s)
    w = np.zeros(spec.d)
    w[support] = signs
    w /= np.linalg.norm(w)
    X = rng.standard_normal((spec.n, spec.d))
    mean = tr(X @ w)
    if spec.noise.kind == "none":
        y = mean
    elif spec.noise.kind == "bernoulli":
        y = (rng.random(spec.n) < mean).astype(float)
    else:
        y = np.clip(mean + spec.noise.sigma * rng.standard_normal(spec.n), 0.0, 1.0)
    truth = GroundTruth(w, tr, compute_theta(tr))
    return Dataset(X, np.clip(y, 0.0, 1.0)), truth


def _gauss_moment_piece(a, b, c0, c1):
    """E[(c0 + c1 mu) mu ; a < mu < b] for mu ~ N(0, 1), in closed form."""
    def pdf(t):
        return 0.0 if math.isinf(t) else math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)

    def tpdf(t):
        return 0.0 if math.isinf(t) else t * pdf(t)

    mass = float(ndtr(b) - ndtr(a))
    return c0 * (pdf(a) - pdf(b)) + c1 * (mass - (tpdf(b) - tpdf(a)))


def compute_theta(transfer, nodes=256):
    """theta = E[g(mu) mu] for mu ~ N(0, 1).

    Piecewise-linear transfers use exact Gaussian partial moments; smooth ones
    use probabilists' Gauss-Hermite quadrature.
    """
    if isinstance(transfer, str):
        transfer = Transfer.parse(transfer)
    pieces = transfer.pieces()
    if pieces is not None:
        return float(sum(_gauss_moment_piece(*pc) for pc in pieces))
    x, w = np.polynomial.hermite_e.hermegauss(max(int(nodes), 64))
    return float(np.sum(w * transfer(x) * x) / math.sqrt(2 * math.pi))


def _remap_labels(y, where):
    y = np.asarray(y, dtype=float)
    if y.size and (y.min() < 0.0 or y.max() > 1.0):
        if np.all((y == -1.0) | (y == 1.0)):
            return (y + 1.0) / 2.0
        raise DataError(f"{where}: labels must lie in [0, 1] or be in {{-1, +1}}")
    return y


def load_csv(path, header=False):
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
            if width is None:
                width = len(vals)
                if width < 2:
                    raise DataError(f"{path}:{lineno}: need at least one feature and a response")
            elif len(vals) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: empty file")
    arr = np.array(rows)
    y = _remap_labels(arr[:, -1], path)
    return Dataset(arr[:, :-1], y)


def load_svmlight(path, n_features=None):
    labels = []
    entries = []
    max_idx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {tokens[0]!r}") from None
            row = {}
            for tok in tokens[1:]:
                key, sep, val = tok.partition(":")
                if not sep:
                    raise DataError(f"{path}:{lineno}: malformed token {tok!r}")
                if key == "qid":
                    continue
                try:
                    idx = int(key)
                    row[idx] = float(val)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed token {tok!r}") from None
                if idx < 1:
                    raise DataError(f"{path}:{lineno}: feature index {idx} (indices are 1-based)")
                max_idx = max(max_idx, idx)
            entries.append(row)
    if not labels:
        raise DataError(f"{path}: empty file")
    d = max_idx if n_features is None else int(n_features)
    if d < max_idx:
        raise DataError(f"{path}: feature index {max_idx} exceeds n_features={d}")
    X = np.zeros((len(labels), max(d, 1)))
    for i, row in enumerate(entries):
        for j, v in row.items():
            X[i, j - 1] = v
    return Dataset(X, _remap_labels(labels, path))


def load(path, format="csv", header=False):
    if format == "csv":
        return load_csv(path, header=header)
    if format == "svmlight":
        return load_svmlight(path)
    raise ValueError(f"unknown format {format!r}")


def split(data, fractions=(0.6, 0.2, 0.2), seed=0):
    """Seeded shuffle then contiguous train/validation/test partition.

    Validation and test get ``floor(n * f)`` rows; train takes the remainder.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n = data.n
    # the epsilon keeps e.g. 90 * 0.7 = 62.99999999999999 from flooring to 62
    n_val = int(math.floor(n * fr[1] + 1e-9))
    n_test = int(math.floor(n * fr[2] + 1e-9))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"split of n={n} by {fr} leaves an empty partition")
    perm = _rng(seed).permutation(n)
    idx = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return SplitDataset(data.subset(idx[0]), data.subset(idx[1]), data.subset(idx[2]), idx)


def standardize(sp):
    """Z-score every partition with the training column statistics."""
    mu = sp.train.features.mean(axis=0)
    sd = sp.train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def tx(ds):
        return Dataset((ds.features - mu) / sd, ds.responses, ds.feature_names)

    return SplitDataset(tx(sp.train), tx(sp.validation), tx(sp.test), sp.indices)
