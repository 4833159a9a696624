import numpy as np

from simfit.core import Dataset, SimModel, SplitDataset
from simfit.monotone import MonotoneFn


def make_split(X, y, Xv=None, yv=None):
    train = Dataset(X, y)
    val = train if Xv is None else Dataset(Xv, yv)
    return SplitDataset(train, val, val)


def clamp_model(w):
    """g(u) = clip(u, 0, 1)."""
    return SimModel(np.asarray(w, dtype=float), MonotoneFn([0.0, 1.0], [0.0, 1.0]))


def random_monotone_fn(rng, k=None):
    k = int(rng.integers(1, 8)) if k is None else k
    x = np.cumsum(rng.uniform(0.05, 1.0, size=k)) - 2.0
    dy = np.diff(x) * rng.uniform(0.0, 1.0, size=k - 1)
    y = np.concatenate(([0.0], np.cumsum(dy)))
    y = y + rng.uniform(0.0, max(1.0 - y[-1], 0.0))
    return MonotoneFn(x, np.clip(y, 0.0, 1.0))
