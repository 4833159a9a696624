"""Experiment harness: validated hyperparameter grids and SILO rate studies."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from simfit.algorithms import ALGORITHMS, FitSpec, fit, silo_fit
from simfit.core import SolverOptions, mse, misclassification
from simfit.data import (Noise, SyntheticSpec, Transfer, compute_theta, generate, load,
                         split, standardize)

CSV_COLUMNS = ("algorithm", "lambda", "eta", "sqrt_s", "seed", "status", "val_mse",
               "test_mse", "test_misclassification", "direction_error", "selected", "error")

# hyperparameters each learner actually consumes
_USES = {
    "silo": ("sqrt_s",),
    "isilo": ("lambda", "eta", "sqrt_s"),
    "cisilo": ("lambda", "eta", "sqrt_s"),
    "slisotron": (),
    "slr": ("lambda", "eta"),
}


@dataclass(frozen=True)
class FileSource:
    path: str
    format: str = "csv"
    header: bool = False


@dataclass(frozen=True)
class GridSpec:
    algorithms: tuple
    lambda_grid: tuple = (0.01,)
    eta_grid: tuple = (0.1,)
    sparsity_grid: tuple = (1.0,)
    seeds: tuple = (0,)
    source: object = None  # SyntheticSpec or FileSource
    fractions: tuple = (0.6, 0.2, 0.2)
    max_iters: int = 100
    tol: float = 1e-8
    standardize: bool = False

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("no algorithms given")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        for name in ("lambda_grid", "eta_grid", "sparsity_grid", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not isinstance(self.source, (SyntheticSpec, FileSource)):
            raise ValueError("source must be a synthetic spec or a file")

    def cells(self):
        grids = {"lambda": self.lambda_grid, "eta": self.eta_grid, "sqrt_s": self.sparsity_grid}
        out = []
        for algo in self.algorithms:
            names = _USES[algo]
            for values in itertools.product(*(grids[k] for k in names)):
                combo = tuple(sorted(zip(names, (float(v) for v in values))))
                for seed in self.seeds:
                    out.append((algo, combo, int(seed)))
        out.sort(key=lambda c: (c[0], c[1], c[2]))
        return out


@dataclass
class BenchResult:
    rows: list
    wall_ms: float = 0.0
    meta: dict = field(default_factory=dict)

    def selected(self):
        return [r for r in self.rows if r["selected"]]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


@lru_cache(maxsize=8)
def _prepared(source, seed, fractions, do_standardize):
    truth = None
    if isinstance(source, SyntheticSpec):
        spec = SyntheticSpec(source.n, source.d, source.s, source.transfer, source.noise, seed)
        data, truth = generate(spec)
    else:
        data = _load_cached(source)
    sp = split(data, fractions, seed)
    if do_standardize:
        sp = standardize(sp)
    return sp, truth


@lru_cache(maxsize=4)
def _load_cached(source):
    return load(source.path, source.format, header=source.header)


def direction_error(w, w_star, eps=1e-12):
    w = np.asarray(w, dtype=float)
    return float(np.linalg.norm(w / max(np.linalg.norm(w), eps) - w_star))


def run_cell(grid, cell):
    algo, combo, seed = cell
    hp = dict(combo)
    row = {"algorithm": algo, "lambda": hp.get("lambda"), "eta": hp.get("eta"),
           "sqrt_s": hp.get("sqrt_s"), "seed": seed, "status": "ok", "val_mse": None,
           "test_mse": None, "test_misclassification": None, "direction_error": None,
           "selected": False, "error": None, "elapsed_ms": None}
    try:
        sp, truth = _prepared(grid.source, seed, tuple(grid.fractions), grid.standardize)
        opts = SolverOptions(lam=hp.get("lambda", 0.0), eta=hp.get("eta", 1.0),
                             max_iters=grid.max_iters, tol=grid.tol, seed=seed,
                             sparsity_budget=hp.get("sqrt_s", 1.0))
        report = fit(FitSpec(algo, opts), sp)
        model = report.model
        row["val_mse"] = report.best_val_mse
        row["test_mse"] = mse(model, sp.test)
        if sp.test.is_binary():
            row["test_misclassification"] = misclassification(model, sp.test)
        if truth is not None:
            row["direction_error"] = direction_error(model.weights, truth.w_star)
        row["elapsed_ms"] = report.elapsed_ms
    except Exception as exc:  # a failed cell is recorded, not raised
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _mark_selected(rows):
    groups = {}
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault((r["algorithm"], r["seed"]), []).append(r)
    for members in groups.values():
        best = min(members, key=lambda r: r["val_mse"])
        best["selected"] = True


def run_grid(grid, jobs=1):
    """Fit every (algorithm, hyperparameter combo, seed) cell.

    Rows come back sorted by (algorithm, combo, seed) whatever ``jobs`` is;
    within each (algorithm, seed) the lowest validation MSE is marked selected.
    """
    started = time.perf_counter()
    cells = grid.cells()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, itertools.repeat(grid), cells))
    else:
        rows = [run_cell(grid, c) for c in cells]
    _mark_selected(rows)
    return BenchResult(rows, (time.perf_counter() - started) * 1e3)


def normalize_errors(result, baseline="slisotron", metric="test_misclassification"):
    """Mean selected ``metric`` per algorithm divided by the baseline's."""
    means = {}
    for algo in dict.fromkeys(r["algorithm"] for r in result.rows):
        vals = [r[metric] for r in result.selected()
                if r["algorithm"] == algo and r[metric] is not None]
        if vals:
            means[algo] = float(np.mean(vals))
    if baseline not in means:
        raise ValueError(f"baseline {baseline!r} has no selected {metric} rows")
    if means[baseline] == 0.0:
        raise ValueError(f"baseline {baseline!r} has zero error; cannot normalize")
    return {a: v / means[baseline] for a, v in means.items()}


def rate_study(transfer, d, s, n_list, trials=tuple(range(10)), noise=Noise("bernoulli"),
               sparsity_budget=None, flip_labels=False, unflip=False, tol=1e-8):
    """Median SILO direction error per sample size, with the n^(-1/4) theory shape.

    The theory column is ``(sqrt(s log(2d/s) / n) / theta) ** 0.5`` scaled so it
    matches the first empirical median (the universal constant is unknown).
    ``flip_labels`` replaces y by 1 - y; ``unflip`` then negates the estimate.
    """
    if isinstance(transfer, str):
        transfer = Transfer.parse(transfer)
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    theta = abs(compute_theta(transfer))
    budget = math.sqrt(s) if sparsity_budget is None else sparsity_budget
    opts = SolverOptions(tol=tol, sparsity_budget=budget)
    table = []
    for n in n_list:
        errs = []
        for trial in trials:
            data, truth = generate(SyntheticSpec(n, d, s, transfer, noise, int(trial) * 2**20 + n))
            if flip_labels:
                data = type(data)(data.features, 1.0 - data.responses)
            w = silo_fit(data, opts).weights
            if flip_labels and unflip:
                w = -w
            errs.append(direction_error(w, truth.w_star))
        raw = math.sqrt(math.sqrt(s * math.log(2 * d / s) / n) / theta) if theta > 0 else math.nan
        table.append({"n": n, "median_direction_error": float(np.median(errs)),
                      "theory_raw": raw, "errors": errs})
    if table and theta > 0:
        c = table[0]["median_direction_error"] / table[0]["theory_raw"]
        for row in table:
            row["theory"] = c * row["theory_raw"]
    else:
        for row in table:
            row["theory"] = None
    return table


# -- configuration files -----------------------------------------------------

def grid_from_config(cfg):
    src = cfg.get("source")
    if not isinstance(src, dict):
        raise ValueError("config needs a 'source' object")
    if "synthetic" in src:
        syn = src["synthetic"]
        source = SyntheticSpec(int(syn["n"]), int(syn["d"]), int(syn["s"]),
                               Transfer.parse(syn.get("transfer", "logistic")),
                               Noise.parse(syn.get("noise", "bernoulli")))
    elif "file" in src:
        source = FileSource(str(src["file"]), src.get("format", "csv"), bool(src.get("header", False)))
    else:
        raise ValueError("source must contain 'synthetic' or 'file'")
    return GridSpec(
        algorithms=tuple(cfg["algorithms"]),
        lambda_grid=tuple(float(v) for v in cfg.get("lambda_grid", [0.01])),
        eta_grid=tuple(float(v) for v in cfg.get("eta_grid", [0.1])),
        sparsity_grid=tuple(float(v) for v in cfg.get("sparsity_grid", [1.0])),
        seeds=tuple(int(v) for v in cfg.get("seeds", [0])),
        source=source,
        fractions=tuple(float(v) for v in cfg.get("split", [0.6, 0.2, 0.2])),
        max_iters=int(cfg.get("iters", 100)),
        tol=float(cfg.get("tol", 1e-8)),
        standardize=bool(cfg.get("standardize", False)),
    )


def write_grid_outputs(result, out_dir, baseline="slisotron"):
    out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(out_dir / "results.csv")
    binary = any(r["test_misclassification"] is not None for r in result.rows)
    metric = "test_misclassification" if binary else "test_mse"
    try:
        normalized = normalize_errors(result, baseline, metric)
    except ValueError:
        normalized = None
    summary = {
        "kind": "grid",
        "metric": metric,
        "selected": [{k: r[k] for k in ("algorithm", "lambda", "eta", "sqrt_s", "seed",
                                        "val_mse", "test_mse", "test_misclassification")}
                     for r in result.selected()],
        "failed": sum(r["status"] != "ok" for r in result.rows),
        "normalized_errors": normalized,
        "baseline": baseline,
        "wall_ms": result.wall_ms,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    algos = list(dict.fromkeys(r["algorithm"] for r in result.rows))
    seeds = sorted({r["seed"] for r in result.rows})
    picked = {(r["algorithm"], r["seed"]): r[metric] for r in result.selected()}
    with open(out_dir / "plot_data.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed"] + algos)
        for seed in seeds:
            w.writerow([seed] + [_fmt(picked.get((a, seed))) for a in algos])


def write_rate_outputs(table, cfg, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "trial", "direction_error"])
        for row in table:
            for trial, err in zip(cfg["trials"], row["errors"]):
                w.writerow([row["n"], trial, _fmt(err)])
    with open(out_dir / "plot_data.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "median_direction_error", "theory"])
        for row in table:
            w.writerow([row["n"], _fmt(row["median_direction_error"]), _fmt(row["theory"])])
    summary = {"kind": "rate", "config": cfg,
               "table": [{k: row[k] for k in ("n", "median_direction_error", "theory")}
                         for row in table]}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def rate_config(cfg):
    out = {
        "transfer": cfg.get("transfer", "logistic"),
        "noise": cfg.get("noise", "bernoulli"),
        "d": int(cfg["d"]),
        "s": int(cfg["s"]),
        "n_list": [int(n) for n in cfg["n_list"]],
        "trials": [int(t) for t in cfg.get("trials", list(range(10)))],
        "sqrt_s": cfg.get("sqrt_s"),
    }
    return out


def run_rate_config(cfg):
    return rate_study(Transfer.parse(cfg["transfer"]), cfg["d"], cfg["s"], cfg["n_list"],
                      cfg["trials"], Noise.parse(cfg["noise"]), cfg["sqrt_s"])


def load_config(path) -> Optional[dict]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
