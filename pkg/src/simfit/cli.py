"""``simfit`` command line: fit / predict / synth / bench.

Exit codes: 1 bad arguments or config, 2 data errors, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from simfit import bench
from simfit.algorithms import ALGORITHMS, FitSpec, fit
from simfit.core import SimModel, SolverOptions, mse, misclassification
from simfit.data import (DataError, Noise, SyntheticSpec, Transfer, generate, load, split,
                         standardize)
from simfit.monotone import ConvergenceError, MonotoneFn

EXIT_ARGS, EXIT_DATA, EXIT_SOLVER = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x):
    return "%.17g" % x


def default_sqrt_s(d):
    return math.sqrt(max(1, round(0.05 * d)))


def _created_at():
    # deterministic by default; SOURCE_DATE_EPOCH opts into a timestamp
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def model_to_dict(model, algorithm, meta):
    return {
        "algorithm": algorithm,
        "weights": model.weights.tolist(),
        "transfer": model.transfer.to_dict(),
        "meta": meta,
    }


def write_model(path, model, algorithm, meta):
    text = json.dumps(model_to_dict(model, algorithm, meta), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    model = SimModel(np.asarray(doc["weights"], dtype=float), MonotoneFn.from_dict(doc["transfer"]))
    return model, doc


def _parse_split(text):
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad --split {text!r}") from None
    if len(parts) != 3:
        raise UsageError("--split needs three comma-separated fractions")
    return parts


def _apply_scaling(features, scaling):
    if not scaling:
        return features
    return (features - np.asarray(scaling["mean"])) / np.asarray(scaling["scale"])


def cmd_fit(args):
    fractions = _parse_split(args.split)
    data = load(args.input, args.format, header=args.header)
    sp = split(data, fractions, args.seed)
    scaling = None
    if args.standardize:
        mu = sp.train.features.mean(axis=0)
        sd = sp.train.features.std(axis=0)
        scaling = {"mean": mu.tolist(), "scale": np.where(sd > 0, sd, 1.0).tolist()}
        sp = standardize(sp)
    sqrt_s = args.sqrt_s if args.sqrt_s is not None else default_sqrt_s(data.d)
    try:
        opts = SolverOptions(lam=args.lam, eta=args.eta, max_iters=args.iters, tol=args.tol,
                             seed=args.seed, sparsity_budget=sqrt_s)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = fit(FitSpec(args.algo, opts, init=args.init, init_seed=args.seed), sp)
    model = report.model
    meta = {"seed": args.seed, "lambda": args.lam, "eta": args.eta, "iters": args.iters,
            "sqrt_s": sqrt_s, "tol": args.tol, "split": list(fractions), "init": args.init,
            "created_at": _created_at()}
    if scaling:
        meta["standardize"] = scaling
    write_model(args.out, model, args.algo, meta)
    if args.report:
        doc = report.to_dict()
        Path(args.report).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    for name, part in (("train", sp.train), ("val", sp.validation), ("test", sp.test)):
        print(f"{name}_mse={_fmt(mse(model, part))}")
        if part.is_binary():
            print(f"{name}_misclassification={_fmt(misclassification(model, part))}")
    return 0


def cmd_predict(args):
    model, doc = read_model(args.model)
    data = load(args.input, args.format, header=args.header)
    if data.d != model.d:
        raise DataError(f"model expects d={model.d} features, data has d={data.d}")
    X = _apply_scaling(data.features, doc.get("meta", {}).get("standardize"))
    pred = model.predict(X)
    lines = "".join(_fmt(v) + "\n" for v in pred)
    report = sys.stdout
    if args.out:
        Path(args.out).write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
        report = sys.stderr
    r = pred - data.responses
    print(f"n={data.n}", file=report)
    print(f"mse={_fmt(float(np.mean(r * r)))}", file=report)
    if data.is_binary():
        err = float(np.mean((pred >= 0.5) != (data.responses == 1.0)))
        print(f"misclassification={_fmt(err)}", file=report)
    return 0


def cmd_synth(args):
    try:
        spec = SyntheticSpec(args.n, args.d, args.s, Transfer.parse(args.transfer),
                             Noise.parse(args.noise), args.seed)
        data, truth = generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with open(args.out, "w", encoding="utf-8") as fh:
        for x, y in zip(data.features, data.responses):
            fh.write(",".join(_fmt(v) for v in x) + "," + _fmt(y) + "\n")
    if args.truth:
        doc = {"n": args.n, "d": args.d, "s": args.s, "seed": args.seed,
               "transfer": str(truth.transfer), "noise": str(spec.noise),
               "theta": truth.theta, "w_star": truth.w_star.tolist()}
        Path(args.truth).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_bench(args):
    try:
        cfg = bench.load_config(args.config)
        if not isinstance(cfg, dict):
            raise ValueError("config must be a JSON object")
        kind = cfg.get("kind", "grid")
        if kind == "grid":
            grid = bench.grid_from_config(cfg)
        elif kind == "rate":
            rcfg = bench.rate_config(cfg)
            Transfer.parse(rcfg["transfer"])
        else:
            raise ValueError(f"unknown config kind {kind!r}")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed config: {exc}") from None
    out_dir = Path(args.out_dir)
    if kind == "grid":
        result = bench.run_grid(grid, jobs=args.jobs)
        bench.write_grid_outputs(result, out_dir, cfg.get("baseline", "slisotron"))
        print(f"cells={len(result.rows)}")
        print(f"failed={sum(r['status'] != 'ok' for r in result.rows)}")
    else:
        table = bench.run_rate_config(rcfg)
        bench.write_rate_outputs(table, rcfg, out_dir)
        for row in table:
            print(f"n={row['n']} median_direction_error={_fmt(row['median_direction_error'])}")
    return 0


def _add_data_args(p):
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "svmlight"), default="csv")
    p.add_argument("--header", action="store_true", help="CSV has a header row")


def build_parser():
    parser = _Parser(prog="simfit", description="Learn sparse single index models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model on a dataset")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    _add_data_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--sqrt-s", dest="sqrt_s", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="0.6,0.2,0.2")
    p.add_argument("--init", choices=("from_silo", "random"), default="from_silo")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--transfer", default="logistic")
    p.add_argument("--noise", default="bernoulli")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="run a benchmark grid or rate study")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"simfit: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ConvergenceError as exc:
        print(f"simfit: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, ValueError, OSError) as exc:
        print(f"simfit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
