import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from simfit.cli import default_sqrt_s, main, read_model, write_model
from simfit.core import SimModel
from simfit.data import Transfer, compute_theta
from simfit.monotone import MonotoneFn


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "train.csv"
    assert run("synth", "--n", 200, "--d", 12, "--s", 3, "--seed", 5, "--out", path) == 0
    return path


class TestSynth:
    def test_shape(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("synth", "--n", 100, "--d", 20, "--s", 3, "--transfer", "logistic",
                   "--seed", 1, "--out", out) == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert len(rows) == 100 and all(len(r) == 21 for r in rows)

    def test_same_seed_same_file(self, tmp_path):
        for name in ("a", "b"):
            run("synth", "--n", 30, "--d", 4, "--s", 2, "--seed", 7, "--out", tmp_path / name,
                "--truth", tmp_path / (name + ".json"))
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_truth_theta(self, tmp_path):
        run("synth", "--n", 10, "--d", 4, "--s", 2, "--transfer", "probit:2", "--seed", 0,
            "--out", tmp_path / "x.csv", "--truth", tmp_path / "t.json")
        doc = json.loads((tmp_path / "t.json").read_text())
        assert doc["theta"] == compute_theta(Transfer("probit", 2.0))
        assert np.linalg.norm(doc["w_star"]) == pytest.approx(1.0)

    def test_s_greater_than_d(self, tmp_path):
        assert run("synth", "--n", 10, "--d", 2, "--s", 3, "--seed", 0, "--out",
                   tmp_path / "x.csv") == 1

    def test_hard_sign_rejected(self, tmp_path):
        assert run("synth", "--n", 10, "--d", 2, "--s", 1, "--transfer", "sign01", "--seed", 0,
                   "--out", tmp_path / "x.csv") == 1


class TestFitPredict:
    @pytest.mark.parametrize("algo", ["silo", "isilo", "cisilo", "slisotron", "slr"])
    def test_fit_writes_valid_model(self, tmp_path, synth_csv, algo, capsys):
        model = tmp_path / "m.json"
        report = tmp_path / "r.json"
        assert run("fit", "--algo", algo, "--input", synth_csv, "--iters", 5, "--out", model,
                   "--report", report) == 0
        lines = capsys.readouterr().out.splitlines()
        keys = [ln.split("=")[0] for ln in lines]
        assert keys == ["train_mse", "train_misclassification", "val_mse",
                        "val_misclassification", "test_mse", "test_misclassification"]
        m, doc = read_model(model)
        assert m.transfer.is_valid() and doc["algorithm"] == algo
        assert doc["meta"]["sqrt_s"] == default_sqrt_s(12)
        rep = json.loads(report.read_text())
        assert rep["best_val_mse"] == min(e[2] for e in rep["mse_trace"])

    def test_predict_in_unit_interval(self, tmp_path, synth_csv, capsys):
        model, pred = tmp_path / "m.json", tmp_path / "p.txt"
        run("fit", "--algo", "cisilo", "--input", synth_csv, "--iters", 3, "--out", model)
        other = tmp_path / "o.csv"
        run("synth", "--n", 50, "--d", 12, "--s", 2, "--seed", 99, "--noise", "none",
            "--out", other)
        capsys.readouterr()
        assert run("predict", "--model", model, "--input", other, "--out", pred) == 0
        out = capsys.readouterr().out
        values = np.loadtxt(pred)
        assert values.shape == (50,) and values.min() >= 0 and values.max() <= 1
        assert out.startswith("n=50\nmse=")

    def test_perfect_model_zero_mse(self, tmp_path, capsys):
        data = tmp_path / "lin.csv"
        data.write_text("0.1,0.1\n0.4,0.4\n0.8,0.8\n", encoding="utf-8")
        model = tmp_path / "m.json"
        write_model(model, SimModel([1.0], MonotoneFn([0.0, 1.0], [0.0, 1.0])), "silo", {})
        assert run("predict", "--model", model, "--input", data) == 0
        captured = capsys.readouterr()
        assert captured.out.splitlines() == ["0.10000000000000001", "0.40000000000000002",
                                             "0.80000000000000004"]
        assert "mse=0\n" in captured.err

    def test_dimension_mismatch(self, tmp_path, synth_csv):
        model = tmp_path / "m.json"
        run("fit", "--algo", "silo", "--input", synth_csv, "--out", model)
        small = tmp_path / "s.csv"
        small.write_text("1,2,1\n", encoding="utf-8")
        assert run("predict", "--model", model, "--input", small) == 2

    def test_round_trip_bit_exact(self, tmp_path, rng):
        fn = MonotoneFn(np.cumsum(rng.uniform(0.1, 1, 6)), np.linspace(0.1, 0.7, 6) / 3 + 0.1)
        model = SimModel(rng.normal(size=4) / 3, fn)
        path = tmp_path / "m.json"
        write_model(path, model, "cisilo", {"seed": 0})
        back, _ = read_model(path)
        probe = rng.normal(size=(100, 4)) * 5
        np.testing.assert_array_equal(back.predict(probe), model.predict(probe))

    def test_standardize_applies_at_predict(self, tmp_path, synth_csv, capsys):
        model = tmp_path / "m.json"
        run("fit", "--algo", "silo", "--input", synth_csv, "--standardize", "--out", model)
        fit_out = dict(ln.split("=") for ln in capsys.readouterr().out.splitlines())
        assert "standardize" in json.loads(model.read_text())["meta"]
        assert run("predict", "--model", model, "--input", synth_csv, "--out", tmp_path / "p") == 0
        pred_out = dict(ln.split("=") for ln in capsys.readouterr().out.splitlines())
        # scaled and unscaled predictions would disagree; the stored scaling keeps them equal
        total = sum(float(fit_out[k + "_mse"]) * w for k, w in (("train", 120), ("val", 40),
                                                                ("test", 40)))
        assert float(pred_out["mse"]) == pytest.approx(total / 200, rel=1e-12)


class TestExitCodes:
    def test_unknown_algo(self, synth_csv, tmp_path):
        assert run("fit", "--algo", "lasso", "--input", synth_csv, "--out", tmp_path / "m") == 1

    def test_missing_subcommand(self):
        assert run() == 1

    def test_bad_split(self, synth_csv, tmp_path):
        assert run("fit", "--algo", "silo", "--input", synth_csv, "--split", "0.5,0.5",
                   "--out", tmp_path / "m") == 1

    def test_negative_lambda(self, synth_csv, tmp_path):
        assert run("fit", "--algo", "isilo", "--input", synth_csv, "--lambda", "-1",
                   "--out", tmp_path / "m") == 1

    def test_zero_based_svmlight(self, tmp_path):
        data = tmp_path / "z.svm"
        data.write_text("1 0:0.5 1:1.0\n0 1:2.0\n", encoding="utf-8")
        assert run("fit", "--algo", "silo", "--input", data, "--format", "svmlight",
                   "--out", tmp_path / "m") == 2

    def test_missing_file(self, tmp_path):
        assert run("fit", "--algo", "silo", "--input", tmp_path / "nope.csv",
                   "--out", tmp_path / "m") == 2

    def test_solver_failure(self, synth_csv, tmp_path, monkeypatch):
        from simfit import algorithms
        from simfit.monotone import ConvergenceError

        def boom(*a, **k):
            raise ConvergenceError("cap reached")

        monkeypatch.setattr(algorithms, "qpfit", boom)
        assert run("fit", "--algo", "cisilo", "--input", synth_csv, "--iters", 2,
                   "--out", tmp_path / "m") == 3

    def test_malformed_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json", encoding="utf-8")
        assert run("bench", "--config", cfg, "--out-dir", tmp_path / "o") == 1
        cfg.write_text(json.dumps({"algorithms": ["silo"]}), encoding="utf-8")
        assert run("bench", "--config", cfg, "--out-dir", tmp_path / "o") == 1
        cfg.write_text(json.dumps({"kind": "rate", "d": 5}), encoding="utf-8")
        assert run("bench", "--config", cfg, "--out-dir", tmp_path / "o") == 1


class TestBench:
    def test_minimal_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"algorithms": ["silo"], "source": {
            "synthetic": {"n": 60, "d": 5, "s": 2}}}), encoding="utf-8")
        assert run("bench", "--config", cfg, "--out-dir", tmp_path / "o") == 0
        names = sorted(p.name for p in (tmp_path / "o").iterdir())
        assert names == ["plot_data.csv", "results.csv", "summary.json"]

    def test_rate_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kind": "rate", "d": 20, "s": 2, "n_list": [50, 100, 200],
                                   "trials": [0, 1, 2]}), encoding="utf-8")
        assert run("bench", "--config", cfg, "--out-dir", tmp_path / "o") == 0
        rows = list(csv.reader((tmp_path / "o" / "plot_data.csv").read_text().splitlines()))
        assert rows[0] == ["n", "median_direction_error", "theory"]
        assert [int(r[0]) for r in rows[1:]] == [50, 100, 200]


def test_console_script(tmp_path):
    out = tmp_path / "x.csv"
    proc = subprocess.run([sys.executable, "-m", "simfit.cli", "synth", "--n", "5", "--d", "3",
                           "--s", "1", "--seed", "0", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 5
