"""Tests for the command-line front end."""

import csv
import json
import os

import numpy as np
import pytest

from pdls import cli, problems, solvers
from pdls.errors import ComparisonError, ParameterError


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_elapsed(path):
    """Trace bytes with the wall-clock column removed, for determinism checks."""
    with open(path, newline="") as fh:
        rows = [line for line in csv.reader(fh)]
    keep = [i for i, name in enumerate(rows[0]) if name != "elapsed_ms"]
    return "\n".join(",".join(line[i] for i in keep) for line in rows)


class TestRunSpec:
    def test_unknown_experiment_rejected(self):
        with pytest.raises(ParameterError, match="unknown experiment"):
            cli.RunSpec(experiment="ridge")

    def test_unknown_solver_rejected(self):
        with pytest.raises(ParameterError, match="unknown solver"):
            cli.RunSpec(experiment="lasso", solver="newton")

    def test_unknown_generator_key_rejected(self):
        with pytest.raises(ParameterError, match="parameter"):
            cli.RunSpec(experiment="lasso", generator={"bandwidth": 3})

    def test_unknown_override_rejected(self):
        with pytest.raises(ParameterError, match="solver option"):
            cli.RunSpec(experiment="lasso", overrides={"momentum": 0.9})

    def test_default_output_directory(self):
        spec = cli.RunSpec(experiment="tv1d")
        assert spec.out_dir == os.path.join("runs", "tv1d")

    def test_identity_ignores_solver_but_not_seed(self):
        a = cli.RunSpec(experiment="lasso", solver="pdhg", seed=3)
        b = cli.RunSpec(experiment="lasso", solver="rpdhg", seed=3)
        c = cli.RunSpec(experiment="lasso", solver="pdhg", seed=4)
        assert a.identity() == b.identity()
        assert a.identity() != c.identity()

    def test_identity_sensitive_to_generator(self):
        a = cli.RunSpec(experiment="lasso", generator={"n": 10})
        b = cli.RunSpec(experiment="lasso", generator={"n": 11})
        assert a.identity() != b.identity()


class TestRun:
    def test_lasso_artifacts(self, tmp_path):
        out = tmp_path / "r"
        assert run_cli("run", "lasso", "--n", 40, "--seed", 7,
                       "--max-iters", 60, "--out", out) == 0
        rows = read_trace(out / "trace.csv")
        assert len(rows) == 60
        best = [float(r["best_objective"]) for r in rows]
        assert all(b1 >= b2 for b1, b2 in zip(best, best[1:]))
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["generator"]["n"] == 40
        assert cfg["generator"]["lam"] == 1.0
        assert cfg["solver_config"]["max_iters"] == 60
        assert cfg["solver_config"]["delta"] == 0.99
        assert cfg["identity"]
        sol = read_trace(out / "solution.csv")
        assert len(sol) == 40
        assert set(sol[0]) == {"idx", "data", "solution"}

    def test_solver_all_fans_out(self, tmp_path):
        out = tmp_path / "r"
        assert run_cli("run", "tv1d", "--num-segs", 3, "--len-segs", 12,
                       "--solver", "all", "--max-iters", 40, "--out", out) == 0
        names = sorted(p.name for p in out.glob("trace-*.csv"))
        assert names == ["trace-aoi-ls.csv", "trace-pdhg-ls.csv",
                         "trace-pdhg.csv", "trace-rpdhg.csv"]
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["solver"] == "all"
        for name in names:
            assert len(read_trace(out / name)) == 40

    def test_trace_is_deterministic_modulo_time(self, tmp_path):
        args = ("run", "lasso", "--n", 30, "--seed", 5, "--max-iters", 50,
                "--solver", "rpdhg")
        assert run_cli(*args, "--out", tmp_path / "a") == 0
        assert run_cli(*args, "--out", tmp_path / "b") == 0
        assert (strip_elapsed(tmp_path / "a" / "trace.csv")
                == strip_elapsed(tmp_path / "b" / "trace.csv"))
        ca = json.loads((tmp_path / "a" / "config.json").read_text())
        cb = json.loads((tmp_path / "b" / "config.json").read_text())
        assert ca == cb

    def test_tv2d_artifacts(self, tmp_path):
        img = tmp_path / "tiny.png"
        problems.save_image(str(img), problems.synthetic_image(16, 16))
        out = tmp_path / "r"
        assert run_cli("run", "tv2d", "--image", img, "--max-iters", 25,
                       "--out", out) == 0
        for name in ("input.png", "noisy.png", "recon.png", "diff4x.png",
                     "trace.csv", "config.json"):
            assert (out / name).exists()
        assert json.loads((out / "config.json").read_text())["generator"][
            "image"] == str(img)

    def test_mri_artifacts(self, tmp_path):
        out = tmp_path / "r"
        assert run_cli("run", "mri", "--size", 16, "--nu", "3/4",
                       "--burden", 0.5, "--max-iters", 30, "--out", out) == 0
        for name in ("input.png", "zero_fill.png", "recon.png", "diff4x.png",
                     "mask_pf.png", "mask_vd.png", "mask_both.png",
                     "trace.csv", "config.json"):
            assert (out / name).exists()
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["generator"]["nu"] == 0.75

    def test_untuned_rpdhg_matches_tuned_fixed_step(self, tmp_path):
        # tune the fixed-step baseline by a small grid search over tau, then
        # expect the search solver at defaults to land within 5% of it
        assert run_cli("run", "mri", "--size", 32, "--solver", "rpdhg",
                       "--max-iters", 300, "--out", tmp_path / "ls") == 0
        best = np.inf
        for i, tau in enumerate(np.logspace(-1, 1, 3)):
            out = tmp_path / f"fx{i}"
            assert run_cli("run", "mri", "--size", 32, "--solver", "pdhg",
                           "--tau", tau, "--max-iters", 300, "--out", out) == 0
            rows = read_trace(out / "trace.csv")
            best = min(best, float(rows[-1]["best_objective"]))
        rows = read_trace(tmp_path / "ls" / "trace.csv")
        achieved = float(rows[-1]["best_objective"])
        assert achieved <= best * 1.05

    def test_failure_cleans_partial_outputs(self, tmp_path, monkeypatch):
        def boom(path, img):
            raise OSError("disk is full")

        monkeypatch.setattr(cli, "_write_gray", boom)
        img = tmp_path / "tiny.png"
        problems.save_image(str(img), problems.synthetic_image(16, 16))
        out = tmp_path / "r"
        assert run_cli("run", "tv2d", "--image", img, "--max-iters", 5,
                       "--out", out) == 4
        assert list(out.iterdir()) == []


class TestExitCodes:
    def test_parameter_error_is_2(self, tmp_path):
        assert run_cli("run", "lasso", "--n", 40, "--tau0", -1,
                       "--out", tmp_path) == 2

    def test_generator_error_is_2(self, tmp_path):
        assert run_cli("run", "mri", "--size", 16, "--nu", "1/4",
                       "--out", tmp_path) == 2

    def test_line_search_failure_is_3(self, tmp_path):
        out = tmp_path / "r"
        assert run_cli("run", "lasso", "--n", 30, "--solver", "pdhg-ls",
                       "--tau0", 1e12, "--max-inner-backtracks", 1,
                       "--out", out) == 3
        assert not (out / "trace.csv").exists()

    def test_io_error_is_4(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run_cli("run", "lasso", "--n", 10, "--out", blocker) == 4

    def test_argparse_rejects_unknown_flag(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("run", "lasso", "--bandwidth", 3, "--out", tmp_path)
        assert exc.value.code == 2


class TestCompare:
    @pytest.fixture()
    def lasso_run(self, tmp_path):
        out = tmp_path / "r"
        run_cli("run", "lasso", "--n", 25, "--max-iters", 40, "--out", out)
        return out

    def test_single_trace_single_row(self, lasso_run, capsys):
        assert run_cli("compare", lasso_run / "trace.csv") == 0
        lines = [ln for ln in capsys.readouterr().out.splitlines()
                 if ln and not ln.startswith(("experiment", "solver", "*"))]
        assert len(lines) == 1
        assert lines[0].split()[0] == "rpdhg"

    def test_identical_traces_identical_rows(self, tmp_path, capsys):
        args = ("run", "lasso", "--n", 25, "--max-iters", 40)
        run_cli(*args, "--out", tmp_path / "a")
        run_cli(*args, "--out", tmp_path / "b")
        assert run_cli("compare", tmp_path / "a" / "trace.csv",
                       tmp_path / "b" / "trace.csv") == 0
        rows = [ln.split() for ln in capsys.readouterr().out.splitlines()
                if ln.split() and ln.split()[0] in solvers.SOLVERS]
        assert len(rows) == 2
        # all columns agree except the machine-dependent wall-clock one
        assert rows[0][:3] == rows[1][:3]
        assert rows[0][4:] == rows[1][4:]

    def test_mismatched_identity_rejected(self, tmp_path):
        run_cli("run", "lasso", "--n", 10, "--max-iters", 5,
                "--out", tmp_path / "a")
        run_cli("run", "lasso", "--n", 11, "--max-iters", 5,
                "--out", tmp_path / "b")
        with pytest.raises(ComparisonError, match="different experiment"):
            cli.compare([str(tmp_path / "a" / "trace.csv"),
                         str(tmp_path / "b" / "trace.csv")])

    def test_missing_config_rejected(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text(",".join(solvers.CSV_COLUMNS) + "\n")
        with pytest.raises(ComparisonError, match="config.json"):
            cli.compare([str(path)])

    def test_search_solver_reaches_threshold_no_later(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert run_cli("run", "tv1d", "--solver", "all", "--max-iters", 300,
                       "--seed", 2, "--out", out) == 0
        assert run_cli("compare", *sorted(out.glob("trace-*.csv"))) == 0
        iters = {}
        for line in capsys.readouterr().out.splitlines():
            parts = line.split()
            if parts and parts[0] in solvers.SOLVERS:
                iters[parts[0]] = int(parts[1])
        assert iters["rpdhg"] <= iters["pdhg"]


class TestDescribe:
    def test_prints_all_defaults(self, capsys):
        assert run_cli("describe") == 0
        info = json.loads(capsys.readouterr().out)
        assert info["solvers"] == ["pdhg", "pdhg-ls", "aoi-ls", "rpdhg", "all"]
        assert info["solver_config"]["max_iters"] == 1000
        assert info["experiments"]["mri"]["nu"] == 9 / 16
        assert set(info["experiments"]) == set(cli.EXPERIMENTS)

    def test_filters_to_one_experiment(self, capsys):
        assert run_cli("describe", "tv2d") == 0
        info = json.loads(capsys.readouterr().out)
        assert list(info["experiments"]) == ["tv2d"]

    def test_unknown_experiment_is_2(self):
        assert run_cli("describe", "ridge") == 2
