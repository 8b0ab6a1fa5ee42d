import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mixthresh import cli
from mixthresh.config import bundled_configs
from mixthresh.solver import SolveTrace

COMMAND_OF = {
    "shrink-soft": "shrink-table",
    "shrink-ridge": "shrink-table",
    "shrink-mixed": "shrink-table",
    "deconv1d": "solve",
    "zero-data": "solve",
    "decompose-spikes-smooth": "decompose",
    "decompose-pure-spikes": "decompose",
    "regpath-scalar": "regpath",
    "regpath-diag4": "regpath",
}


def run(command, config, out, *extra):
    return cli.main([command, "--config", str(config), "--out", str(out), "--quiet", *extra])


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def read_summary(out):
    return json.loads((out / "summary.json").read_text())


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    """Run every bundled config once; returns {name: (exit_code, out_dir)}."""
    results = {}
    for name, command in COMMAND_OF.items():
        out = tmp_path_factory.mktemp(name)
        results[name] = (run(command, name, out), out)
    return results


def test_bundled_list_is_covered():
    assert sorted(bundled_configs()) == sorted(COMMAND_OF)


def test_all_bundled_configs_succeed(outputs):
    assert {name: code for name, (code, _) in outputs.items()} == dict.fromkeys(COMMAND_OF, 0)


class TestShrinkTable:
    def test_soft_dead_zone(self, outputs):
        header, t = read_table(outputs["shrink-soft"][1] / "shrink_table.csv")
        assert header == ["b", "S"]
        b, S = t.T
        assert np.all(S[np.abs(b) <= 1.0] == 0.0)
        out = np.abs(b) > 1.0
        assert np.allclose(S[out], b[out] - np.sign(b[out]), atol=1e-12)

    def test_ridge_halves(self, outputs):
        b, S = read_table(outputs["shrink-ridge"][1] / "shrink_table.csv")[1].T
        assert np.allclose(S, b / 2, atol=1e-12)

    def test_mixed_slope_and_zone(self, outputs):
        b, S = read_table(outputs["shrink-mixed"][1] / "shrink_table.csv")[1].T
        assert np.all(S[np.abs(b) <= 0.5] == 0.0)
        out = np.abs(b) > 0.5
        assert np.allclose(S[out], (b[out] - 0.5 * np.sign(b[out])) / 3, atol=1e-12)


class TestSolve:
    def test_deconv_summary(self, outputs):
        out = outputs["deconv1d"][1]
        s = read_summary(out)
        assert s["monotone"] and s["stop_reason"] == "step_tol"
        assert s["fixed_point_residual"] <= s["step_tol"]
        header, trace = read_table(out / "trace.csv")
        assert header == ["iter", "objective", "surrogate", "step_norm", "iterate_norm"]
        assert np.all(np.diff(trace[:, 1]) <= 1e-9)
        assert (out / "coefficients.csv").exists() and (out / "reconstruction.csv").exists()
        assert s["reconstruction_error"] < 1.0

    def test_zero_data(self, outputs):
        out = outputs["zero-data"][1]
        s = read_summary(out)
        assert s["iterations"] == 1
        _, coef = read_table(out / "coefficients.csv")
        assert np.all(coef[:, 1] == 0.0)

    def test_monotonicity_failure_exit_code(self, tmp_path, monkeypatch):
        def bad_solve(f0, prob, stop=None, callback=None):
            trace = SolveTrace(objective=[1.0, 2.0], final_objective=2.0, iterations=1)
            return np.zeros(prob.dim), trace

        monkeypatch.setattr(cli, "solve", bad_solve)
        assert run("solve", "zero-data", tmp_path) == cli.EXIT_NUMERIC


class TestDecompose:
    def test_spikes_smooth_residual(self, outputs):
        s = read_summary(outputs["decompose-spikes-smooth"][1])
        assert s["monotone"]
        assert s["residual_norm"] <= 1.5 * s["noise_norm"]

    def test_pure_spikes_heavy_v(self, outputs):
        out = outputs["decompose-pure-spikes"][1]
        s = read_summary(out)
        assert s["v_norm"] <= 0.1 * s["u_norm"]
        u = read_table(out / "u.csv")[1][:, 1]
        v = read_table(out / "v.csv")[1][:, 1]
        total = read_table(out / "sum.csv")[1][:, 1]
        assert np.allclose(u + v, total, atol=0)

    def test_zero_data(self, tmp_path):
        cfg = tmp_path / "zero.yaml"
        cfg.write_text(
            "experiment: decompose\n"
            "operator: {kind: conv1d, kernel: [0.5, 0.2], n: 8}\n"
            "data: [0, 0, 0, 0, 0, 0, 0, 0]\n"
            "penalty_u: {groups: [{indices: all, weight: 0.1, exponent: 1.0}]}\n"
            "penalty_v: {groups: [{indices: all, weight: 0.1, exponent: 2.0}]}\n"
        )
        out = tmp_path / "out"
        assert run("decompose", cfg, out) == 0
        for name in ("u.csv", "v.csv"):
            assert np.all(read_table(out / name)[1][:, 1] == 0.0)


class TestRegpath:
    @pytest.mark.parametrize("name", ["regpath-scalar", "regpath-diag4"])
    def test_verdicts(self, outputs, name):
        out = outputs[name][1]
        s = read_summary(out)
        assert s["trend_ok"] and s["tail_nonincreasing"]
        assert s["final_error"] <= 1e-2 and s["final_error"] <= s["first_error"]
        header, _ = read_table(out / "regpath.csv")
        assert header == ["level", "eps", "alpha", "noise_norm", "error", "iters"]

    def test_seed_change_keeps_trend(self, outputs, tmp_path):
        out = tmp_path / "seed3"
        assert run("regpath", "regpath-diag4", out, "--seed", "3") == 0
        assert read_summary(out)["trend_ok"]
        _, a = read_table(outputs["regpath-diag4"][1] / "regpath.csv")
        _, b = read_table(out / "regpath.csv")
        # noise norms are fixed at 0.9 eps; the draws themselves show up in the errors
        assert np.allclose(a[:, 3], b[:, 3], rtol=1e-12, atol=0)
        assert not np.array_equal(a[:, 4], b[:, 4])

    def test_exponent_two_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text(
            "experiment: regpath\n"
            "operator: {kind: diag, diagonal: [0.5]}\n"
            "penalty: {groups: [{indices: all, weight: 1.0, exponent: 1.0}]}\n"
            "regpath: {f0: [2.0], exponent: 2.0}\n"
        )
        assert run("regpath", cfg, tmp_path / "o") == cli.EXIT_CONFIG
        err = capsys.readouterr().err
        assert "regpath.exponent" in err and "eps^2/alpha" in err


BAD_CONFIGS = [
    ("operator: {kind: diag, diagonal: [0.5]}\ndata: [1.0]\n"
     "penalty: {groups: [{indices: all, weight: -1.0, exponent: 1.0}]}\n", "weight"),
    ("operator: {kind: diag, diagonal: [0.5]}\ndata: [1.0]\n"
     "penalty: {groups: [{indices: all, weight: 1.0, exponent: 3.0}]}\n", "exponent"),
    ("operator: {kind: spiral}\ndata: [1.0]\n"
     "penalty: {groups: [{indices: all, weight: 1.0, exponent: 1.0}]}\n", "operator.kind"),
    ("operator: {kind: diag, diagonal: [0.5, 0.5]}\ndata: [1.0]\n"
     "penalty: {groups: [{indices: all, weight: 1.0, exponent: 1.0}]}\n", "data"),
    ("operator: {kind: diag, diagonal: [0.5, 0.5]}\ndata: [1.0, 1.0]\n"
     "penalty: {groups: [{indices: '0:1', weight: 1.0, exponent: 1.0}]}\n", "penalty"),
    ("operator: [unclosed\n", "line"),
]


@pytest.mark.parametrize("text,needle", BAD_CONFIGS)
def test_bad_configs_name_the_field(tmp_path, capsys, text, needle):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    assert run("solve", cfg, tmp_path / "o") == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config error" in err and needle in err
    assert not (tmp_path / "o" / "summary.json").exists()


def test_experiment_mismatch(tmp_path, capsys):
    assert run("solve", "regpath-scalar", tmp_path) == cli.EXIT_CONFIG
    assert "experiment" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run("solve", tmp_path / "nope.yaml", tmp_path) == cli.EXIT_CONFIG


@pytest.mark.parametrize("name", ["shrink-mixed", "deconv1d", "decompose-pure-spikes", "regpath-diag4"])
def test_rerun_byte_identical(outputs, tmp_path, name):
    out = tmp_path / "again"
    assert run(COMMAND_OF[name], name, out) == 0
    first = outputs[name][1]
    files = sorted(p.name for p in first.iterdir())
    assert files == sorted(p.name for p in out.iterdir())
    for f in files:
        assert (first / f).read_bytes() == (out / f).read_bytes(), f


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mixthresh", "list"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "deconv1d" in res.stdout.split()
