import json
import os
import subprocess
import sys

import numpy as np
import pytest

SCALAR_NOISELESS = """
[system]
kind = lds
a = 0.5
c = 1.0
noise = none
x0_kind = fixed
x0 = 1.0

[harness]
horizon = 20

[run]
seed = 3
"""

SCALAR_RISK = """
[system]
kind = lds
a = 0.9
c = 1.0
process_stdev = 0.1
obs_stdev = 0.1
x0_kind = ball_grid
x0_radius = 1.0
x0_points = 2

[predictor]
kind = spectral
window = 30
m = 6

[harness]
t_grid = 25,50,100
n_traj = 20
epsilons = 0.05

[run]
seed = 11
"""


def run_cli(args, cwd, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "dynolearn", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env=env,
        timeout=300,
    )


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "noiseless.cfg").write_text(SCALAR_NOISELESS)
    (tmp_path / "risk.cfg").write_text(SCALAR_RISK)
    return tmp_path


class TestSimulate:
    def test_noiseless_decay_csv(self, workdir):
        res = run_cli(["simulate", "-c", "noiseless.cfg", "--out", "sim"], workdir)
        assert res.returncode == 0, res.stderr
        assert "rows=20 seed=3" in res.stdout
        data = np.loadtxt(workdir / "sim" / "trajectory.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 1], 0.5 ** np.arange(20))

    def test_repeat_run_is_byte_identical(self, workdir):
        run_cli(["simulate", "-c", "noiseless.cfg", "--out", "s1"], workdir)
        run_cli(["simulate", "-c", "noiseless.cfg", "--out", "s2"], workdir)
        a = (workdir / "s1" / "trajectory.csv").read_bytes()
        b = (workdir / "s2" / "trajectory.csv").read_bytes()
        assert a == b

    def test_manifest_written(self, workdir):
        run_cli(["simulate", "-c", "noiseless.cfg", "--out", "sim"], workdir)
        manifest = (workdir / "sim" / "manifest.txt").read_text()
        assert "subcommand = simulate" in manifest
        assert "seed = 3" in manifest
        assert "config_digest = " in manifest
        resolved = (workdir / "sim" / "resolved.cfg").read_text()
        assert "[system]" in resolved and "a = 0.5" in resolved

    def test_bad_config_exits_one_with_json_error(self, workdir):
        res = run_cli(["simulate", "-c", "missing.cfg"], workdir)
        assert res.returncode == 1
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "config"

    def test_lorenz_blowup_exits_four(self, workdir):
        (workdir / "blow.cfg").write_text(
            "[system]\nkind = lorenz\ndt = 0.05\nx0_kind = fixed\nx0 = 1e8,1e8,1e8\n"
            "[harness]\nhorizon = 100\n"
        )
        res = run_cli(["simulate", "-c", "blow.cfg", "--out", "b"], workdir)
        assert res.returncode == 4
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "numerical_failure"


class TestFilters:
    def test_window_two_spectrum(self, tmp_path):
        res = run_cli(["filters", "-T", "2", "-m", "2", "--out", "f"], tmp_path)
        assert res.returncode == 0
        lines = (tmp_path / "f" / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "i,mu_i"
        mus = [float(line.split(",")[1]) for line in lines[1:]]
        assert mus[0] == pytest.approx((4 + np.sqrt(13)) / 6, rel=1e-12)
        assert mus[1] == pytest.approx((4 - np.sqrt(13)) / 6, rel=1e-12)

    def test_spectrum_strictly_decreasing(self, tmp_path):
        res = run_cli(["filters", "-T", "256", "-m", "19", "--out", "f"], tmp_path)
        assert res.returncode == 0
        lines = (tmp_path / "f" / "spectrum.csv").read_text().splitlines()[1:]
        mus = np.array([float(line.split(",")[1]) for line in lines])
        assert (np.diff(mus) < 0).all()
        filters = np.loadtxt(tmp_path / "f" / "filters.csv", delimiter=",", skiprows=1)
        assert filters.shape == (256, 20)  # index column + 19 filters

    def test_above_cap_exits_two_naming_cap(self, tmp_path):
        res = run_cli(["filters", "-T", "64", "-m", "40", "--out", "f"], tmp_path)
        assert res.returncode == 2
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "contract_violation"
        assert "cap 15" in err["message"]


class TestRiskPipeline:
    def test_risk_with_oracle_as_algorithm_is_zero(self, workdir):
        res = run_cli(
            ["risk", "-c", "risk.cfg", "--out", "r", "predictor.kind=kalman"], workdir
        )
        assert res.returncode == 0, res.stderr
        data = np.loadtxt(workdir / "r" / "risk.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 1], np.zeros(3))

    def test_risk_csv_header_and_reproducibility(self, workdir):
        r1 = run_cli(["risk", "-c", "risk.cfg", "--out", "r1"], workdir)
        r2 = run_cli(["risk", "-c", "risk.cfg", "--out", "r2"], workdir)
        assert r1.returncode == 0 and r2.returncode == 0
        a = (workdir / "r1" / "risk.csv").read_bytes()
        b = (workdir / "r2" / "risk.csv").read_bytes()
        assert a == b
        header = a.decode().splitlines()[0]
        assert header == "t,excess_mean,excess_ci,raw_alg,raw_oracle"

    def test_kalman_oracle_on_lorenz_exits_three(self, workdir):
        (workdir / "lor.cfg").write_text(
            "[system]\nkind = lorenz\nobs_stdev = 0.1\n"
            "[harness]\nt_grid = 10,20\nn_traj = 4\noracle = kalman\n"
        )
        res = run_cli(["risk", "-c", "lor.cfg", "--out", "r"], workdir)
        assert res.returncode == 3
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "incompatible_pairing"

    def test_lorenz_raw_risk_mode_with_explicit_zero_oracle(self, workdir):
        (workdir / "lorzero.cfg").write_text(
            "[system]\nkind = lorenz\nobs_stdev = 0.1\n"
            "[predictor]\nkind = last_value\n"
            "[harness]\nt_grid = 10,20\nn_traj = 4\noracle = zero\n"
        )
        res = run_cli(["risk", "-c", "lorzero.cfg", "--out", "rz"], workdir)
        assert res.returncode == 0, res.stderr
        assert "oracle=zero" in res.stdout
        data = np.loadtxt(workdir / "rz" / "risk.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 1], data[:, 3])  # excess == raw risk

    def test_burnin_on_fixture_curve(self, workdir):
        fixture = workdir / "curve.csv"
        fixture.write_text(
            "t,excess_mean,excess_ci,raw_alg,raw_oracle\n"
            "10,0.5,0,0.5,0\n50,0.2,0,0.2,0\n100,0.08,0,0.08,0\n"
            "500,0.04,0,0.04,0\n1000,0.03,0,0.03,0\n"
        )
        res = run_cli(
            ["burnin", "--curve", "curve.csv", "--out", "bi", "harness.epsilons=0.05"],
            workdir,
        )
        assert res.returncode == 0, res.stderr
        assert "t_star=500" in res.stdout
        lines = (workdir / "bi" / "burnin.csv").read_text().splitlines()
        assert lines[0] == "epsilon,t_star,uniform_checked_to"
        assert lines[1] == "0.050000000000000003,500,1000"

    def test_burnin_inf_sentinel(self, workdir):
        fixture = workdir / "curve.csv"
        fixture.write_text(
            "t,excess_mean,excess_ci,raw_alg,raw_oracle\n10,0.5,0,0.5,0\n20,0.6,0,0.6,0\n"
        )
        res = run_cli(
            ["burnin", "--curve", "curve.csv", "--out", "bi", "harness.epsilons=0.05"],
            workdir,
        )
        assert res.returncode == 0
        assert "t_star=inf" in res.stdout
        assert ",inf," in (workdir / "bi" / "burnin.csv").read_text()

    def test_mstar_runs(self, workdir):
        res = run_cli(
            [
                "mstar",
                "-c",
                "risk.cfg",
                "--out",
                "ms",
                "harness.m_range=1,2,3",
                "harness.t_eval=100",
                "harness.epsilon=0.2",
            ],
            workdir,
        )
        assert res.returncode == 0, res.stderr
        table = (workdir / "ms" / "mstar_table.csv").read_text().splitlines()
        assert table[0] == "m,excess,ci,achieved"
        assert len(table) == 4
        summary = (workdir / "ms" / "mstar.csv").read_text().splitlines()
        assert summary[0] == "epsilon,t_eval,m_star"

    def test_agnostic_runs(self, workdir):
        res = run_cli(
            ["agnostic", "-c", "risk.cfg", "--out", "ag", "harness.baselines=zero,ar1"],
            workdir,
        )
        assert res.returncode == 0, res.stderr
        header = (workdir / "ag" / "agnostic.csv").read_text().splitlines()[0]
        assert header == "t,excess_mean,excess_ci,raw_alg,raw_oracle"

    def test_biasvar_runs(self, workdir):
        res = run_cli(
            ["biasvar", "-c", "risk.cfg", "--out", "bv", "harness.ref_multiplier=3"],
            workdir,
        )
        assert res.returncode == 0, res.stderr
        header = (workdir / "bv" / "biasvar.csv").read_text().splitlines()[0]
        assert header == "t,bias,bias_ci,variance,variance_ci"

    def test_threads_env_fallback(self, workdir):
        res = run_cli(
            ["risk", "-c", "risk.cfg", "--out", "rt"], workdir, env_extra={"DYNOLEARN_THREADS": "2"}
        )
        assert res.returncode == 0, res.stderr
        a = (workdir / "rt" / "risk.csv").read_bytes()
        b = (workdir / "r1" / "risk.csv").read_bytes() if (workdir / "r1").exists() else None
        if b is not None:
            assert a == b

    def test_usage_error_exits_one(self, tmp_path):
        res = run_cli(["frobnicate"], tmp_path)
        assert res.returncode == 1


class TestPerformanceBudgets:
    def test_long_simulation_under_budget(self, tmp_path):
        # horizon 1e5 at hidden dimension 20
        (tmp_path / "big.cfg").write_text(
            "[system]\na_random_psd = true\nd = 20\na_seed = 1\nc_random = true\n"
            "process_stdev = 0.1\nobs_stdev = 0.1\nx0_kind = fixed\n"
            "x0 = 0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n"
            "[harness]\nhorizon = 100000\n"
        )
        import time

        start = time.monotonic()
        res = run_cli(["simulate", "-c", "big.cfg", "--out", "big"], tmp_path)
        elapsed = time.monotonic() - start
        assert res.returncode == 0, res.stderr
        assert "rows=100000" in res.stdout
        assert elapsed < 5.0, f"simulate took {elapsed:.1f}s"

    def test_full_scalar_pipeline_under_two_minutes(self, tmp_path):
        import shutil
        import time
        from pathlib import Path

        cfg = Path(__file__).resolve().parent.parent / "configs" / "scalar_lds.cfg"
        shutil.copy(cfg, tmp_path / "scalar.cfg")
        start = time.monotonic()
        for step in (
            ["simulate", "-c", "scalar.cfg", "--out", "p"],
            ["risk", "-c", "scalar.cfg", "--out", "p"],
            ["burnin", "-c", "scalar.cfg", "--out", "p", "--curve", "p/risk.csv"],
        ):
            res = run_cli(step, tmp_path)
            assert res.returncode == 0, res.stderr
        elapsed = time.monotonic() - start
        assert (tmp_path / "p" / "burnin.csv").exists()
        assert elapsed < 120.0, f"pipeline took {elapsed:.1f}s"
