import numpy as np
import pytest

from dynolearn import (
    BaselinePredictor,
    KalmanPredictor,
    KernelOracle,
    LdsSpec,
    LorenzSpec,
    SpectralPredictor,
    TruthOracle,
)
from dynolearn.config import (
    ExperimentConfig,
    build_baselines,
    build_oracle,
    build_predictor,
    build_system,
    canonical_text,
    geometric_grid,
    parse_config,
    validate_config,
)
from dynolearn.errors import ConfigError

SCALAR_TEXT = """
[system]
kind = lds
a = 0.9
c = 1.0
process_stdev = 0.1
obs_stdev = 0.1
x0_kind = ball_grid
x0_radius = 1.0
x0_points = 8

[predictor]
kind = spectral
window = 100
m = 15

[harness]
horizon = 2000
t_grid = 25,50,100
n_traj = 200
epsilons = 0.05,0.01

[run]
seed = 42
out_dir = out
"""


class TestParsing:
    def test_round_trip_is_lossless(self):
        cfg = parse_config(SCALAR_TEXT)
        text = canonical_text(cfg)
        again = parse_config(text)
        assert again == cfg
        assert canonical_text(again) == text
        assert again.digest() == cfg.digest()

    def test_defaults_fill_missing_sections(self):
        cfg = parse_config("[system]\nkind = lorenz\n")
        assert cfg.system.kind == "lorenz"
        assert cfg.run.seed == 0
        assert cfg.predictor.kind == "spectral"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            parse_config("[mystery]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config("[system]\nwibble = 2\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="system.d"):
            parse_config("[system]\nd = banana\n")

    def test_overrides_apply_after_file(self):
        cfg = parse_config(SCALAR_TEXT, overrides=["harness.n_traj=500", "run.seed=7"])
        assert cfg.harness.n_traj == 500
        assert cfg.run.seed == 7

    def test_bad_override_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(SCALAR_TEXT, overrides=["n_traj=500"])
        with pytest.raises(ConfigError):
            parse_config(SCALAR_TEXT, overrides=["harness.unknown=1"])

    def test_geometric_grid_expansion(self):
        cfg = parse_config("[harness]\nt_grid = geom(25,400,5)\n")
        assert cfg.harness.t_grid == geometric_grid(25, 400, 5)
        assert cfg.harness.t_grid[0] == 25
        assert cfg.harness.t_grid[-1] == 400
        assert all(a < b for a, b in zip(cfg.harness.t_grid, cfg.harness.t_grid[1:]))

    def test_bool_parsing(self):
        cfg = parse_config("[predictor]\nsign_augmented = true\n")
        assert cfg.predictor.sign_augmented is True
        with pytest.raises(ConfigError):
            parse_config("[predictor]\nsign_augmented = maybe\n")

    def test_validate_config(self):
        cfg = parse_config(SCALAR_TEXT)
        validate_config(cfg)
        cfg.harness.n_traj = 1
        with pytest.raises(ConfigError):
            validate_config(cfg)


class TestBuilders:
    def test_scalar_system(self):
        system = build_system(parse_config(SCALAR_TEXT))
        assert isinstance(system, LdsSpec)
        assert system.d == 1
        assert system.noise.stdev_process == 0.1

    def test_diagonal_system(self):
        cfg = parse_config("[system]\na_diag = 0.9,0.5\nc_row = 1.0,1.0\n")
        system = build_system(cfg)
        np.testing.assert_array_equal(system.A, np.diag([0.9, 0.5]))

    def test_random_psd_system_is_deterministic(self):
        text = "[system]\na_random_psd = true\nd = 6\na_seed = 3\nc_random = true\nx0_kind = fixed\nx0 = 0,0,0,0,0,0\n"
        s1 = build_system(parse_config(text))
        s2 = build_system(parse_config(text))
        assert np.array_equal(s1.A, s2.A)
        assert np.array_equal(s1.C, s2.C)
        evals = np.linalg.eigvalsh(s1.A)
        assert evals.min() >= -1e-12 and evals.max() <= 0.95 + 1e-12
        assert np.linalg.norm(s1.C) == pytest.approx(1.0)

    def test_closed_loop_system(self):
        cfg = parse_config(
            "[system]\nkind = closed_loop\na = 1.4\nc = 1.0\nb = 1.0\nk = -0.5\n"
            "symmetric = false\nx0_kind = fixed\nx0 = 1.0\n"
        )
        system = build_system(cfg)
        assert system.B is not None
        assert system.effective_transition()[0, 0] == pytest.approx(0.9)

    def test_lorenz_system(self):
        cfg = parse_config("[system]\nkind = lorenz\nobs_coords = x,z\nobs_stdev = 0.1\n")
        system = build_system(cfg)
        assert isinstance(system, LorenzSpec)
        assert system.p == 2
        assert system.obs_noise == 0.1

    def test_exactly_one_transition_choice(self):
        with pytest.raises(ConfigError, match="exactly one"):
            build_system(parse_config("[system]\na = 0.9\na_diag = 0.9,0.5\nc = 1.0\n"))

    def test_predictor_kinds(self):
        cfg = parse_config(SCALAR_TEXT)
        system = build_system(cfg)
        assert isinstance(build_predictor(cfg, system), SpectralPredictor)
        for kind, cls in (
            ("ar", BaselinePredictor),
            ("last_value", BaselinePredictor),
            ("zero", BaselinePredictor),
            ("kalman", KalmanPredictor),
            ("kernel", KernelOracle),
        ):
            cfg.predictor.kind = kind
            assert isinstance(build_predictor(cfg, system), cls)

    def test_oracle_auto(self):
        cfg = parse_config(SCALAR_TEXT)
        system = build_system(cfg)
        assert isinstance(build_oracle(cfg, system), KalmanPredictor)
        lor = parse_config("[system]\nkind = lorenz\n")
        assert isinstance(build_oracle(lor, build_system(lor)), TruthOracle)

    def test_baseline_tokens(self):
        cfg = parse_config(SCALAR_TEXT)
        system = build_system(cfg)
        baselines = build_baselines(cfg, system)
        assert [b.label for b in baselines] == ["zero", "last_value", "ar1", "ar5"]
        cfg.harness.baselines = ("ar3",)
        assert build_baselines(cfg, system)[0].order == 3
        cfg.harness.baselines = ("median",)
        with pytest.raises(ConfigError):
            build_baselines(cfg, system)

    def test_default_config_builds(self):
        cfg = ExperimentConfig()
        text = canonical_text(cfg)
        assert parse_config(text) == cfg
