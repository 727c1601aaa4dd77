"""
单元测试：模拟研究模块

测试配置预设、抽样的前提条件重抽、相关性检验以及小规模模拟研究的结果结构
"""

from dataclasses import asdict

import numpy as np
import pandas as pd
import pytest
from scipy import special

from src.simulation import (
    PRESETS,
    CellSetting,
    MarginSetting,
    RegressionTruth,
    SimConfig,
    ReplicateTask,
    sample_pair,
    sample_pair_regression,
    covariate_spec,
    correlation_tests,
    run_replicate,
    run_study,
)
from src.zib_margin import ZibParams
from config import (
    ValidationError,
    GuardExhaustedError,
    NonpositiveCurvatureError,
    MIN_NONZERO,
    MIN_CO_NONZERO,
)


def tiny_config(**overrides):
    """一个设定、两个 theta 的小配置"""
    base = dict(
        n=30,
        reps=2,
        theta_grid=[0.0, 3.0],
        margin_settings=[CellSetting(
            label="low",
            margin_i=MarginSetting(p=0.1, mu=2 / 7, phi=7.0),
            margin_j=MarginSetting(p=0.25, mu=5 / 7, phi=7.0),
        )],
        seed=99,
    )
    base.update(overrides)
    return SimConfig(**base)


class TestSimConfig:
    """测试模拟配置"""

    @pytest.mark.parametrize("name, n_cells", [
        ("paper-grid", 72),
        ("paper-grid-regression", 18),
        ("paper-grid-n250", 12),
    ])
    def test_preset_sizes(self, name, n_cells):
        config = SimConfig.preset(name)
        assert config.name == name
        assert len(config.cells()) == n_cells

    def test_presets_listed(self):
        assert set(PRESETS) == {"paper-grid", "paper-grid-regression", "paper-grid-n250"}

    def test_n250_preset(self):
        config = SimConfig.preset("paper-grid-n250")
        assert config.n == 250
        assert config.theta_grid == [0.0]

    def test_regression_preset_mode(self):
        config = SimConfig.preset("paper-grid-regression")
        assert config.covariate_mode == "one_normal_on_p"
        assert [s.label for s in config.regression_settings] == ["low-low", "low-high", "high-high"]

    def test_theta_outer_loop(self):
        cells = SimConfig.preset("paper-grid").cells()
        assert [c[0] for c in cells] == list(range(72))
        assert {c[1] for c in cells[:12]} == {-2.5}
        assert {c[1] for c in cells[12:24]} == {-1.0}
        assert cells[0][2] == cells[12][2]

    def test_overrides(self):
        config = SimConfig.preset("paper-grid", reps=3, seed=5, n=None)
        assert config.reps == 3
        assert config.seed == 5
        assert config.n == 50

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            SimConfig.preset("grid")

    @pytest.mark.parametrize("overrides", [{"reps": 0}, {"n": 5}, {"alpha": 1.5}])
    def test_invalid_override(self, overrides):
        with pytest.raises(ValidationError):
            SimConfig.preset("paper-grid", **overrides)

    def test_theta_out_of_bounds(self):
        with pytest.raises(ValueError):
            tiny_config(theta_grid=[0.0, 40.0])

    def test_missing_settings(self):
        with pytest.raises(ValueError):
            SimConfig(theta_grid=[0.0])

    def test_unknown_setting_label(self):
        with pytest.raises(ValidationError):
            tiny_config().setting("missing")

    def test_echo(self):
        record = tiny_config().echo()
        assert record["schema_version"] == "1.0"
        assert record["theta_grid"] == [0.0, 3.0]
        assert record["margin_settings"][0]["label"] == "low"


class TestSampling:
    """测试抽样"""

    def test_guard_satisfied(self, rng, high_zero_margins):
        gi, gj = high_zero_margins
        for _ in range(20):
            data, redraws = sample_pair(20, gi, gj, 1.5, rng)
            assert data.n == 20
            assert data.n_nonzero_i >= MIN_NONZERO
            assert data.n_nonzero_j >= MIN_NONZERO
            assert data.n_co_nonzero >= MIN_CO_NONZERO
            assert redraws >= 0

    def test_values_in_unit_interval(self, rng, low_zero_margins):
        gi, gj = low_zero_margins
        data, _ = sample_pair(200, gi, gj, -2.5, rng)
        assert np.all((data.x_i >= 0) & (data.x_i < 1))
        assert np.all((data.x_j >= 0) & (data.x_j < 1))

    def test_zero_fraction(self, low_zero_margins):
        gi, gj = low_zero_margins
        data, _ = sample_pair(20_000, gi, gj, 3.0, np.random.default_rng(3))
        assert np.mean(data.x_i == 0) == pytest.approx(0.10, abs=0.01)
        assert np.mean(data.x_j == 0) == pytest.approx(0.25, abs=0.01)

    def test_guard_exhausted(self, rng):
        g = ZibParams(p=0.99, mu=0.5, phi=2.0)
        with pytest.raises(GuardExhaustedError):
            sample_pair(10, g, g, 0.0, rng, max_redraws=2)

    def test_regression_sampling(self, rng):
        truth = RegressionTruth(label="t", rho_i=(-0.5, 0.7), rho_j=(-0.3, 0.4))
        data, covariate, _ = sample_pair_regression(60, truth, 1.0, rng)
        assert data.n == 60
        assert covariate.shape == (60,)

    def test_regression_truth_params(self):
        truth = RegressionTruth(label="t", rho_i=(0.5, 0.7), rho_j=(0.8, 0.4))
        q = np.array([-1.0, 0.0, 2.0])
        gi, gj = truth.params(q)
        np.testing.assert_allclose(gi.p, special.expit(0.5 + 0.7 * q))
        np.testing.assert_allclose(gj.p, special.expit(0.8 + 0.4 * q))
        assert gi.mu == pytest.approx(special.expit(-0.7))
        assert gj.phi == pytest.approx(np.exp(1.5))

    def test_covariate_spec(self):
        spec = covariate_spec(np.array([0.3, -1.2, 0.8, 0.1]))
        assert spec.n == 4
        assert spec.q_design.shape == (4, 2)
        assert spec.w_design.shape == (4, 1)
        assert spec.q_names == ("intercept", "q")
        assert not spec.is_intercept_only


class TestCorrelationTests:
    """测试相关性检验"""

    def test_independent(self, rng):
        result = correlation_tests(rng.random(50), rng.random(50))
        for p in (result.pearson, result.spearman, result.kendall):
            assert 0 <= p <= 1
        assert not result.degenerate

    def test_strong_dependence(self, rng):
        x = rng.random(50)
        result = correlation_tests(x, x + 0.01 * rng.random(50))
        assert result.rejections(0.05) == {"pearson": True, "spearman": True, "kendall": True}
        assert result.spearman_stat > 0.9

    def test_constant_input(self):
        result = correlation_tests(np.zeros(10), np.linspace(0, 0.5, 10))
        assert result.degenerate
        assert (result.pearson, result.spearman, result.kendall) == (1.0, 1.0, 1.0)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            correlation_tests(np.arange(4.0), np.arange(4.0))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            correlation_tests(np.arange(6.0), np.arange(5.0))


class TestReplicate:
    """测试单个重复"""

    def test_deterministic(self):
        config = tiny_config(n=40)
        task = ReplicateTask(config=config, cell=1, theta=3.0, label="low", rep=0)
        a = pd.DataFrame([asdict(run_replicate(task))])
        b = pd.DataFrame([asdict(run_replicate(task))])
        pd.testing.assert_frame_equal(a, b)

    def test_rep_changes_data(self):
        config = tiny_config(n=40)
        a = run_replicate(ReplicateTask(config=config, cell=1, theta=3.0, label="low", rep=0))
        b = run_replicate(ReplicateTask(config=config, cell=1, theta=3.0, label="low", rep=1))
        assert a.p_pearson != b.p_pearson

    def test_outcome_fields(self):
        config = tiny_config(n=60)
        outcome = run_replicate(ReplicateTask(config=config, cell=1, theta=3.0, label="low", rep=0))
        assert outcome.error == ""
        assert np.isfinite(outcome.theta_hat)
        assert outcome.theta_var > 0
        assert 0 <= outcome.p_lrt <= 1
        assert -1 <= outcome.spearman_copula <= 1

    def test_estimate_kept_when_test_fails(self, monkeypatch):
        def curvature_failure(data, fit, theta0=0.0):
            raise NonpositiveCurvatureError("曲率非负")

        monkeypatch.setattr("src.simulation.rescaled_lrt", curvature_failure)
        config = tiny_config(n=60)
        outcome = run_replicate(ReplicateTask(config=config, cell=1, theta=3.0, label="low", rep=0))
        assert outcome.error == ""
        assert outcome.lrt_error == "NonpositiveCurvatureError"
        assert np.isfinite(outcome.theta_hat)
        assert outcome.theta_var > 0
        assert np.isnan(outcome.p_lrt)
        assert np.isnan(outcome.omega)

    def test_guard_exhausted_recorded(self):
        config = tiny_config(margin_settings=[CellSetting(
            label="low",
            margin_i=MarginSetting(p=0.999, mu=0.5, phi=2.0),
            margin_j=MarginSetting(p=0.999, mu=0.5, phi=2.0),
        )], n=10)
        outcome = run_replicate(ReplicateTask(config=config, cell=0, theta=0.0, label="low", rep=0))
        assert outcome.guard_exhausted
        assert np.isnan(outcome.theta_hat)


class TestRunStudy:
    """测试小规模模拟研究"""

    def test_structure(self):
        config = tiny_config()
        result = run_study(config, "both")
        assert len(result.cells) == 2
        assert len(result.replicates) == 4
        assert list(result.cells["theta"]) == [0.0, 3.0]
        assert (result.cells["reps"] == 2).all()

        frame = result.to_frame()
        assert list(frame.columns) == ["cell", "label", "theta", "estimator", "metric", "value"]
        assert len(frame) == 2 * 16
        assert {"two_stage", "jackknife", "lrt", "pearson", "guard"} <= set(frame["estimator"])

        summary = result.to_summary()
        assert summary["n_cells"] == 2
        assert summary["infeasible_cells"] == []
        assert summary["config"]["seed"] == 99

    def test_failed_tests_do_not_drop_estimates(self, monkeypatch):
        def curvature_failure(data, fit, theta0=0.0):
            raise NonpositiveCurvatureError("曲率非负")

        monkeypatch.setattr("src.simulation.rescaled_lrt", curvature_failure)
        result = run_study(tiny_config(theta_grid=[3.0], reps=3, n=60), "both")
        cell = result.cell(3.0, "low")
        assert cell["n_valid"] == 3
        assert cell["n_lrt_failed"] == 3
        assert np.isfinite(cell["theta_mean"])
        assert np.isfinite(cell["jackknife_var_mean"])
        assert np.isnan(cell["reject_lrt"])
        assert 0 <= cell["reject_pearson"] <= 1

    def test_bias_only_metrics(self):
        result = run_study(tiny_config(theta_grid=[1.5]), "bias")
        frame = result.to_frame()
        assert "lrt" not in set(frame["estimator"])
        assert len(frame) == 11

    def test_cell_lookup(self):
        result = run_study(tiny_config(theta_grid=[1.5]), "power")
        cell = result.cell(1.5, "low")
        assert cell["kendall_tau_true"] > 0
        with pytest.raises(ValidationError):
            result.cell(0.0, "low")

    def test_unknown_study(self):
        with pytest.raises(ValidationError):
            run_study(tiny_config(), "variance")
