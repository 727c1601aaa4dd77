"""
集成测试：缩小规模的模拟研究

检查两阶段估计的偏差、检验的第一类错误、功效、刀切法方差的保守性以及独立时 omega 的取值。
每个测试运行数百个重复，均标记为 slow。
"""

import numpy as np
import pytest

from src.simulation import CellSetting, MarginSetting, RegressionTruth, SimConfig, run_study


THREADS = 4


def low_zero_setting():
    return CellSetting(
        label="low",
        margin_i=MarginSetting(p=0.10, mu=2 / 7, phi=7.0),
        margin_j=MarginSetting(p=0.25, mu=5 / 7, phi=7.0),
    )


def mid_zero_setting():
    return CellSetting(
        label="mid",
        margin_i=MarginSetting(p=0.40, mu=2 / 7, phi=7.0),
        margin_j=MarginSetting(p=0.50, mu=5 / 7, phi=7.0),
    )


@pytest.mark.integration
@pytest.mark.slow
class TestTwoStageBias:
    """测试两阶段估计的偏差"""

    def test_mean_close_to_truth(self):
        config = SimConfig(n=50, reps=200, theta_grid=[-2.5, 0.0, 1.5, 3.0],
                           margin_settings=[low_zero_setting()], seed=101)
        result = run_study(config, "bias", threads=THREADS)
        for _, cell in result.cells.iterrows():
            theta = cell["theta"]
            assert abs(cell["theta_mean"] - theta) <= 0.2 * (1 + abs(theta))


@pytest.mark.integration
@pytest.mark.slow
class TestTypeOneError:
    """测试独立时的拒绝率"""

    def test_rejection_rate_within_binomial_band(self):
        config = SimConfig(n=50, reps=500, theta_grid=[0.0],
                           margin_settings=[low_zero_setting()], seed=202, alpha=0.05)
        result = run_study(config, "power", threads=THREADS)
        rate = result.cell(0.0, "low")["reject_lrt"]
        assert 0.032 <= rate <= 0.071


@pytest.mark.integration
@pytest.mark.slow
class TestPower:
    """测试协变量设定下的检验功效"""

    def test_lrt_not_dominated_and_monotone(self):
        truth = RegressionTruth(label="low-low", rho_i=(-0.5, 0.7), rho_j=(-0.3, 0.4))
        thetas = [0.5, 1.5, 3.0, -1.0, -2.5]
        config = SimConfig(n=50, reps=200, theta_grid=thetas, regression_settings=[truth],
                           covariate_mode="one_normal_on_p", seed=303, alpha=0.05)
        result = run_study(config, "power", threads=THREADS)

        cells = result.cells.assign(abs_theta=result.cells["theta"].abs()).sort_values("abs_theta")
        for _, cell in cells.iterrows():
            for competitor in ("pearson", "spearman", "kendall"):
                assert cell["reject_lrt"] >= cell[f"reject_{competitor}"] - 0.05

        for test in ("lrt", "pearson", "spearman", "kendall"):
            power = cells[f"reject_{test}"].to_numpy()
            assert np.all(np.diff(power) >= -0.05)


@pytest.mark.integration
@pytest.mark.slow
class TestJackknifeConservative:
    """测试刀切法方差不低于经验方差"""

    def test_majority_of_cells(self):
        config = SimConfig(n=50, reps=100, theta_grid=[-2.5, 0.0, 3.0],
                           margin_settings=[low_zero_setting(), mid_zero_setting()], seed=404)
        result = run_study(config, "bias", threads=THREADS)
        assert len(result.cells) == 6
        conservative = result.cells["jackknife_var_mean"] >= result.cells["empirical_var"]
        assert conservative.sum() >= 4


@pytest.mark.integration
@pytest.mark.slow
class TestOmegaUnderIndependence:
    """测试独立时重标度因子接近1"""

    def test_median_close_to_one(self):
        config = SimConfig(n=250, reps=100, theta_grid=[0.0],
                           margin_settings=[low_zero_setting()], seed=505)
        result = run_study(config, "power", threads=THREADS)
        omega = result.replicates["omega"].to_numpy(dtype=float)
        omega = omega[np.isfinite(omega)]
        assert omega.size >= 90
        assert np.median(np.abs(omega - 1)) <= 0.2
