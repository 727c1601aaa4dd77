"""
单元测试：零膨胀Beta边际模块

测试参数校验、分布函数、数值截断以及无协变量/带协变量拟合
"""

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, stats
import statsmodels.api as sm

from src.zib_margin import (
    ZibParams,
    ZibRegressionSpec,
    ZibFit,
    zib_pdf,
    zib_logpdf,
    zib_cdf,
    zib_cdf_left,
    zib_quantile,
    zib_loglik,
    clamp_unit_interval,
    fit_zib,
    fit_zib_regression,
)
from config import (
    DomainError,
    ValidationError,
    RankDeficientDesignError,
    TooFewNonzeroError,
    UNIT_CLAMP,
)


def _draw_zib(n, params, rng):
    """按定义抽样：以概率 p 取0，否则取 Beta(mu*phi, (1-mu)*phi)"""
    zero = rng.random(n) < params.p
    beta = rng.beta(params.mu * params.phi, (1 - params.mu) * params.phi, size=n)
    return np.where(zero, 0.0, beta)


class TestZibParams:
    """测试参数校验"""

    def test_valid_scalar(self):
        params = ZibParams(p=0.3, mu=0.4, phi=5.0)
        assert params.is_scalar
        assert params.shape_a == pytest.approx(2.0)
        assert params.shape_b == pytest.approx(3.0)

    def test_zero_p_allowed(self):
        ZibParams(p=0.0, mu=0.5, phi=1.0)

    @pytest.mark.parametrize("p, mu, phi", [
        (1.0, 0.5, 2.0),
        (-0.1, 0.5, 2.0),
        (0.2, 0.0, 2.0),
        (0.2, 1.0, 2.0),
        (0.2, 0.5, 0.0),
        (0.2, 0.5, np.nan),
    ])
    def test_invalid_values(self, p, mu, phi):
        with pytest.raises(ValidationError):
            ZibParams(p=p, mu=mu, phi=phi)

    def test_per_observation_length_mismatch(self):
        with pytest.raises(ValidationError):
            ZibParams(p=np.array([0.1, 0.2]), mu=np.array([0.5, 0.5, 0.5]), phi=2.0)

    def test_take(self):
        params = ZibParams(p=np.array([0.1, 0.2, 0.3]), mu=0.5, phi=np.array([1.0, 2.0, 3.0]))
        sub = params.take([0, 2])
        np.testing.assert_allclose(sub.p, [0.1, 0.3])
        np.testing.assert_allclose(sub.phi, [1.0, 3.0])


class TestRegressionSpec:
    """测试回归设定"""

    def test_intercept_only(self):
        spec = ZibRegressionSpec.intercept_only(5)
        assert spec.n == 5
        assert spec.is_intercept_only
        assert spec.n_params == 3
        assert spec.q_names == ("intercept",)

    def test_missing_intercept(self):
        design = np.column_stack([np.arange(4.0), np.arange(4.0) ** 2])
        ones = np.ones((4, 1))
        with pytest.raises(ValidationError):
            ZibRegressionSpec(design, ones, ones)

    def test_reserved_link_not_implemented(self):
        ones = np.ones((3, 1))
        with pytest.raises(ValidationError, match="尚未实现"):
            ZibRegressionSpec(ones, ones, ones, links=("probit", "logit", "log"))

    def test_unknown_link(self):
        ones = np.ones((3, 1))
        with pytest.raises(ValidationError):
            ZibRegressionSpec(ones, ones, ones, links=("logit", "identity", "log"))

    def test_row_mismatch(self):
        with pytest.raises(ValidationError):
            ZibRegressionSpec(np.ones((3, 1)), np.ones((4, 1)), np.ones((3, 1)))

    def test_from_covariates(self):
        frame = pd.DataFrame({"age": [30.0, 40.0, 50.0], "bmi": [20.0, 25.0, 30.0]})
        spec = ZibRegressionSpec.from_covariates(frame, p_cols=["age"], mu_cols=["age", "bmi"])
        assert spec.q_design.shape == (3, 2)
        assert spec.w_design.shape == (3, 3)
        assert spec.z_design.shape == (3, 1)
        assert spec.w_names == ("intercept", "age", "bmi")
        assert not spec.is_intercept_only

    def test_from_covariates_missing_column(self):
        frame = pd.DataFrame({"age": [30.0, 40.0]})
        with pytest.raises(ValidationError):
            ZibRegressionSpec.from_covariates(frame, p_cols=["sex"])

    def test_subset(self):
        frame = pd.DataFrame({"age": [1.0, 2.0, 3.0, 4.0]})
        spec = ZibRegressionSpec.from_covariates(frame, p_cols=["age"])
        sub = spec.subset([1, 3])
        np.testing.assert_allclose(sub.q_design[:, 1], [2.0, 4.0])
        assert sub.q_names == spec.q_names


class TestDistributionFunctions:
    """测试分布函数"""

    params = ZibParams(p=0.3, mu=0.4, phi=6.0)

    def test_pdf_at_zero_is_mass(self):
        assert zib_pdf(0.0, self.params) == pytest.approx(0.3)

    def test_pdf_uniform_beta(self):
        """Beta(1,1) 部分密度为1"""
        assert zib_pdf(0.3, ZibParams(p=0.2, mu=0.5, phi=2.0)) == pytest.approx(0.8)

    def test_pdf_matches_scipy(self):
        x = np.array([0.05, 0.4, 0.93])
        expected = 0.7 * stats.beta.pdf(x, 2.4, 3.6)
        np.testing.assert_allclose(zib_pdf(x, self.params), expected, rtol=1e-12)

    def test_continuous_part_integrates(self):
        """连续部分积分为 1-p"""
        total, _ = integrate.quad(lambda x: zib_pdf(x, self.params), 0.0, 1.0 - 1e-12)
        assert total == pytest.approx(0.7, abs=1e-8)

    def test_logpdf_consistent(self):
        x = np.array([0.0, 0.2, 0.7])
        np.testing.assert_allclose(np.exp(zib_logpdf(x, self.params)), zib_pdf(x, self.params))

    def test_pdf_rejects_one(self):
        with pytest.raises(DomainError):
            zib_pdf(1.0, self.params)

    def test_pdf_rejects_negative(self):
        with pytest.raises(DomainError):
            zib_pdf(-0.01, self.params)

    def test_cdf_endpoints(self):
        assert zib_cdf(0.0, self.params) == pytest.approx(0.3)
        assert zib_cdf(1.0, self.params) == pytest.approx(1.0)

    def test_cdf_left_limit(self):
        assert zib_cdf_left(0.0, self.params) == 0.0
        assert zib_cdf_left(0.5, self.params) == pytest.approx(zib_cdf(0.5, self.params))

    def test_cdf_matches_scipy(self):
        x = np.array([0.1, 0.5, 0.9])
        expected = 0.3 + 0.7 * stats.beta.cdf(x, 2.4, 3.6)
        np.testing.assert_allclose(zib_cdf(x, self.params), expected, rtol=1e-12)

    def test_quantile_zero_region(self):
        """u <= p 时分位数为0"""
        np.testing.assert_array_equal(zib_quantile(np.array([0.0, 0.1, 0.3]), self.params), 0.0)

    def test_quantile_inverts_cdf(self):
        u = np.array([0.35, 0.6, 0.99])
        x = zib_quantile(u, self.params)
        np.testing.assert_allclose(zib_cdf(x, self.params), u, atol=1e-10)

    def test_quantile_upper_end_clamped(self):
        x = zib_quantile(1.0, self.params)
        assert 0 < x <= UNIT_CLAMP

    def test_quantile_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            zib_quantile(1.5, self.params)

    def test_per_observation_params(self):
        params = ZibParams(p=np.array([0.1, 0.5]), mu=np.array([0.3, 0.6]), phi=np.array([4.0, 8.0]))
        values = zib_cdf(np.array([0.0, 0.0]), params)
        np.testing.assert_allclose(values, [0.1, 0.5])

    def test_loglik_is_sum(self):
        x = np.array([0.0, 0.0, 0.25, 0.6])
        assert zib_loglik(x, self.params) == pytest.approx(np.sum(zib_logpdf(x, self.params)))

    def test_loglik_floor_flag(self):
        """p=0 时零观测的对数概率为 -inf，被替换并标记"""
        params = ZibParams(p=0.0, mu=0.5, phi=2.0)
        total, floored = zib_loglik(np.array([0.0, 0.5]), params, return_flag=True)
        assert floored
        assert np.isfinite(total)


class TestClampUnitInterval:
    """测试相对丰度截断"""

    def test_numerical_one_clamped(self):
        arr = clamp_unit_interval([0.2, 1.0, 1.0 + 1e-12])
        assert arr[0] == 0.2
        assert arr[1] == UNIT_CLAMP
        assert arr[2] == UNIT_CLAMP

    def test_clearly_above_one(self):
        with pytest.raises(DomainError):
            clamp_unit_interval([0.5, 1.01])

    def test_negative(self):
        with pytest.raises(DomainError):
            clamp_unit_interval([-0.1, 0.5])

    def test_input_not_modified(self):
        data = np.array([0.3, 1.0])
        clamp_unit_interval(data)
        assert data[1] == 1.0


class TestFitZib:
    """测试无协变量拟合"""

    def test_p_is_zero_fraction(self):
        data = np.array([0, 0, 0, 0, 0.2, 0.3, 0.5, 0.6, 0.1, 0.4])
        fit = fit_zib(data)
        assert isinstance(fit, ZibFit)
        assert fit.natural_params().p == 0.4
        assert fit.n_zero == 4
        assert fit.n_nonzero == 6

    def test_beta_part_matches_scipy_mle(self, rng):
        truth = ZibParams(p=0.25, mu=5 / 7, phi=7.0)
        data = _draw_zib(400, truth, rng)
        fit = fit_zib(data)
        nonzero = data[data > 0]
        a, b, _, _ = stats.beta.fit(nonzero, floc=0, fscale=1)
        params = fit.natural_params()
        assert params.mu == pytest.approx(a / (a + b), rel=1e-3)
        assert params.phi == pytest.approx(a + b, rel=1e-3)
        assert fit.converged

    def test_recovers_truth(self, rng):
        truth = ZibParams(p=0.10, mu=2 / 7, phi=7.0)
        data = _draw_zib(5000, truth, rng)
        params = fit_zib(data).natural_params()
        assert params.p == pytest.approx(0.10, abs=0.02)
        assert params.mu == pytest.approx(2 / 7, abs=0.01)
        assert params.phi == pytest.approx(7.0, rel=0.1)

    def test_loglik_at_fit(self, rng):
        data = _draw_zib(200, ZibParams(p=0.3, mu=0.4, phi=5.0), rng)
        fit = fit_zib(data)
        assert fit.loglik == pytest.approx(zib_loglik(data, fit.natural_params()))

    def test_loglik_not_improved_by_perturbation(self, rng):
        data = _draw_zib(300, ZibParams(p=0.3, mu=0.4, phi=5.0), rng)
        fit = fit_zib(data)
        params = fit.natural_params()
        for dmu, dphi in [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.2), (0.0, -0.2)]:
            other = ZibParams(p=params.p, mu=params.mu + dmu, phi=params.phi + dphi)
            assert zib_loglik(data, other) <= fit.loglik + 1e-9

    def test_too_few_nonzero(self):
        with pytest.raises(TooFewNonzeroError):
            fit_zib(np.array([0.0, 0.0, 0.0, 0.4, 0.5]))

    def test_three_nonzero_is_enough(self):
        fit = fit_zib(np.array([0.0, 0.0, 0.2, 0.4, 0.5]))
        assert fit.n_nonzero == 3

    def test_no_zeros_keeps_finite_coefficient(self):
        fit = fit_zib(np.array([0.1, 0.3, 0.2, 0.4, 0.5, 0.35]))
        assert fit.zero_boundary
        assert fit.natural_params().p == 0.0
        assert np.all(np.isfinite(fit.rho))
        assert fit.rho[0] < -20
        record = fit.to_dict()
        assert record["zero_boundary"] is True
        assert np.all(np.isfinite(record["rho"]))
        assert record["p"] == 0.0

    def test_some_zeros_not_at_boundary(self):
        assert not fit_zib(np.array([0.0, 0.2, 0.4, 0.5])).zero_boundary

    def test_warm_start_same_solution(self, rng):
        data = _draw_zib(200, ZibParams(p=0.2, mu=0.6, phi=4.0), rng)
        cold = fit_zib(data)
        warm = fit_zib(data, init=cold)
        np.testing.assert_allclose(warm.parameter_vector(), cold.parameter_vector(), atol=1e-7)

    def test_parameter_names_and_dict(self, rng):
        data = _draw_zib(100, ZibParams(p=0.2, mu=0.6, phi=4.0), rng)
        fit = fit_zib(data)
        assert fit.parameter_names("i_") == ("i_p", "i_mu", "i_phi")
        record = fit.to_dict()
        assert record["p"] == fit.natural_params().p
        assert record["links"] == ["logit", "logit", "log"]


class TestFitZibRegression:
    """测试带协变量拟合"""

    @staticmethod
    def _regression_data(rng, n=600):
        x = rng.normal(size=n)
        p = 1 / (1 + np.exp(-(-0.5 + 0.8 * x)))
        mu = 1 / (1 + np.exp(-(0.2 - 0.5 * x)))
        phi = np.exp(1.5 + 0.3 * x)
        zero = rng.random(n) < p
        y = np.where(zero, 0.0, rng.beta(mu * phi, (1 - mu) * phi))
        frame = pd.DataFrame({"x": x})
        spec = ZibRegressionSpec.from_covariates(frame, ["x"], ["x"], ["x"])
        return y, spec

    def test_presence_matches_statsmodels_logit(self, rng):
        y, spec = self._regression_data(rng)
        fit = fit_zib_regression(y, spec)
        oracle = sm.Logit((y == 0).astype(float), spec.q_design).fit(disp=0)
        np.testing.assert_allclose(fit.rho, oracle.params, atol=1e-6)

    def test_beta_part_gradient_vanishes(self, rng):
        """Beta部分在拟合系数处的数值梯度接近0"""
        y, spec = self._regression_data(rng)
        fit = fit_zib_regression(y, spec)
        assert fit.converged

        def loglik(delta, kappa):
            other = ZibFit(
                rho=fit.rho, delta=delta, kappa=kappa, loglik=0.0, converged=True,
                n_nonzero=fit.n_nonzero, n=fit.n, n_zero=fit.n_zero, intercept_only=False,
            )
            return zib_loglik(y, other.params(spec))

        h = 1e-5
        base = np.concatenate([fit.delta, fit.kappa])
        k = fit.delta.size
        for j in range(base.size):
            up, down = base.copy(), base.copy()
            up[j] += h
            down[j] -= h
            grad = (loglik(up[:k], up[k:]) - loglik(down[:k], down[k:])) / (2 * h)
            assert abs(grad) < 1e-3

    def test_recovers_coefficients(self):
        rng = np.random.default_rng(3)
        y, spec = self._regression_data(rng, n=4000)
        fit = fit_zib_regression(y, spec)
        np.testing.assert_allclose(fit.rho, [-0.5, 0.8], atol=0.15)
        np.testing.assert_allclose(fit.delta, [0.2, -0.5], atol=0.1)
        np.testing.assert_allclose(fit.kappa, [1.5, 0.3], atol=0.15)

    def test_params_per_observation(self, rng):
        y, spec = self._regression_data(rng, n=200)
        fit = fit_zib_regression(y, spec)
        params = fit.params(spec)
        assert params.p.shape == (200,)
        with pytest.raises(ValidationError):
            fit.natural_params()
        assert len(fit.parameter_names()) == 6

    def test_intercept_only_regression_matches_fit_zib(self, rng):
        data = _draw_zib(150, ZibParams(p=0.3, mu=0.5, phi=3.0), rng)
        a = fit_zib(data)
        b = fit_zib_regression(data, ZibRegressionSpec.intercept_only(150))
        np.testing.assert_allclose(a.parameter_vector(), b.parameter_vector())

    def test_rank_deficient_design(self, rng):
        n = 50
        x = rng.normal(size=n)
        frame = pd.DataFrame({"x": x, "x2": 2 * x})
        spec = ZibRegressionSpec.from_covariates(frame, mu_cols=["x", "x2"])
        data = rng.uniform(0.1, 0.9, size=n)
        with pytest.raises(RankDeficientDesignError):
            fit_zib_regression(data, spec)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            fit_zib_regression(np.full(5, 0.5), ZibRegressionSpec.intercept_only(6))

    def test_perfect_separation_flagged(self):
        """协变量完全区分零与非零时标记分离"""
        x = np.linspace(-1, 1, 40)
        y = np.where(x < 0, 0.0, 0.3 + 0.2 * (x + 1) / 2)
        spec = ZibRegressionSpec.from_covariates(pd.DataFrame({"x": x}), p_cols=["x"])
        fit = fit_zib_regression(y, spec)
        assert fit.perfect_separation
