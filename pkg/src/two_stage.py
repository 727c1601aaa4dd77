"""
两阶段估计与重标度似然比检验模块

**两阶段估计：**
1. 分别对两个物种拟合零膨胀Beta边际，得到 gamma_i, gamma_j
2. 固定边际参数，在 [-35, 35] 上用Brent法最大化联合对数似然得到 theta

**方差估计：** 留一刀切法，每次删去一个观测后重跑完整的两阶段拟合（以全样本估计热启动）。

**检验：** 两阶段估计不是完全最大似然，普通似然比统计量需要乘以重标度因子
omega = 1 / (v * I_theta)，其中 v 为 theta 的渐近方差（刀切法），
I_theta 为剖面对数似然在估计点的平均曲率。
"""

from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import (
    logger,
    DomainError,
    ValidationError,
    RankDeficientDesignError,
    NumericalError,
    EstimationError,
    TooFewNonzeroError,
    MutuallyExclusiveError,
    NonpositiveCurvatureError,
    MAX_ITER,
    OPTIM_TOL,
    THETA_BOUNDS,
    MIN_NONZERO,
    MIN_CO_NONZERO,
    JACKKNIFE_MAX_ITER,
    JACKKNIFE_DEGRADED_FRACTION,
    CURVATURE_STEP,
)
from src.frank_copula import theta_to_kendall_tau
from src.joint_model import PairData, PairLikelihood
from src.numerics import brent_optimize
from src.parallel import run_tasks
from src.zib_margin import ZibFit, ZibRegressionSpec, fit_zib_regression


# Λ 因数值误差为负时直接置零的阈值
_LAMBDA_NOISE = 1e-8


# ============================================================================
# 结果类型
# ============================================================================

@dataclass
class FitStatus:
    """
    成对拟合的状态标志

    Attributes:
        boundary_hit: theta 估计落在搜索区间端点
        too_few_nonzero: 某个边际非零观测不足3个
        mutually_exclusive: 同时非零的观测不足2个
        nonconverged: 某个边际的牛顿迭代未收敛
        separation: 某个边际的零膨胀部分完全分离
        floored: 对数似然出现下溢项
        jackknife_degraded: 刀切法跳过的留一样本超过10%
        curvature_undefined: 剖面似然曲率非负，检验无定义
    """

    boundary_hit: bool = False
    too_few_nonzero: bool = False
    mutually_exclusive: bool = False
    nonconverged: bool = False
    separation: bool = False
    floored: bool = False
    jackknife_degraded: bool = False
    curvature_undefined: bool = False

    @property
    def is_clean(self) -> bool:
        return not (self.too_few_nonzero or self.mutually_exclusive or self.nonconverged
                    or self.curvature_undefined)

    def flags(self) -> List[str]:
        return [name for name, value in self.__dict__.items() if value]

    def describe(self) -> str:
        return ",".join(self.flags()) or "ok"


@dataclass
class JackknifeResult:
    """
    刀切法协方差

    Attributes:
        cov: eta 的协方差矩阵（已按 n/n_used 重标度）
        n_used: 成功重拟合的留一样本数
        n_skipped: 因前提条件不满足而跳过的留一样本数
        degraded: 跳过比例是否超过10%
    """

    cov: np.ndarray
    n_used: int
    n_skipped: int
    degraded: bool

    @property
    def theta_var(self) -> float:
        return float(self.cov[-1, -1])


@dataclass
class LrtResult:
    """
    重标度似然比检验结果

    Attributes:
        lambda_prime: 重标度统计量 omega * Lambda
        p_value: chi2(1) 上尾概率
        omega: 重标度因子
        lambda_raw: 未重标度的 Lambda
        info_theta: 平均曲率 I_theta = -l''(theta)/n
        theta0: 原假设下的 theta
    """

    lambda_prime: float
    p_value: float
    omega: float
    lambda_raw: float
    info_theta: float
    theta0: float = 0.0


@dataclass
class PairFit:
    """
    一对物种的两阶段拟合结果

    Attributes:
        fit_i / fit_j: 两个边际的拟合
        theta_hat: theta 的两阶段估计
        loglik: 估计点处的联合对数似然
        n: 观测数
        spec_i / spec_j: 回归设定（无协变量时为None）
        status: 状态标志
        theta_var: theta 的刀切法方差（协方差矩阵右下角元素）
        cov: eta = (gamma_i, gamma_j, theta) 的刀切法协方差
        lrt_stat: 重标度似然比统计量
        p_value: 检验p值
        omega: 重标度因子
        jackknife / lrt: 详细结果
    """

    fit_i: ZibFit
    fit_j: ZibFit
    theta_hat: float
    loglik: float
    n: int
    spec_i: Optional[ZibRegressionSpec] = None
    spec_j: Optional[ZibRegressionSpec] = None
    status: FitStatus = field(default_factory=FitStatus)
    theta_var: float = float("nan")
    cov: Optional[np.ndarray] = None
    lrt_stat: float = float("nan")
    p_value: float = float("nan")
    omega: float = float("nan")
    jackknife: Optional[JackknifeResult] = None
    lrt: Optional[LrtResult] = None

    def parameter_vector(self) -> np.ndarray:
        """eta = (gamma_i, gamma_j, theta)"""
        return np.concatenate([
            self.fit_i.parameter_vector(),
            self.fit_j.parameter_vector(),
            [self.theta_hat],
        ])

    def parameter_names(self) -> Tuple[str, ...]:
        return (
            self.fit_i.parameter_names("i_")
            + self.fit_j.parameter_names("j_")
            + ("theta",)
        )

    def likelihood(self, data: PairData) -> PairLikelihood:
        """以拟合的边际参数构造关于 theta 的似然"""
        return PairLikelihood(data, self.fit_i.params(self.spec_i), self.fit_j.params(self.spec_j))

    @property
    def kendall_tau(self) -> float:
        return theta_to_kendall_tau(self.theta_hat)

    def to_dict(self) -> Dict:
        record = {
            "n": self.n,
            "theta_hat": self.theta_hat,
            "kendall_tau": self.kendall_tau,
            "loglik": self.loglik,
            "theta_var": self.theta_var,
            "lrt_stat": self.lrt_stat,
            "p_value": self.p_value,
            "omega": self.omega,
            "status": self.status.flags(),
            "margin_i": self.fit_i.to_dict(),
            "margin_j": self.fit_j.to_dict(),
            "parameter_names": list(self.parameter_names()),
            "estimates": self.parameter_vector().tolist(),
        }
        if self.cov is not None:
            record["cov"] = self.cov.tolist()
        if self.jackknife is not None:
            record["jackknife"] = {
                "n_used": self.jackknife.n_used,
                "n_skipped": self.jackknife.n_skipped,
                "degraded": self.jackknife.degraded,
            }
        if self.lrt is not None:
            record["lrt"] = {
                "lambda_raw": self.lrt.lambda_raw,
                "info_theta": self.lrt.info_theta,
                "theta0": self.lrt.theta0,
            }
        return record


# ============================================================================
# 两阶段估计
# ============================================================================

def check_preconditions(data: PairData) -> None:
    """
    检查两阶段估计的前提条件

    Raises:
        TooFewNonzeroError: 某个物种非零观测少于3个
        MutuallyExclusiveError: 同时非零的观测少于2个
    """
    for name, count in zip(data.names, (data.n_nonzero_i, data.n_nonzero_j)):
        if count < MIN_NONZERO:
            raise TooFewNonzeroError(
                f"物种 {name} 只有 {count} 个非零观测，至少需要 {MIN_NONZERO} 个"
            )
    if data.n_co_nonzero < MIN_CO_NONZERO:
        raise MutuallyExclusiveError(
            f"{data.names[0]} 与 {data.names[1]} 只有 {data.n_co_nonzero} 个观测同时非零，"
            f"至少需要 {MIN_CO_NONZERO} 个"
        )


def two_stage_fit(
    data: PairData,
    spec_i: Optional[ZibRegressionSpec] = None,
    spec_j: Optional[ZibRegressionSpec] = None,
    init: Optional[PairFit] = None,
    max_iter: int = MAX_ITER
) -> PairFit:
    """
    两阶段拟合

    Args:
        data: 成对观测
        spec_i: 物种 i 的回归设定（None 表示无协变量）
        spec_j: 物种 j 的回归设定
        init: 热启动用的已有拟合
        max_iter: 边际牛顿迭代上限

    Returns:
        PairFit（不含方差和检验字段）

    Raises:
        TooFewNonzeroError: 非零观测不足
        MutuallyExclusiveError: 同时非零的观测不足
        ValidationError: 设计矩阵与数据行数不一致

    Example:
        >>> fit = two_stage_fit(data)
        >>> -35 <= fit.theta_hat <= 35
        True
    """
    check_preconditions(data)
    n = data.n
    for name, spec in (("spec_i", spec_i), ("spec_j", spec_j)):
        if spec is not None and spec.n != n:
            raise ValidationError(f"{name} 行数 {spec.n} 与观测数 {n} 不一致")

    design_i = spec_i if spec_i is not None else ZibRegressionSpec.intercept_only(n)
    design_j = spec_j if spec_j is not None else ZibRegressionSpec.intercept_only(n)

    # 第一阶段：两个边际分别拟合，与 theta 和对方数据无关
    fit_i = fit_zib_regression(data.x_i, design_i,
                               init=init.fit_i if init else None, max_iter=max_iter)
    fit_j = fit_zib_regression(data.x_j, design_j,
                               init=init.fit_j if init else None, max_iter=max_iter)

    # 第二阶段：固定边际，关于 theta 最大化
    lik = PairLikelihood(data, fit_i.params(design_i), fit_j.params(design_j))
    res = brent_optimize(lik.loglik, THETA_BOUNDS[0], THETA_BOUNDS[1], tol=OPTIM_TOL)
    loglik = lik.loglik(res.x)

    status = FitStatus(
        boundary_hit=res.hit_boundary,
        nonconverged=not (fit_i.converged and fit_j.converged),
        separation=fit_i.perfect_separation or fit_j.perfect_separation,
        floored=lik.floored,
    )
    if res.hit_boundary:
        logger.warning(f"{data.names[0]}-{data.names[1]}: theta 估计落在搜索边界 {res.x:.6g}")

    return PairFit(
        fit_i=fit_i,
        fit_j=fit_j,
        theta_hat=float(res.x),
        loglik=loglik,
        n=n,
        spec_i=spec_i,
        spec_j=spec_j,
        status=status,
    )


def profile_loglik(data: PairData, fit: PairFit, theta: float) -> float:
    """边际固定在两阶段估计处的剖面对数似然 l(theta, gamma_i, gamma_j)"""
    return fit.likelihood(data).loglik(theta)


def profile_grid(data: PairData, fit: PairFit, grid: Sequence[float]) -> np.ndarray:
    """在 theta 网格上计算剖面对数似然"""
    lik = fit.likelihood(data)
    return np.array([lik.loglik(t) for t in grid], dtype=float)


# ============================================================================
# 刀切法协方差
# ============================================================================

def _subset_spec(spec: Optional[ZibRegressionSpec], rows: np.ndarray):
    return spec.subset(rows) if spec is not None else None


def _leave_one_out(
    index: int,
    data: PairData,
    fit: PairFit
) -> Optional[np.ndarray]:
    """删去第 index 个观测后重拟合，前提条件不满足时返回None"""
    rows = np.delete(np.arange(data.n), index)
    sub = data.take(rows)
    spec_i = _subset_spec(fit.spec_i, rows)
    spec_j = _subset_spec(fit.spec_j, rows)
    try:
        refit = two_stage_fit(sub, spec_i, spec_j, init=fit, max_iter=JACKKNIFE_MAX_ITER)
        if refit.status.nonconverged:
            # 热启动失败时从头完整拟合
            refit = two_stage_fit(sub, spec_i, spec_j, max_iter=MAX_ITER)
    except (EstimationError, NumericalError, RankDeficientDesignError) as e:
        logger.debug(f"留一样本 {index} 被跳过: {e}")
        return None
    return refit.parameter_vector()


def jackknife_cov(
    data: PairData,
    fit: PairFit,
    threads: int = 1,
    show_progress: bool = False
) -> JackknifeResult:
    """
    留一刀切法协方差

    cov = sum_l (eta_(l) - eta)(eta_(l) - eta)^T，即 n^{-1} V 的估计；
    有留一样本被跳过时乘以 n / n_used。

    Args:
        data: 成对观测
        fit: 全样本两阶段拟合
        threads: 并行进程数
        show_progress: 是否显示进度条

    Returns:
        JackknifeResult

    Raises:
        EstimationError: 可用的留一样本少于2个
    """
    n = data.n
    task = partial(_leave_one_out, data=data, fit=fit)
    estimates = run_tasks(task, range(n), threads=threads,
                          show_progress=show_progress, desc="jackknife")

    eta = fit.parameter_vector()
    used = [e for e in estimates if e is not None]
    n_used = len(used)
    n_skipped = n - n_used
    if n_used < 2:
        raise EstimationError(f"刀切法只有 {n_used} 个可用的留一样本")

    diffs = np.vstack(used) - eta
    cov = diffs.T @ diffs
    if n_skipped:
        cov *= n / n_used
    cov = 0.5 * (cov + cov.T)

    degraded = n_skipped > JACKKNIFE_DEGRADED_FRACTION * n
    if degraded:
        logger.warning(f"刀切法跳过了 {n_skipped}/{n} 个留一样本，结果质量降级")
    return JackknifeResult(cov=cov, n_used=n_used, n_skipped=n_skipped, degraded=degraded)


# ============================================================================
# 重标度似然比检验
# ============================================================================

def profile_curvature(lik: PairLikelihood, theta: float) -> float:
    """剖面对数似然在 theta 处的二阶中心差分，步长 h = 1e-4 (1 + |theta|)"""
    h = CURVATURE_STEP * (1.0 + abs(theta))
    return (lik.loglik(theta + h) - 2.0 * lik.loglik(theta) + lik.loglik(theta - h)) / h ** 2


def rescaled_lrt(
    data: PairData,
    fit: PairFit,
    theta0: float = 0.0
) -> LrtResult:
    """
    重标度似然比检验 H0: theta = theta0

    Lambda = -2 [l(theta0) - l(theta_hat)]，I_theta = -l''(theta_hat) / n，
    omega = 1 / (v I_theta)，其中 v = n * theta_var，Lambda' = omega * Lambda ~ chi2(1)。

    Args:
        data: 成对观测
        fit: 已完成刀切法的两阶段拟合
        theta0: 原假设值，需位于 [-35, 35]

    Returns:
        LrtResult

    Raises:
        DomainError: theta0 超出搜索区间
        ValidationError: 尚未计算刀切法方差
        NonpositiveCurvatureError: 剖面似然曲率非负
        EstimationError: 刀切法方差为0
    """
    if not THETA_BOUNDS[0] <= theta0 <= THETA_BOUNDS[1]:
        raise DomainError(f"theta0={theta0} 超出区间 {THETA_BOUNDS}")
    theta_var = fit.theta_var
    if not np.isfinite(theta_var):
        raise ValidationError("需要先用 jackknife_cov 计算 theta 的方差")
    if theta_var <= 0:
        raise EstimationError(f"theta 的刀切法方差非正: {theta_var}")

    lik = fit.likelihood(data)
    l_hat = lik.loglik(fit.theta_hat)
    l_null = lik.loglik(theta0)
    lambda_raw = -2.0 * (l_null - l_hat)
    if lambda_raw < 0:
        if lambda_raw < -_LAMBDA_NOISE:
            logger.warning(f"Lambda={lambda_raw:.3g} 为负，theta 估计可能不是最大值点")
        lambda_raw = 0.0

    second = profile_curvature(lik, fit.theta_hat)
    if not np.isfinite(second) or second >= 0:
        raise NonpositiveCurvatureError(
            f"剖面对数似然在 theta={fit.theta_hat:.6g} 处的二阶导数为 {second:.6g}，检验无定义"
        )

    n = data.n
    info_theta = -second / n
    omega = 1.0 / (n * theta_var * info_theta)
    lambda_prime = omega * lambda_raw
    p_value = float(stats.chi2.sf(lambda_prime, df=1))
    return LrtResult(
        lambda_prime=float(lambda_prime),
        p_value=p_value,
        omega=float(omega),
        lambda_raw=float(lambda_raw),
        info_theta=float(info_theta),
        theta0=float(theta0),
    )


def independence_test(
    data: PairData,
    spec_i: Optional[ZibRegressionSpec] = None,
    spec_j: Optional[ZibRegressionSpec] = None,
    threads: int = 1,
    show_progress: bool = False
) -> PairFit:
    """
    独立性检验：两阶段拟合 + 刀切法 + theta0 = 0 的重标度似然比检验

    Returns:
        字段完整的 PairFit

    Raises:
        同 two_stage_fit / jackknife_cov / rescaled_lrt
    """
    fit = two_stage_fit(data, spec_i, spec_j)
    jack = jackknife_cov(data, fit, threads=threads, show_progress=show_progress)
    fit.jackknife = jack
    fit.cov = jack.cov
    fit.theta_var = jack.theta_var
    fit.status.jackknife_degraded = jack.degraded

    lrt = rescaled_lrt(data, fit, theta0=0.0)
    fit.lrt = lrt
    fit.lrt_stat = lrt.lambda_prime
    fit.p_value = lrt.p_value
    fit.omega = lrt.omega
    logger.debug(
        f"{data.names[0]}-{data.names[1]}: theta={fit.theta_hat:.4g}, "
        f"Lambda'={lrt.lambda_prime:.4g}, p={lrt.p_value:.3g}"
    )
    return fit


__all__ = [
    "FitStatus",
    "JackknifeResult",
    "LrtResult",
    "PairFit",
    "check_preconditions",
    "two_stage_fit",
    "profile_loglik",
    "profile_grid",
    "profile_curvature",
    "jackknife_cov",
    "rescaled_lrt",
    "independence_test",
]
