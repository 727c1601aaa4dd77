"""
模拟研究模块

通过Rosenblatt逆变换从零膨胀Beta-Frank copula模型抽样，并运行偏差/方差研究
和检验功效研究（与Pearson、Spearman、Kendall相关性检验比较）。

**抽样算法：**
1. U, W 独立同分布 Uniform(0,1)
2. V = C_{v|u}^{-1}(W | U)
3. x_i = F_i^{-1}(U), x_j = F_j^{-1}(V)

若某个边际非零观测少于3个，或同时非零的观测不超过1个，则整组重抽，最多1000次。

**可重复性：** 每个重复的随机数发生器由 (seed, 单元编号, 重复编号) 派生，
结果与并行进程数和调度顺序无关。
"""

from dataclasses import dataclass, asdict
from typing import Dict, List, Literal, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import special, stats

from config import (
    logger,
    ValidationError,
    EstimationError,
    NumericalError,
    GuardExhaustedError,
    MAX_REDRAWS,
    MIN_NONZERO,
    MIN_CO_NONZERO,
    THETA_BOUNDS,
    DEFAULT_SIM_N,
    DEFAULT_SIM_REPS,
    DEFAULT_SIM_ALPHA,
    CONFIG_SCHEMA_VERSION,
)
from src.frank_copula import (
    ThetaLike,
    sample_frank,
    theta_to_kendall_tau,
    theta_to_spearman_rho,
)
from src.joint_model import PairData
from src.parallel import STREAM_SIMULATION, make_rng, run_tasks
from src.two_stage import jackknife_cov, rescaled_lrt, two_stage_fit
from src.zib_margin import ZibParams, ZibRegressionSpec, zib_quantile


# 依赖参数网格
DEFAULT_THETA_GRID = (-2.5, -1.0, 0.0, 0.5, 1.5, 3.0)

# 零膨胀概率 (p_i, p_j)
DEFAULT_P_PAIRS = ((0.10, 0.25), (0.40, 0.50), (0.60, 0.75), (0.20, 0.75))

# Beta部分 (mu, phi) 的配对：((mu_i, phi_i), (mu_j, phi_j))
DEFAULT_MU_PHI_PAIRS = (
    ((2 / 7, 7.0), (5 / 7, 7.0)),
    ((1 / 2, 4.0), (1 / 3, 9.0)),
    ((2 / 3, 9.0), (1 / 2, 6.0)),
)

# 协变量设定下的 rho 系数 (截距, 斜率)，依次为低-低、低-高、高-高零膨胀
DEFAULT_RHO_SETTINGS = (
    ("low-low", (-0.5, 0.7), (-0.3, 0.4)),
    ("low-high", (-0.1, 0.7), (0.1, 0.4)),
    ("high-high", (0.5, 0.7), (0.8, 0.4)),
)

PRESETS = ("paper-grid", "paper-grid-regression", "paper-grid-n250")

StudyKind = Literal["bias", "power", "both"]


# ============================================================================
# 配置模型
# ============================================================================

class MarginSetting(BaseModel):
    """单个边际的真实参数 (p, mu, phi)"""

    p: float = Field(..., ge=0, lt=1, description="零点质量")
    mu: float = Field(..., gt=0, lt=1, description="Beta均值")
    phi: float = Field(..., gt=0, description="Beta离散参数")

    def to_params(self) -> ZibParams:
        return ZibParams(p=self.p, mu=self.mu, phi=self.phi)


class CellSetting(BaseModel):
    """无协变量设定下一对边际的真实参数"""

    label: str = Field(..., description="设定名称")
    margin_i: MarginSetting
    margin_j: MarginSetting


class RegressionTruth(BaseModel):
    """
    协变量设定下的真实回归系数

    logit(p_k) = rho_k0 + rho_k1 * q，mu_k = expit(delta_k)，phi_k = exp(kappa_k)。
    """

    label: str = Field(..., description="设定名称")
    rho_i: Tuple[float, float] = Field(..., description="物种 i 的 (截距, 斜率)")
    rho_j: Tuple[float, float] = Field(..., description="物种 j 的 (截距, 斜率)")
    delta_i: float = -0.7
    delta_j: float = -1.0
    kappa_i: float = 1.5
    kappa_j: float = 1.5

    def params(self, covariate: np.ndarray) -> Tuple[ZibParams, ZibParams]:
        """给定协变量时两个边际的逐观测参数"""
        gi = ZibParams(
            p=special.expit(self.rho_i[0] + self.rho_i[1] * covariate),
            mu=float(special.expit(self.delta_i)),
            phi=float(np.exp(self.kappa_i)),
        )
        gj = ZibParams(
            p=special.expit(self.rho_j[0] + self.rho_j[1] * covariate),
            mu=float(special.expit(self.delta_j)),
            phi=float(np.exp(self.kappa_j)),
        )
        return gi, gj


class SimConfig(BaseModel):
    """
    模拟研究配置

    Attributes:
        name: 配置名称（预设名或 custom）
        n: 每个数据集的样本量，>= 10
        reps: 每个单元的重复次数，>= 1
        theta_grid: 依赖参数网格
        margin_settings: 无协变量设定列表
        regression_settings: 协变量设定列表
        covariate_mode: none 或 one_normal_on_p
        seed: 随机种子
        alpha: 检验水平
    """

    name: str = "custom"
    n: int = Field(DEFAULT_SIM_N, ge=10, description="样本量")
    reps: int = Field(DEFAULT_SIM_REPS, ge=1, description="重复次数")
    theta_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_THETA_GRID))
    margin_settings: List[CellSetting] = Field(default_factory=list)
    regression_settings: List[RegressionTruth] = Field(default_factory=list)
    covariate_mode: Literal["none", "one_normal_on_p"] = "none"
    seed: int = Field(20240101, ge=0, lt=2 ** 64, description="随机种子")
    alpha: float = Field(DEFAULT_SIM_ALPHA, gt=0, lt=1, description="检验水平")

    @field_validator("theta_grid")
    @classmethod
    def _check_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("theta_grid 不能为空")
        for theta in value:
            if not THETA_BOUNDS[0] <= theta <= THETA_BOUNDS[1]:
                raise ValueError(f"theta={theta} 超出区间 {THETA_BOUNDS}")
        return value

    @model_validator(mode="after")
    def _check_settings(self) -> "SimConfig":
        if self.covariate_mode == "none" and not self.margin_settings:
            raise ValueError("covariate_mode=none 时需要 margin_settings")
        if self.covariate_mode == "one_normal_on_p" and not self.regression_settings:
            raise ValueError("covariate_mode=one_normal_on_p 时需要 regression_settings")
        return self

    # ------------------------------------------------------------------
    # 预设
    # ------------------------------------------------------------------

    @staticmethod
    def default_margin_settings() -> List[CellSetting]:
        settings = []
        for (p_i, p_j) in DEFAULT_P_PAIRS:
            for k, ((mu_i, phi_i), (mu_j, phi_j)) in enumerate(DEFAULT_MU_PHI_PAIRS, start=1):
                settings.append(CellSetting(
                    label=f"p{p_i:g}_{p_j:g}-mp{k}",
                    margin_i=MarginSetting(p=p_i, mu=mu_i, phi=phi_i),
                    margin_j=MarginSetting(p=p_j, mu=mu_j, phi=phi_j),
                ))
        return settings

    @staticmethod
    def default_regression_settings() -> List[RegressionTruth]:
        return [RegressionTruth(label=label, rho_i=rho_i, rho_j=rho_j)
                for label, rho_i, rho_j in DEFAULT_RHO_SETTINGS]

    @classmethod
    def preset(cls, name: str, **overrides) -> "SimConfig":
        """
        按名称构造预设配置

        Args:
            name: paper-grid / paper-grid-regression / paper-grid-n250
            **overrides: 覆盖预设字段（如 reps, n, seed）

        Raises:
            ValidationError: 未知预设或覆盖值非法
        """
        if name == "paper-grid":
            base = {"margin_settings": cls.default_margin_settings()}
        elif name == "paper-grid-regression":
            base = {"regression_settings": cls.default_regression_settings(),
                    "covariate_mode": "one_normal_on_p"}
        elif name == "paper-grid-n250":
            base = {"margin_settings": cls.default_margin_settings(),
                    "theta_grid": [0.0], "n": 250}
        else:
            raise ValidationError(f"未知的预设: {name}，可选: {PRESETS}")
        base.update({k: v for k, v in overrides.items() if v is not None})
        base["name"] = name
        try:
            return cls(**base)
        except ValueError as e:
            raise ValidationError(f"模拟配置无效: {e}") from e

    def cells(self) -> List[Tuple[int, float, str]]:
        """网格单元列表 (单元编号, theta, 设定名称)，theta 在外层"""
        labels = [s.label for s in self._settings()]
        return [
            (index, float(theta), label)
            for index, (theta, label) in enumerate(
                (t, lab) for t in self.theta_grid for lab in labels
            )
        ]

    def _settings(self):
        return self.margin_settings if self.covariate_mode == "none" else self.regression_settings

    def setting(self, label: str):
        for s in self._settings():
            if s.label == label:
                return s
        raise ValidationError(f"未知的设定: {label}")

    def echo(self) -> Dict:
        """用于结果清单的配置回显"""
        record = self.model_dump(mode="json")
        record["schema_version"] = CONFIG_SCHEMA_VERSION
        return record


# ============================================================================
# 抽样
# ============================================================================

def _guard_failed(data: PairData) -> bool:
    return (
        data.n_nonzero_i < MIN_NONZERO
        or data.n_nonzero_j < MIN_NONZERO
        or data.n_co_nonzero < MIN_CO_NONZERO
    )


def sample_pair(
    n: int,
    gi: ZibParams,
    gj: ZibParams,
    theta: ThetaLike,
    rng: np.random.Generator,
    max_redraws: int = MAX_REDRAWS
) -> Tuple[PairData, int]:
    """
    从模型抽取 n 个成对观测

    Args:
        n: 样本量
        gi / gj: 两个边际的参数（标量或长度为 n 的逐观测参数）
        theta: 依赖参数
        rng: 随机数发生器
        max_redraws: 重抽上限

    Returns:
        (成对观测, 被丢弃的数据集个数)

    Raises:
        GuardExhaustedError: 重抽 max_redraws 次仍不满足前提条件
    """
    for redraws in range(max_redraws + 1):
        u, v = sample_frank(n, theta, rng)
        data = PairData(np.asarray(zib_quantile(u, gi)), np.asarray(zib_quantile(v, gj)))
        if not _guard_failed(data):
            return data, redraws
    raise GuardExhaustedError(
        f"重抽 {max_redraws} 次仍不满足非零观测条件，参数配置不可行"
    )


def sample_pair_regression(
    n: int,
    truth: RegressionTruth,
    theta: ThetaLike,
    rng: np.random.Generator,
    max_redraws: int = MAX_REDRAWS
) -> Tuple[PairData, np.ndarray, int]:
    """
    协变量设定下抽样：每个样本一个标准正态协变量 q 同时进入两个边际的零膨胀部分

    Returns:
        (成对观测, 协变量, 被丢弃的数据集个数)

    Raises:
        GuardExhaustedError: 重抽次数用尽
    """
    for redraws in range(max_redraws + 1):
        covariate = rng.standard_normal(n)
        gi, gj = truth.params(covariate)
        u, v = sample_frank(n, theta, rng)
        data = PairData(np.asarray(zib_quantile(u, gi)), np.asarray(zib_quantile(v, gj)))
        if not _guard_failed(data):
            return data, covariate, redraws
    raise GuardExhaustedError(
        f"重抽 {max_redraws} 次仍不满足非零观测条件，参数配置不可行"
    )


def covariate_spec(covariate: np.ndarray) -> ZibRegressionSpec:
    """协变量只进入零膨胀部分的回归设定"""
    ones = np.ones((covariate.size, 1))
    return ZibRegressionSpec(
        np.column_stack([ones, covariate]), ones, ones.copy(),
        q_names=("intercept", "q"), w_names=("intercept",), z_names=("intercept",),
    )


# ============================================================================
# 相关性检验
# ============================================================================

@dataclass
class CorrelationTests:
    """Pearson、Spearman、Kendall 独立性检验的双侧p值"""

    pearson: float
    spearman: float
    kendall: float
    spearman_stat: float = float("nan")
    degenerate: bool = False

    def rejections(self, alpha: float) -> Dict[str, bool]:
        return {
            "pearson": self.pearson < alpha,
            "spearman": self.spearman < alpha,
            "kendall": self.kendall < alpha,
        }


def correlation_tests(x: np.ndarray, y: np.ndarray) -> CorrelationTests:
    """
    样本相关性独立性检验

    Pearson 与 Spearman 使用t近似，Kendall 使用带结校正的正态近似。
    零值保留在向量中。常数输入返回 p=1 并标记 degenerate。

    Raises:
        ValidationError: 长度不一致或少于5
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValidationError(f"向量长度不一致: {x.size} vs {y.size}")
    if x.size < 5:
        raise ValidationError(f"相关性检验至少需要5个观测，当前 {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return CorrelationTests(1.0, 1.0, 1.0, degenerate=True)

    _, p_pearson = stats.pearsonr(x, y)
    rho_s, p_spearman = stats.spearmanr(x, y)
    _, p_kendall = stats.kendalltau(x, y, method="asymptotic")
    values = [float(p) for p in (p_pearson, p_spearman, p_kendall)]
    degenerate = not all(np.isfinite(values))
    values = [min(max(v, 0.0), 1.0) if np.isfinite(v) else 1.0 for v in values]
    return CorrelationTests(values[0], values[1], values[2],
                            spearman_stat=float(rho_s), degenerate=degenerate)


# ============================================================================
# 模拟研究
# ============================================================================

@dataclass
class ReplicateTask:
    """单个重复的全部输入（可pickle）"""

    config: SimConfig
    cell: int
    theta: float
    label: str
    rep: int


@dataclass
class ReplicateOutcome:
    """单个重复的结果"""

    cell: int
    rep: int
    redraws: int = 0
    guard_exhausted: bool = False
    error: str = ""
    lrt_error: str = ""
    theta_hat: float = float("nan")
    theta_var: float = float("nan")
    boundary_hit: bool = False
    omega: float = float("nan")
    p_lrt: float = float("nan")
    p_pearson: float = float("nan")
    p_spearman: float = float("nan")
    p_kendall: float = float("nan")
    spearman_sample: float = float("nan")
    spearman_copula: float = float("nan")


def run_replicate(task: ReplicateTask) -> ReplicateOutcome:
    """生成一个数据集并完成两阶段拟合、刀切法、独立性检验和相关性检验"""
    config = task.config
    rng = make_rng(config.seed, STREAM_SIMULATION, task.cell, task.rep)
    outcome = ReplicateOutcome(cell=task.cell, rep=task.rep)
    setting = config.setting(task.label)

    try:
        if config.covariate_mode == "none":
            data, redraws = sample_pair(config.n, setting.margin_i.to_params(),
                                        setting.margin_j.to_params(), task.theta, rng)
            spec = None
        else:
            data, covariate, redraws = sample_pair_regression(config.n, setting, task.theta, rng)
            spec = covariate_spec(covariate)
    except GuardExhaustedError as e:
        outcome.guard_exhausted = True
        outcome.redraws = MAX_REDRAWS
        outcome.error = str(e)
        return outcome
    outcome.redraws = redraws

    corr = correlation_tests(data.x_i, data.x_j)
    outcome.p_pearson = corr.pearson
    outcome.p_spearman = corr.spearman
    outcome.p_kendall = corr.kendall
    outcome.spearman_sample = corr.spearman_stat

    try:
        fit = two_stage_fit(data, spec, spec)
        jack = jackknife_cov(data, fit)
    except (EstimationError, NumericalError) as e:
        outcome.error = type(e).__name__
        logger.debug(f"单元 {task.cell} 重复 {task.rep} 拟合失败: {e}")
        return outcome

    outcome.theta_hat = fit.theta_hat
    outcome.theta_var = jack.theta_var
    outcome.boundary_hit = fit.status.boundary_hit
    outcome.spearman_copula = theta_to_spearman_rho(fit.theta_hat)

    # 检验失败不影响已记录的估计值
    fit.theta_var = jack.theta_var
    try:
        lrt = rescaled_lrt(data, fit, theta0=0.0)
    except (EstimationError, NumericalError) as e:
        outcome.lrt_error = type(e).__name__
        logger.debug(f"单元 {task.cell} 重复 {task.rep} 似然比检验失败: {e}")
        return outcome
    outcome.omega = lrt.omega
    outcome.p_lrt = lrt.p_value
    return outcome


def _rate(p_values: np.ndarray, alpha: float) -> float:
    valid = p_values[np.isfinite(p_values)]
    return float(np.mean(valid < alpha)) if valid.size else float("nan")


def _summarize_cell(
    cell: int,
    theta: float,
    label: str,
    outcomes: List[ReplicateOutcome],
    alpha: float
) -> Dict:
    frame = pd.DataFrame([asdict(o) for o in outcomes])
    estimates = frame["theta_hat"].to_numpy(dtype=float)
    ok = np.isfinite(estimates)
    est = estimates[ok]
    infeasible = bool(frame["guard_exhausted"].any())
    record = {
        "cell": cell,
        "label": label,
        "theta": theta,
        "reps": len(outcomes),
        "n_valid": int(ok.sum()),
        "n_failed": int((~ok).sum()),
        "infeasible": infeasible,
        "discarded": int(frame["redraws"].sum()),
        "boundary_hits": int(frame["boundary_hit"].sum()),
        "theta_mean": float(np.mean(est)) if est.size else float("nan"),
        "theta_median": float(np.median(est)) if est.size else float("nan"),
        "theta_sd": float(np.std(est, ddof=1)) if est.size > 1 else float("nan"),
        "empirical_var": float(np.var(est, ddof=1)) if est.size > 1 else float("nan"),
        "jackknife_var_mean": float(np.nanmean(frame["theta_var"])) if est.size else float("nan"),
        "omega_median": float(np.nanmedian(frame["omega"])) if np.any(np.isfinite(frame["omega"])) else float("nan"),
        "kendall_tau_true": theta_to_kendall_tau(theta),
        "spearman_true": theta_to_spearman_rho(theta),
        "spearman_copula_mean": float(np.nanmean(frame["spearman_copula"])) if est.size else float("nan"),
        "spearman_sample_mean": float(np.nanmean(frame["spearman_sample"])) if np.any(np.isfinite(frame["spearman_sample"])) else float("nan"),
    }
    record["n_lrt_failed"] = int((ok & (frame["lrt_error"] != "")).sum())
    # 每个检验的拒绝率只在它自己给出有限p值的重复上计算
    for name in ("lrt", "pearson", "spearman", "kendall"):
        record[f"reject_{name}"] = _rate(frame[f"p_{name}"].to_numpy(dtype=float), alpha)
    record["bias"] = record["theta_mean"] - theta
    return record


# 整理后结果中各 (估计量, 指标) 对应的汇总列
_BIAS_METRICS = (
    ("two_stage", "mean", "theta_mean"),
    ("two_stage", "median", "theta_median"),
    ("two_stage", "sd", "theta_sd"),
    ("two_stage", "bias", "bias"),
    ("two_stage", "empirical_var", "empirical_var"),
    ("two_stage", "boundary_hits", "boundary_hits"),
    ("jackknife", "mean_var", "jackknife_var_mean"),
    ("copula_spearman", "mean", "spearman_copula_mean"),
    ("sample_spearman", "mean", "spearman_sample_mean"),
)
_POWER_METRICS = (
    ("lrt", "rejection_rate", "reject_lrt"),
    ("lrt", "omega_median", "omega_median"),
    ("pearson", "rejection_rate", "reject_pearson"),
    ("spearman", "rejection_rate", "reject_spearman"),
    ("kendall", "rejection_rate", "reject_kendall"),
)
_GUARD_METRICS = (
    ("guard", "discarded", "discarded"),
    ("guard", "failed_fits", "n_failed"),
)


@dataclass
class StudyResult:
    """
    模拟研究结果

    Attributes:
        config: 模拟配置
        study: bias / power / both
        cells: 每个单元一行的汇总表
        replicates: 每个重复一行的明细表
    """

    config: SimConfig
    study: str
    cells: pd.DataFrame
    replicates: pd.DataFrame

    def cell(self, theta: float, label: str) -> pd.Series:
        match = self.cells[(self.cells["theta"] == theta) & (self.cells["label"] == label)]
        if match.empty:
            raise ValidationError(f"没有单元 theta={theta}, label={label}")
        return match.iloc[0]

    def _metrics(self):
        metrics = []
        if self.study in ("bias", "both"):
            metrics += _BIAS_METRICS
        if self.study in ("power", "both"):
            metrics += _POWER_METRICS
        return metrics + list(_GUARD_METRICS)

    def to_frame(self) -> pd.DataFrame:
        """整理为长表：每行一个 (单元, 估计量, 指标)"""
        rows = []
        for _, record in self.cells.iterrows():
            for estimator, metric, column in self._metrics():
                rows.append({
                    "cell": int(record["cell"]),
                    "label": record["label"],
                    "theta": float(record["theta"]),
                    "estimator": estimator,
                    "metric": metric,
                    "value": float(record[column]),
                })
        return pd.DataFrame(rows, columns=["cell", "label", "theta", "estimator", "metric", "value"])

    def to_summary(self) -> Dict:
        """JSON汇总：配置回显与单元汇总"""
        return {
            "study": self.study,
            "config": self.config.echo(),
            "n_cells": int(len(self.cells)),
            "infeasible_cells": self.cells.loc[self.cells["infeasible"], "label"].tolist(),
            "cells": self.cells.to_dict(orient="records"),
        }


def run_study(
    config: SimConfig,
    study: StudyKind = "both",
    threads: int = 1,
    show_progress: bool = False
) -> StudyResult:
    """
    运行模拟研究：每个 (theta, 设定) 单元生成 reps 个独立数据集

    Args:
        config: 模拟配置
        study: bias（偏差/方差）、power（功效）或 both
        threads: 并行进程数
        show_progress: 是否显示进度条

    Returns:
        StudyResult，给定 seed 时结果确定
    """
    if study not in ("bias", "power", "both"):
        raise ValidationError(f"未知的研究类型: {study}")
    cells = config.cells()
    tasks = [
        ReplicateTask(config=config, cell=cell, theta=theta, label=label, rep=rep)
        for cell, theta, label in cells
        for rep in range(config.reps)
    ]
    logger.info(f"模拟研究 {config.name}: {len(cells)} 个单元 x {config.reps} 次重复, n={config.n}")
    outcomes = run_tasks(run_replicate, tasks, threads=threads,
                         show_progress=show_progress, desc="simulate",
                         chunksize=max(1, config.reps // 4))

    by_cell: Dict[int, List[ReplicateOutcome]] = {cell: [] for cell, _, _ in cells}
    for outcome in outcomes:
        by_cell[outcome.cell].append(outcome)

    records = []
    for cell, theta, label in cells:
        record = _summarize_cell(cell, theta, label, by_cell[cell], config.alpha)
        if record["infeasible"]:
            logger.warning(f"单元 theta={theta}, {label} 重抽次数用尽，标记为不可行")
        records.append(record)

    replicates = pd.DataFrame([asdict(o) for o in outcomes])
    return StudyResult(config=config, study=study, cells=pd.DataFrame(records),
                       replicates=replicates)


def run_bias_variance_study(config: SimConfig, threads: int = 1,
                            show_progress: bool = False) -> StudyResult:
    """偏差、经验方差与刀切法方差研究"""
    return run_study(config, "bias", threads=threads, show_progress=show_progress)


def run_power_study(config: SimConfig, threads: int = 1,
                    show_progress: bool = False) -> StudyResult:
    """重标度似然比检验与相关性检验的拒绝率研究"""
    return run_study(config, "power", threads=threads, show_progress=show_progress)


__all__ = [
    "DEFAULT_THETA_GRID",
    "DEFAULT_P_PAIRS",
    "DEFAULT_MU_PHI_PAIRS",
    "DEFAULT_RHO_SETTINGS",
    "PRESETS",
    "MarginSetting",
    "CellSetting",
    "RegressionTruth",
    "SimConfig",
    "CorrelationTests",
    "ReplicateTask",
    "ReplicateOutcome",
    "StudyResult",
    "sample_pair",
    "sample_pair_regression",
    "covariate_spec",
    "correlation_tests",
    "run_replicate",
    "run_study",
    "run_bias_variance_study",
    "run_power_study",
]
