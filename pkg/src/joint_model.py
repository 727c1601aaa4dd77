"""
双变量联合模型模块

两个零膨胀Beta边际通过Frank copula连接的混合型联合密度。按两个物种是否为零分为四种情形：

- S1：两者均非零，c(F_i(x_i), F_j(x_j)) f_i(x_i) f_j(x_j)
- S2：x_i = 0 < x_j，f_j(x_j) C_{i|j}(p_i | F_j(x_j))
- S3：x_j = 0 < x_i，f_i(x_i) C_{j|i}(p_j | F_i(x_i))
- S4：两者均为零，C(p_i, p_j)（概率质量）

S1 为密度值，S4 为概率质量，对数似然直接混合二者。
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from config import logger, DomainError, ValidationError, LOG_FLOOR
from src.frank_copula import (
    ThetaLike,
    frank_cdf,
    frank_cond_cdf,
    frank_logpdf,
)
from src.zib_margin import ZibParams, clamp_unit_interval, zib_cdf, zib_logpdf


ArrayLike = Union[float, np.ndarray]

# copula 密度只在开单位正方形内有定义
_OPEN_EPS = 1e-15


class Scenario(IntEnum):
    """一对观测的零/非零情形"""

    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4


def _check_obs(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0 or value >= 1:
        raise DomainError(f"{name} 必须位于 [0, 1)，当前值: {value}")
    return value


def classify_scenario(x_i: float, x_j: float) -> Scenario:
    """
    判断一对观测所属情形

    Raises:
        DomainError: 观测不在 [0, 1)

    Example:
        >>> classify_scenario(0.0, 0.3)
        <Scenario.S2: 2>
    """
    x_i = _check_obs(x_i, "x_i")
    x_j = _check_obs(x_j, "x_j")
    if x_i > 0 and x_j > 0:
        return Scenario.S1
    if x_i == 0 and x_j > 0:
        return Scenario.S2
    if x_j == 0 and x_i > 0:
        return Scenario.S3
    return Scenario.S4


def _scenario_codes(x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    codes = np.full(x_i.shape, int(Scenario.S4), dtype=int)
    codes[(x_i > 0) & (x_j > 0)] = int(Scenario.S1)
    codes[(x_i == 0) & (x_j > 0)] = int(Scenario.S2)
    codes[(x_i > 0) & (x_j == 0)] = int(Scenario.S3)
    return codes


@dataclass(frozen=True)
class PairObservation:
    """单个样本上两个物种的相对丰度及其情形"""

    x_i: float
    x_j: float
    scenario: Scenario

    @classmethod
    def from_values(cls, x_i: float, x_j: float) -> "PairObservation":
        return cls(float(x_i), float(x_j), classify_scenario(x_i, x_j))


@dataclass
class PairData:
    """
    一对物种在 n 个样本上的相对丰度

    构造时校验取值并把数值上等于1的值截断为 1 - 1e-10。

    Attributes:
        x_i: 物种 i 的相对丰度
        x_j: 物种 j 的相对丰度
        names: 物种名称 (i, j)

    Example:
        >>> data = PairData(np.array([0.0, 0.2]), np.array([0.1, 0.0]))
        >>> data.counts()[Scenario.S2]
        1
    """

    x_i: np.ndarray
    x_j: np.ndarray
    names: Tuple[str, str] = ("i", "j")

    def __post_init__(self):
        self.x_i = clamp_unit_interval(self.x_i)
        self.x_j = clamp_unit_interval(self.x_j)
        if self.x_i.size != self.x_j.size:
            raise ValidationError(
                f"两个物种的观测数不一致: {self.x_i.size} vs {self.x_j.size}"
            )
        if self.x_i.size == 0:
            raise ValidationError("观测数据不能为空")
        self.names = tuple(self.names)

    @property
    def n(self) -> int:
        return self.x_i.size

    @property
    def scenarios(self) -> np.ndarray:
        """每个观测的情形编号（1-4）"""
        return _scenario_codes(self.x_i, self.x_j)

    @property
    def n_nonzero_i(self) -> int:
        return int(np.count_nonzero(self.x_i))

    @property
    def n_nonzero_j(self) -> int:
        return int(np.count_nonzero(self.x_j))

    @property
    def n_co_nonzero(self) -> int:
        return int(np.count_nonzero((self.x_i > 0) & (self.x_j > 0)))

    def counts(self) -> Dict[Scenario, int]:
        codes = self.scenarios
        return {s: int(np.sum(codes == int(s))) for s in Scenario}

    def take(self, rows) -> "PairData":
        """按行取子集（用于刀切法和自助法）"""
        return PairData(self.x_i[rows], self.x_j[rows], names=self.names)

    def swap(self) -> "PairData":
        """交换两个物种的角色"""
        return PairData(self.x_j.copy(), self.x_i.copy(), names=(self.names[1], self.names[0]))

    def observation(self, index: int) -> PairObservation:
        return PairObservation.from_values(self.x_i[index], self.x_j[index])


def _open_unit(u: np.ndarray) -> np.ndarray:
    return np.clip(u, _OPEN_EPS, 1.0 - _OPEN_EPS)


class PairLikelihood:
    """
    固定边际参数下关于 theta 的联合对数似然

    与 theta 无关的量（边际对数密度、边际分布函数值、零点质量）在构造时一次算好，
    每次求值只计算copula部分，适合在 theta 上做一维优化和数值求导。

    Attributes:
        data: 成对观测
        gi / gj: 物种 i / j 的边际参数（标量或逐观测）
        floored: 最近一次求值是否有项下溢并被替换为 LOG_FLOOR
    """

    def __init__(self, data: PairData, gi: ZibParams, gj: ZibParams):
        self.data = data
        self.gi = gi
        self.gj = gj
        self.floored = False
        self._warned = False

        n = data.n
        codes = data.scenarios
        self._s1 = np.flatnonzero(codes == int(Scenario.S1))
        self._s2 = np.flatnonzero(codes == int(Scenario.S2))
        self._s3 = np.flatnonzero(codes == int(Scenario.S3))
        self._s4 = np.flatnonzero(codes == int(Scenario.S4))

        p_i = np.broadcast_to(np.asarray(gi.p, dtype=float), (n,))
        p_j = np.broadcast_to(np.asarray(gj.p, dtype=float), (n,))
        log_fi = np.asarray(zib_logpdf(data.x_i, gi), dtype=float).reshape(-1)
        log_fj = np.asarray(zib_logpdf(data.x_j, gj), dtype=float).reshape(-1)
        u_i = np.asarray(zib_cdf(data.x_i, gi), dtype=float).reshape(-1)
        u_j = np.asarray(zib_cdf(data.x_j, gj), dtype=float).reshape(-1)

        self._margin = np.zeros(n, dtype=float)
        self._margin[self._s1] = log_fi[self._s1] + log_fj[self._s1]
        self._margin[self._s2] = log_fj[self._s2]
        self._margin[self._s3] = log_fi[self._s3]

        self._u1_i = _open_unit(u_i[self._s1])
        self._u1_j = _open_unit(u_j[self._s1])
        self._p2_i, self._u2_j = p_i[self._s2], u_j[self._s2]
        self._p3_j, self._u3_i = p_j[self._s3], u_i[self._s3]
        self._p4_i, self._p4_j = p_i[self._s4], p_j[self._s4]

    @property
    def n(self) -> int:
        return self.data.n

    def terms(self, theta: ThetaLike) -> np.ndarray:
        """每个观测的对数联合密度，下溢项替换为 LOG_FLOOR"""
        copula = np.zeros(self.n, dtype=float)
        with np.errstate(divide="ignore"):
            if self._s1.size:
                copula[self._s1] = frank_logpdf(self._u1_i, self._u1_j, theta)
            if self._s2.size:
                copula[self._s2] = np.log(frank_cond_cdf(self._p2_i, self._u2_j, theta))
            if self._s3.size:
                copula[self._s3] = np.log(frank_cond_cdf(self._p3_j, self._u3_i, theta))
            if self._s4.size:
                copula[self._s4] = np.log(frank_cdf(self._p4_i, self._p4_j, theta))
        values = self._margin + copula

        bad = ~np.isfinite(values)
        self.floored = bool(np.any(bad))
        if self.floored:
            if not self._warned:
                logger.warning(
                    f"联合对数似然有 {int(bad.sum())} 项下溢（theta={float(theta):.6g}），"
                    f"已替换为 {LOG_FLOOR}"
                )
                self._warned = True
            values = np.where(bad, LOG_FLOOR, values)
        return values

    def loglik(self, theta: ThetaLike) -> float:
        return float(np.sum(self.terms(theta)))

    __call__ = loglik


def joint_logdensity(
    x_i: ArrayLike,
    x_j: ArrayLike,
    gi: ZibParams,
    gj: ZibParams,
    theta: ThetaLike
) -> ArrayLike:
    """联合密度的对数（逐观测），下溢项为 LOG_FLOOR"""
    scalar = np.ndim(x_i) == 0 and np.ndim(x_j) == 0
    xi = np.atleast_1d(np.asarray(x_i, dtype=float))
    xj = np.atleast_1d(np.asarray(x_j, dtype=float))
    for name, arr in (("x_i", xi), ("x_j", xj)):
        if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr >= 1):
            raise DomainError(f"{name} 必须位于 [0, 1)")
    values = PairLikelihood(PairData(xi, xj), gi, gj).terms(theta)
    return float(values[0]) if scalar else values


def joint_density(
    x_i: ArrayLike,
    x_j: ArrayLike,
    gi: ZibParams,
    gj: ZibParams,
    theta: ThetaLike
) -> ArrayLike:
    """
    混合型联合密度

    Args:
        x_i: 物种 i 的相对丰度，取值于 [0, 1)
        x_j: 物种 j 的相对丰度，取值于 [0, 1)
        gi: 物种 i 的边际参数
        gj: 物种 j 的边际参数
        theta: Frank copula 依赖参数

    Returns:
        S1-S3 为密度值，S4 为概率质量 C(p_i, p_j)

    Raises:
        DomainError: 观测不在 [0, 1)

    Example:
        >>> g = ZibParams(p=0.4, mu=0.5, phi=2.0)
        >>> round(joint_density(0.0, 0.0, g, g, 0.0), 12)
        0.16
    """
    logd = joint_logdensity(x_i, x_j, gi, gj, theta)
    return float(np.exp(logd)) if np.ndim(logd) == 0 else np.exp(logd)


def pair_loglik(
    data: PairData,
    gi: ZibParams,
    gj: ZibParams,
    theta: ThetaLike
) -> float:
    """
    成对对数似然：各观测对数联合密度之和

    theta = 0 时恰为两个边际对数似然之和。
    """
    return PairLikelihood(data, gi, gj).loglik(theta)


def scenario_probabilities(
    gi: ZibParams,
    gj: ZibParams,
    theta: ThetaLike
) -> Dict[Scenario, float]:
    """
    四种情形的总概率

    S4 = C(p_i, p_j)，S2 = p_i - C，S3 = p_j - C，S1 = 1 - p_i - p_j + C。

    Raises:
        ValidationError: 参数不是标量
    """
    if not (gi.is_scalar and gj.is_scalar):
        raise ValidationError("scenario_probabilities 只接受标量参数")
    both_zero = float(frank_cdf(gi.p, gj.p, theta))
    return {
        Scenario.S1: 1.0 - gi.p - gj.p + both_zero,
        Scenario.S2: gi.p - both_zero,
        Scenario.S3: gj.p - both_zero,
        Scenario.S4: both_zero,
    }


__all__ = [
    "Scenario",
    "PairObservation",
    "PairData",
    "PairLikelihood",
    "classify_scenario",
    "joint_density",
    "joint_logdensity",
    "pair_loglik",
    "scenario_probabilities",
]
