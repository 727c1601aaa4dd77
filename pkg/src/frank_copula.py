"""
Frank copula 模块

提供Frank copula的分布函数、条件分布函数、密度、条件分布的逆（用于抽样），
以及依赖参数 theta 与 Kendall tau / Spearman rho 之间的映射。

**数值说明：**
- |theta| < 1e-8 时所有函数切换到独立copula的极限形式（C=uv, c=1, C_{v|u}=v, 逆=w），
  因为闭式表达式在 theta=0 处为 0/0。
- theta > 0 且 u+v > 1 时，利用Frank copula的径向对称性 C(u,v) = u+v-1+C(1-u,1-v)
  在反射点上计算，避免 e^{-theta} 量级的相消误差。
- 分布函数采用 -(1/theta) 前因子，保证 C(1,1)=1。
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import integrate, optimize

from config import DomainError, THETA_ZERO_EPS


ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class FrankTheta:
    """
    Frank copula 依赖参数

    theta 取任意实数；theta=0 对应独立copula（连续延拓）。
    """

    theta: float

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise DomainError(f"theta 必须为有限实数: {self.theta}")
        object.__setattr__(self, "theta", float(self.theta))

    def __float__(self) -> float:
        return self.theta

    @property
    def is_independence(self) -> bool:
        return abs(self.theta) < THETA_ZERO_EPS


ThetaLike = Union[float, FrankTheta]


def _theta(theta: ThetaLike) -> float:
    value = float(theta)
    if not np.isfinite(value):
        raise DomainError(f"theta 必须为有限实数: {theta}")
    return value


def _unit(x: ArrayLike, name: str, open_interval: bool = False) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if open_interval:
        bad = (arr <= 0) | (arr >= 1)
        interval = "(0, 1)"
    else:
        bad = (arr < 0) | (arr > 1)
        interval = "[0, 1]"
    if np.any(~np.isfinite(arr)) or np.any(bad):
        raise DomainError(f"{name} 必须位于 {interval}，当前值: {x}")
    return arr


def _out(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


# ============================================================================
# 基本函数
# ============================================================================

def _cdf_direct(u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    ratio = np.expm1(-t * u) * np.expm1(-t * v) / np.expm1(-t)
    return -np.log1p(ratio) / t


def frank_cdf(u: ArrayLike, v: ArrayLike, theta: ThetaLike) -> ArrayLike:
    """
    Frank copula 分布函数

    C(u,v; theta) = -(1/theta) ln(1 + (e^{-theta u}-1)(e^{-theta v}-1)/(e^{-theta}-1))，
    theta=0 时为 u*v。结果截断在Fréchet界 [max(u+v-1,0), min(u,v)] 内。

    Args:
        u: 取值于 [0, 1]
        v: 取值于 [0, 1]
        theta: 依赖参数

    Returns:
        C(u, v)

    Raises:
        DomainError: u 或 v 超出单位区间

    Example:
        >>> frank_cdf(0.3, 1.0, 2.0)
        0.3
    """
    t = _theta(theta)
    ub, vb = np.broadcast_arrays(_unit(u, "u"), _unit(v, "v"))
    if abs(t) < THETA_ZERO_EPS:
        value = ub * vb
    else:
        value = np.empty(ub.shape, dtype=float)
        reflect = (ub + vb > 1) if t > 0 else np.zeros(ub.shape, dtype=bool)
        keep = ~reflect
        value[keep] = _cdf_direct(ub[keep], vb[keep], t)
        value[reflect] = (
            ub[reflect] + vb[reflect] - 1
            + _cdf_direct(1 - ub[reflect], 1 - vb[reflect], t)
        )
    lower = np.maximum(ub + vb - 1, 0.0)
    upper = np.minimum(ub, vb)
    return _out(np.clip(value, lower, upper))


def _cond_direct(v: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
    g_v = np.expm1(-t * v)
    denom = np.expm1(-t) + np.expm1(-t * u) * g_v
    return np.exp(-t * u) * g_v / denom


def frank_cond_cdf(v: ArrayLike, u: ArrayLike, theta: ThetaLike) -> ArrayLike:
    """
    条件分布函数 C_{v|u}(v | u) = dC(u,v)/du

    = e^{-theta u}(e^{-theta v}-1) / [(e^{-theta}-1) + (e^{-theta u}-1)(e^{-theta v}-1)]，
    theta=0 时为 v。关于 v 单调不减，v=0 时为0，v=1 时为1。

    由交换性，dC(u,v)/dv 即 frank_cond_cdf(u, v, theta)。
    """
    t = _theta(theta)
    vb, ub = np.broadcast_arrays(_unit(v, "v"), _unit(u, "u"))
    if abs(t) < THETA_ZERO_EPS:
        value = vb.astype(float, copy=True)
    else:
        value = np.empty(vb.shape, dtype=float)
        reflect = (ub + vb > 1) if t > 0 else np.zeros(vb.shape, dtype=bool)
        keep = ~reflect
        value[keep] = _cond_direct(vb[keep], ub[keep], t)
        value[reflect] = 1 - _cond_direct(1 - vb[reflect], 1 - ub[reflect], t)
    return _out(np.clip(value, 0.0, 1.0))


def frank_logpdf(u: ArrayLike, v: ArrayLike, theta: ThetaLike) -> ArrayLike:
    """Frank copula 对数密度，要求 (u, v) 位于开单位正方形"""
    t = _theta(theta)
    ub, vb = np.broadcast_arrays(
        _unit(u, "u", open_interval=True), _unit(v, "v", open_interval=True)
    )
    if abs(t) < THETA_ZERO_EPS:
        return _out(np.zeros(ub.shape, dtype=float))
    if t > 0:
        # 径向对称：c(u,v) = c(1-u,1-v)
        reflect = ub + vb > 1
        ub = np.where(reflect, 1 - ub, ub)
        vb = np.where(reflect, 1 - vb, vb)
    denom = np.expm1(-t) + np.expm1(-t * ub) * np.expm1(-t * vb)
    value = np.log(-t * np.expm1(-t)) - t * (ub + vb) - 2 * np.log(np.abs(denom))
    return _out(value)


def frank_pdf(u: ArrayLike, v: ArrayLike, theta: ThetaLike) -> ArrayLike:
    """
    Frank copula 密度

    c(u,v) = -theta(e^{-theta}-1)e^{-theta(u+v)} / [(e^{-theta u}-1)(e^{-theta v}-1)+(e^{-theta}-1)]^2，
    theta=0 时为1。

    Raises:
        DomainError: (u, v) 不在开单位正方形内
    """
    return _out(np.exp(frank_logpdf(u, v, theta)))


def _inv_direct(w: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
    arg = w * np.expm1(-t) / (w + np.exp(-t * u) * (1 - w))
    return -np.log1p(arg) / t


def frank_inv_cond(w: ArrayLike, u: ArrayLike, theta: ThetaLike) -> ArrayLike:
    """
    条件分布的逆：求 v 使 C_{v|u}(v | u) = w

    v = -(1/theta) ln(1 + w(e^{-theta}-1) / (w + e^{-theta u}(1-w)))，theta=0 时返回 w。
    theta > 0 且结果大于0.5时，在反射点 (1-w, 1-u) 上重新计算。
    """
    t = _theta(theta)
    wb, ub = np.broadcast_arrays(_unit(w, "w"), _unit(u, "u"))
    if abs(t) < THETA_ZERO_EPS:
        return _out(wb.astype(float, copy=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        value = _inv_direct(wb, ub, t)
        if t > 0:
            upper = ~(value <= 0.5)
            if np.any(upper):
                value = np.where(upper, 1 - _inv_direct(1 - wb, 1 - ub, t), value)
    value = np.where(wb == 0, 0.0, np.where(wb == 1, 1.0, value))
    return _out(np.clip(value, 0.0, 1.0))


def sample_frank(n: int, theta: ThetaLike, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    通过Rosenblatt逆变换从Frank copula抽样

    U, W 独立同分布 Uniform(0,1)，V = C_{v|u}^{-1}(W | U)。

    Returns:
        (u, v) 两个长度为 n 的数组
    """
    u = rng.random(n)
    w = rng.random(n)
    return u, np.asarray(frank_inv_cond(w, u, theta), dtype=float)


# ============================================================================
# 依赖度量映射
# ============================================================================

def _debye(order: int, x: float) -> float:
    """Debye函数 D_k(x) = (k/x^k) * integral_0^x t^k/(e^t - 1) dt，负 x 通过 |x| 计算后换算"""
    def integrand(t: float) -> float:
        if t == 0:
            return 1.0 if order == 1 else 0.0
        return t ** order / np.expm1(t)

    value, _ = integrate.quad(integrand, 0.0, abs(x), epsabs=1e-13, epsrel=1e-12)
    d_abs = order * value / abs(x) ** order
    if x > 0:
        return d_abs
    # D_k(-x) = D_k(x) + k x / (k + 1)
    return d_abs + order * abs(x) / (order + 1)


def theta_to_kendall_tau(theta: ThetaLike) -> float:
    """
    Frank copula 的 Kendall tau

    tau = 1 - (4/theta)(1 - D1(theta))，theta=0 时为0，是 theta 的奇函数。

    Example:
        >>> theta_to_kendall_tau(0.0)
        0.0
    """
    t = _theta(theta)
    if abs(t) < THETA_ZERO_EPS:
        return 0.0
    return float(1.0 - 4.0 / t * (1.0 - _debye(1, t)))


def theta_to_spearman_rho(theta: ThetaLike) -> float:
    """
    Frank copula 的 Spearman rho

    rho_s = 1 - (12/theta)(D1(theta) - D2(theta))，
    即 12 * ∫∫ C(u,v) du dv - 3 的闭式结果。
    """
    t = _theta(theta)
    if abs(t) < THETA_ZERO_EPS:
        return 0.0
    return float(1.0 - 12.0 / t * (_debye(1, t) - _debye(2, t)))


def kendall_tau_to_theta(tau: float, bound: float = 100.0) -> float:
    """
    由 Kendall tau 反解 theta（单调映射的数值求根）

    Raises:
        DomainError: tau 超出 theta 在 [-bound, bound] 内可达的范围
    """
    if not -1 < tau < 1:
        raise DomainError(f"tau 必须位于 (-1, 1): {tau}")
    if tau == 0:
        return 0.0
    lo_tau, hi_tau = theta_to_kendall_tau(-bound), theta_to_kendall_tau(bound)
    if not lo_tau < tau < hi_tau:
        raise DomainError(f"tau={tau} 超出 theta∈[-{bound}, {bound}] 的可达范围")
    return float(optimize.brentq(lambda t: theta_to_kendall_tau(t) - tau, -bound, bound,
                                 xtol=1e-12))


__all__ = [
    "FrankTheta",
    "frank_cdf",
    "frank_cond_cdf",
    "frank_pdf",
    "frank_logpdf",
    "frank_inv_cond",
    "sample_frank",
    "theta_to_kendall_tau",
    "theta_to_spearman_rho",
    "kendall_tau_to_theta",
]
