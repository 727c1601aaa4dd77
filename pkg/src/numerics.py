"""
数值计算基础模块

提供特殊函数（对数伽马、双伽马、三伽马、正则化不完全Beta及其逆）和标量/向量优化器
（Brent有界一维最大化、带步长减半的牛顿-拉夫森法），供所有统计模块使用。

所有函数均为输入的纯函数，可在任意多个工作进程中并发调用。
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize, special

from config import (
    logger,
    DomainError,
    NumericalError,
    SPECIAL_TOL,
    OPTIM_TOL,
    MAX_ITER,
    MAX_HALVINGS,
)


ArrayLike = Union[float, np.ndarray]


@dataclass
class OptimResult:
    """
    优化结果

    Attributes:
        x: 最优点（Brent为标量，牛顿法为参数向量）
        fun: 最优点处的目标函数值
        iterations: 迭代次数
        converged: 是否满足停止容差
        hit_boundary: 结果是否落在搜索区间端点（容差内）
        used_fallback: 牛顿法是否因Hessian奇异而改用最速上升
        gradient_norm: 牛顿法结束时的梯度范数
    """

    x: Union[float, np.ndarray]
    fun: float
    iterations: int
    converged: bool
    hit_boundary: bool = False
    used_fallback: bool = False
    gradient_norm: float = float("nan")

    @property
    def argmin_or_argmax(self) -> Union[float, np.ndarray]:
        return self.x

    @property
    def objective_value(self) -> float:
        return self.fun


def _as_output(value: np.ndarray, scalar: bool) -> ArrayLike:
    return float(value) if scalar else value


def _check_positive(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} 必须为正的有限实数，当前值: {x}")
    return arr


# ============================================================================
# 特殊函数
# ============================================================================

def log_gamma(x: ArrayLike) -> ArrayLike:
    """
    对数伽马函数 ln Γ(x)

    Args:
        x: 正实数（标量或数组）

    Returns:
        ln Γ(x)

    Raises:
        DomainError: x <= 0

    Example:
        >>> log_gamma(0.5)  # ln(sqrt(pi))
        0.5723649429247001
    """
    arr = _check_positive(x, "x")
    return _as_output(special.gammaln(arr), arr.ndim == 0)


def digamma(x: ArrayLike) -> ArrayLike:
    """双伽马函数 ψ(x) = d/dx ln Γ(x)"""
    arr = _check_positive(x, "x")
    return _as_output(special.digamma(arr), arr.ndim == 0)


def trigamma(x: ArrayLike) -> ArrayLike:
    """三伽马函数 ψ'(x)"""
    arr = _check_positive(x, "x")
    return _as_output(special.polygamma(1, arr), arr.ndim == 0)


def _check_beta_args(x: ArrayLike, a: ArrayLike, b: ArrayLike, name: str):
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0) or np.any(xa > 1):
        raise DomainError(f"{name} 必须位于 [0, 1]，当前值: {x}")
    aa = _check_positive(a, "a")
    ba = _check_positive(b, "b")
    return xa, aa, ba


def reg_inc_beta(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    正则化不完全Beta函数 I_x(a, b)

    即Beta(a, b)分布的累积分布函数。满足 I_0 = 0, I_1 = 1，关于x单调不减，
    以及对称恒等式 I_x(a, b) = 1 - I_{1-x}(b, a)。

    Args:
        x: 取值于 [0, 1]
        a: 第一形状参数，> 0
        b: 第二形状参数，> 0

    Returns:
        I_x(a, b)

    Raises:
        DomainError: 参数超出定义域
    """
    xa, aa, ba = _check_beta_args(x, a, b, "x")
    value = np.clip(special.betainc(aa, ba, xa), 0.0, 1.0)
    scalar = xa.ndim == 0 and aa.ndim == 0 and ba.ndim == 0
    return _as_output(value, scalar)


def inv_reg_inc_beta(q: ArrayLike, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    正则化不完全Beta函数的逆：求x使 I_x(a, b) = q

    在SciPy的初值上再做一步受保护的牛顿修正；q=0 与 q=1 直接返回 0 与 1。

    Args:
        q: 概率，取值于 [0, 1]
        a: 第一形状参数，> 0
        b: 第二形状参数，> 0

    Returns:
        分位数 x

    Raises:
        DomainError: 参数超出定义域
    """
    qa, aa, ba = _check_beta_args(q, a, b, "q")
    qa, aa, ba = np.broadcast_arrays(qa, aa, ba)
    x = np.asarray(special.betaincinv(aa, ba, qa), dtype=float)
    x = np.clip(x, 0.0, 1.0)

    interior = (qa > 0) & (qa < 1) & (x > 0) & (x < 1)
    if np.any(interior):
        xi, ai, bi, qi = x[interior], aa[interior], ba[interior], qa[interior]
        err = special.betainc(ai, bi, xi) - qi
        log_dens = (
            (ai - 1) * np.log(xi) + (bi - 1) * np.log1p(-xi) - special.betaln(ai, bi)
        )
        with np.errstate(over="ignore", invalid="ignore"):
            step = err / np.exp(log_dens)
            candidate = xi - step
        ok = np.isfinite(candidate) & (candidate > 0) & (candidate < 1)
        improved = np.zeros_like(ok)
        improved[ok] = (
            np.abs(special.betainc(ai[ok], bi[ok], candidate[ok]) - qi[ok]) < np.abs(err[ok])
        )
        xi = np.where(improved, candidate, xi)
        x[interior] = xi

    x = np.where(qa == 0, 0.0, np.where(qa == 1, 1.0, x))
    return _as_output(x, x.ndim == 0)


# ============================================================================
# 优化器
# ============================================================================

def _finite_or_raise(value: float, where: str, point) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"目标函数在 {where}={point} 处取非有限值: {value}")
    return float(value)


def brent_optimize(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = OPTIM_TOL
) -> OptimResult:
    """
    Brent法一维有界最大化

    在 [lo, hi] 上最小化 -f（SciPy bounded Brent），随后与两端点的函数值比较：
    若某端点不劣于内部解，则返回该端点并设置 hit_boundary。

    Args:
        f: 标量目标函数，要求在 [lo, hi] 上取有限值
        lo: 区间下界
        hi: 区间上界
        tol: 自变量容差

    Returns:
        OptimResult，x 为最大值点

    Raises:
        DomainError: lo >= hi
        NumericalError: 目标函数取非有限值

    Example:
        >>> res = brent_optimize(lambda x: -(x - 2) ** 2, 0.0, 5.0)
        >>> round(res.x, 6)
        2.0
    """
    if not lo < hi:
        raise DomainError(f"搜索区间无效: lo={lo}, hi={hi}")

    def neg(x: float) -> float:
        return -_finite_or_raise(f(x), "x", x)

    res = optimize.minimize_scalar(
        neg,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": tol, "maxiter": MAX_ITER},
    )
    best_x, best_f = float(res.x), -float(res.fun)
    iterations = int(getattr(res, "nfev", 0))
    converged = bool(res.success)

    hit_boundary = False
    for end in (lo, hi):
        f_end = _finite_or_raise(f(end), "x", end)
        if f_end >= best_f:
            best_x, best_f, hit_boundary = float(end), f_end, True

    edge_tol = max(tol, 1e-6 * (hi - lo))
    if min(best_x - lo, hi - best_x) <= edge_tol:
        hit_boundary = True

    logger.debug(f"Brent结束: x={best_x:.10g}, f={best_f:.10g}, 边界={hit_boundary}")
    return OptimResult(
        x=best_x,
        fun=best_f,
        iterations=iterations,
        converged=converged,
        hit_boundary=hit_boundary,
    )


def newton_raphson(
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    init: np.ndarray,
    tol: float = OPTIM_TOL,
    max_iter: int = MAX_ITER,
    objective: Optional[Callable[[np.ndarray], float]] = None
) -> OptimResult:
    """
    牛顿-拉夫森法求目标函数的驻点（最大化）

    每步求解 H d = -g；若全步不能提高目标函数则步长减半（最多30次）。
    Hessian奇异或牛顿方向不是上升方向时，改用沿梯度方向的线搜索，并在结果中标记。
    未提供 objective 时以梯度范数作为下降判据。

    Args:
        gradient: 梯度函数
        hessian: Hessian矩阵函数
        init: 初始参数向量
        tol: 梯度范数收敛容差
        max_iter: 最大迭代次数
        objective: 目标函数（可选，用于步长减半）

    Returns:
        OptimResult，x 为最终参数向量

    Raises:
        DomainError: 初值非有限
    """
    x = np.array(init, dtype=float, copy=True).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"牛顿法初值必须有限: {init}")

    def merit(point: np.ndarray) -> float:
        if objective is not None:
            value = objective(point)
            return float(value) if np.isfinite(value) else -np.inf
        g_point = np.asarray(gradient(point), dtype=float)
        return -float(np.linalg.norm(g_point)) if np.all(np.isfinite(g_point)) else -np.inf

    g = np.asarray(gradient(x), dtype=float).reshape(-1)
    current = merit(x)
    used_fallback = False
    iterations = 0
    converged = bool(np.linalg.norm(g) <= tol)

    while not converged and iterations < max_iter:
        H = np.asarray(hessian(x), dtype=float).reshape(x.size, x.size)
        direction = None
        try:
            if np.all(np.isfinite(H)) and np.linalg.cond(H) < 1e14:
                direction = np.linalg.solve(H, -g)
                if not np.dot(direction, g) > 0:
                    direction = None
        except np.linalg.LinAlgError:
            direction = None

        if direction is None:
            used_fallback = True
            direction = g / max(np.linalg.norm(g), 1.0)
            logger.debug(f"Hessian奇异或非上升方向，第{iterations + 1}步改用最速上升")

        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = x + step * direction
            value = merit(candidate)
            if value > current:
                accepted = True
                break
            step *= 0.5

        iterations += 1
        if not accepted:
            # 无法继续提高目标函数：当前点即为数值最优
            logger.debug(f"步长减半用尽，停止于第{iterations}步")
            break

        x, current = candidate, value
        g = np.asarray(gradient(x), dtype=float).reshape(-1)
        converged = bool(np.linalg.norm(g) <= tol)

    gnorm = float(np.linalg.norm(g))
    if not converged and gnorm <= max(tol, 1e-6):
        converged = True

    fun = float(objective(x)) if objective is not None else -gnorm
    return OptimResult(
        x=x,
        fun=fun,
        iterations=iterations,
        converged=converged,
        used_fallback=used_fallback,
        gradient_norm=gnorm,
    )


__all__ = [
    "OptimResult",
    "log_gamma",
    "digamma",
    "trigamma",
    "reg_inc_beta",
    "inv_reg_inc_beta",
    "brent_optimize",
    "newton_raphson",
    "SPECIAL_TOL",
]
