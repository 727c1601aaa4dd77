"""
零膨胀Beta（ZIB）边际分布模块

实现零膨胀Beta分布的密度、累积分布、左极限、分位数和对数似然，
以及无协变量和带协变量回归（p, mu, phi 三个参数各自通过连接函数依赖协变量）
的最大似然拟合。

**参数化说明：**
- p：零点质量（取0的概率）
- mu：Beta部分的均值
- phi：Beta部分的离散（精度）参数，形状参数 a = mu*phi, b = (1-mu)*phi

**拟合说明：**
零与非零的二元部分只通过 p 进入似然，因此与Beta部分解耦，两块分别最大化：
- 二元部分：零指示变量对 Q 的logistic回归（直接建模 Pr(x=0)）
- Beta部分：非零观测上 (delta, kappa) 的牛顿-拉夫森法
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import special, stats

from config import (
    logger,
    DomainError,
    ValidationError,
    RankDeficientDesignError,
    TooFewNonzeroError,
    MAX_ITER,
    OPTIM_TOL,
    MIN_NONZERO,
    UNIT_CLAMP,
    PHI_INIT_BOUNDS,
    LOG_FLOOR,
)
from src.numerics import (
    digamma,
    trigamma,
    reg_inc_beta,
    inv_reg_inc_beta,
    newton_raphson,
)


ArrayLike = Union[float, np.ndarray]

# 已实现的连接函数：名称 -> (h, h^{-1})
LINK_FUNCTIONS = {
    "logit": (special.logit, special.expit),
    "log": (np.log, np.exp),
}

# 类型层面接受但尚未实现的连接函数
RESERVED_LINKS = ("probit", "cloglog")

DEFAULT_LINKS = ("logit", "logit", "log")

# 为避免 digamma 在0处发散，形状参数的下界
_SHAPE_FLOOR = 1e-300
_MU_EPS = 1e-15


# ============================================================================
# 数据类型
# ============================================================================

@dataclass(frozen=True)
class ZibParams:
    """
    零膨胀Beta分布参数 (p, mu, phi)

    各字段可以是标量，也可以是等长数组（逐观测参数）。

    Attributes:
        p: 零点质量，0 <= p < 1
        mu: Beta均值，0 < mu < 1
        phi: Beta离散参数，phi > 0

    Example:
        >>> params = ZibParams(p=0.2, mu=0.5, phi=2.0)
        >>> params.shape_a, params.shape_b
        (1.0, 1.0)
    """

    p: ArrayLike
    mu: ArrayLike
    phi: ArrayLike

    def __post_init__(self):
        values = {}
        for name in ("p", "mu", "phi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(~np.isfinite(arr)):
                raise ValidationError(f"ZibParams.{name} 必须为有限值: {getattr(self, name)}")
            values[name] = float(arr) if arr.ndim == 0 else arr
        p, mu, phi = (np.asarray(values[k]) for k in ("p", "mu", "phi"))
        if np.any(p < 0) or np.any(p >= 1):
            raise ValidationError(f"p 必须满足 0 <= p < 1，当前值: {values['p']}")
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise ValidationError(f"mu 必须满足 0 < mu < 1，当前值: {values['mu']}")
        if np.any(phi <= 0):
            raise ValidationError(f"phi 必须为正，当前值: {values['phi']}")
        sizes = {a.size for a in (p, mu, phi) if a.ndim > 0}
        if len(sizes) > 1:
            raise ValidationError(f"逐观测参数长度不一致: {sizes}")
        for name, value in values.items():
            object.__setattr__(self, name, value)

    @property
    def shape_a(self) -> ArrayLike:
        """Beta第一形状参数 a = mu * phi"""
        return self.mu * self.phi

    @property
    def shape_b(self) -> ArrayLike:
        """Beta第二形状参数 b = (1 - mu) * phi"""
        return (1.0 - self.mu) * self.phi

    @property
    def is_scalar(self) -> bool:
        return all(np.ndim(v) == 0 for v in (self.p, self.mu, self.phi))

    def take(self, idx) -> "ZibParams":
        """取出部分观测的参数；标量参数原样返回"""
        if self.is_scalar:
            return self
        n = max(np.size(v) for v in (self.p, self.mu, self.phi))
        pick = [np.broadcast_to(v, (n,))[idx] for v in (self.p, self.mu, self.phi)]
        return ZibParams(p=pick[0], mu=pick[1], phi=pick[2])


@dataclass
class ZibRegressionSpec:
    """
    零膨胀Beta回归设定

    Attributes:
        q_design: 零膨胀部分（p）的设计矩阵，n x q1
        w_design: 均值部分（mu）的设计矩阵，n x q2
        z_design: 离散部分（phi）的设计矩阵，n x q3
        links: 三个连接函数名称 (h1, h2, h3)
        q_names / w_names / z_names: 各设计矩阵的列名（用于报告）
    """

    q_design: np.ndarray
    w_design: np.ndarray
    z_design: np.ndarray
    links: Tuple[str, str, str] = DEFAULT_LINKS
    q_names: Tuple[str, ...] = ()
    w_names: Tuple[str, ...] = ()
    z_names: Tuple[str, ...] = ()

    def __post_init__(self):
        designs = []
        for name in ("q_design", "w_design", "z_design"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.ndim == 1:
                mat = mat.reshape(-1, 1)
            if mat.ndim != 2:
                raise ValidationError(f"{name} 必须是二维矩阵")
            if not np.all(np.isfinite(mat)):
                raise ValidationError(f"{name} 含有非有限值")
            if mat.shape[0] > 0 and _intercept_index(mat) is None:
                raise ValidationError(f"{name} 必须包含全为1的截距列")
            designs.append(mat)
            setattr(self, name, mat)

        rows = {d.shape[0] for d in designs}
        if len(rows) != 1:
            raise ValidationError(f"设计矩阵行数不一致: {sorted(rows)}")

        links = tuple(self.links)
        if len(links) != 3:
            raise ValidationError(f"需要3个连接函数，当前: {links}")
        for link in links:
            if link in RESERVED_LINKS:
                raise ValidationError(f"连接函数 {link} 尚未实现，目前支持 logit/log")
            if link not in LINK_FUNCTIONS:
                raise ValidationError(f"未知的连接函数: {link}")
        if links[0] != "logit" or links[1] != "logit" or links[2] != "log":
            raise ValidationError(f"h1/h2 需为 logit，h3 需为 log，当前: {links}")
        self.links = links

        for name, mat in (("q_names", self.q_design), ("w_names", self.w_design),
                          ("z_names", self.z_design)):
            names = tuple(getattr(self, name))
            if not names:
                names = tuple(
                    "intercept" if j == _intercept_index(mat) else f"x{j}"
                    for j in range(mat.shape[1])
                )
            setattr(self, name, names)

    @property
    def n(self) -> int:
        return self.q_design.shape[0]

    @property
    def is_intercept_only(self) -> bool:
        return all(d.shape[1] == 1 for d in (self.q_design, self.w_design, self.z_design))

    @property
    def n_params(self) -> int:
        return self.q_design.shape[1] + self.w_design.shape[1] + self.z_design.shape[1]

    @classmethod
    def intercept_only(cls, n: int) -> "ZibRegressionSpec":
        """无协变量设定（三个设计矩阵均只有截距列）"""
        ones = np.ones((n, 1))
        return cls(ones, ones.copy(), ones.copy())

    @classmethod
    def from_covariates(
        cls,
        frame: pd.DataFrame,
        p_cols: Sequence[str] = (),
        mu_cols: Sequence[str] = (),
        phi_cols: Sequence[str] = ()
    ) -> "ZibRegressionSpec":
        """
        由数值协变量表构造设计矩阵，自动添加截距列

        Args:
            frame: 协变量表（行对应观测，已完成分类变量展开）
            p_cols: 进入零膨胀部分的列
            mu_cols: 进入均值部分的列
            phi_cols: 进入离散部分的列

        Raises:
            ValidationError: 列不存在
        """
        def build(cols: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...]]:
            missing = [c for c in cols if c not in frame.columns]
            if missing:
                raise ValidationError(f"协变量列不存在: {missing}")
            mat = np.column_stack(
                [np.ones(len(frame))] + [frame[c].to_numpy(dtype=float) for c in cols]
            )
            return mat, ("intercept",) + tuple(cols)

        q, qn = build(p_cols)
        w, wn = build(mu_cols)
        z, zn = build(phi_cols)
        return cls(q, w, z, q_names=qn, w_names=wn, z_names=zn)

    def subset(self, rows) -> "ZibRegressionSpec":
        """按行取子集（用于刀切法和自助法）"""
        return ZibRegressionSpec(
            self.q_design[rows],
            self.w_design[rows],
            self.z_design[rows],
            links=self.links,
            q_names=self.q_names,
            w_names=self.w_names,
            z_names=self.z_names,
        )


@dataclass
class ZibFit:
    """
    零膨胀Beta拟合结果

    Attributes:
        rho: 零膨胀部分系数
        delta: 均值部分系数
        kappa: 离散部分系数
        loglik: 拟合系数处的对数似然
        converged: 两块牛顿迭代是否都收敛
        n_nonzero: 非零观测数
        n: 观测总数
        n_zero: 零观测数
        iterations: 牛顿迭代总次数
        perfect_separation: 二元部分是否出现完全分离
        intercept_only: 是否为无协变量拟合
        links: 连接函数名称
    """

    rho: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    loglik: float
    converged: bool
    n_nonzero: int
    n: int
    n_zero: int
    iterations: int = 0
    perfect_separation: bool = False
    intercept_only: bool = True
    links: Tuple[str, str, str] = DEFAULT_LINKS

    @property
    def zero_boundary(self) -> bool:
        """零比例为0或1，此时 rho 截距为截断值"""
        return self.n_zero == 0 or self.n_zero == self.n

    @property
    def n_params(self) -> int:
        return self.rho.size + self.delta.size + self.kappa.size

    def natural_params(self) -> ZibParams:
        """
        无协变量拟合的 (p, mu, phi)

        p 直接取零观测比例，保证与闭式估计完全一致。
        """
        if not self.intercept_only:
            raise ValidationError("带协变量的拟合没有单一的 (p, mu, phi)，请使用 params(spec)")
        return ZibParams(
            p=self.n_zero / self.n,
            mu=float(special.expit(self.delta[0])),
            phi=float(np.exp(self.kappa[0])),
        )

    def params(self, spec: Optional[ZibRegressionSpec] = None) -> ZibParams:
        """
        拟合参数：无协变量时为标量 ZibParams，否则为逐观测 ZibParams

        Args:
            spec: 回归设定；为None或无协变量时返回标量参数
        """
        if spec is None or (self.intercept_only and spec.is_intercept_only):
            return self.natural_params()
        p = special.expit(spec.q_design @ self.rho)
        mu = np.clip(special.expit(spec.w_design @ self.delta), _MU_EPS, 1 - _MU_EPS)
        phi = np.exp(spec.z_design @ self.kappa)
        return ZibParams(p=np.minimum(p, UNIT_CLAMP), mu=mu, phi=phi)

    def parameter_vector(self) -> np.ndarray:
        """
        用于协方差估计的参数向量

        无协变量时为 (p, mu, phi)，否则为 (rho, delta, kappa) 的拼接。
        """
        if self.intercept_only:
            params = self.natural_params()
            return np.array([params.p, params.mu, params.phi])
        return np.concatenate([self.rho, self.delta, self.kappa])

    def parameter_names(self, prefix: str = "") -> Tuple[str, ...]:
        if self.intercept_only:
            return tuple(f"{prefix}{name}" for name in ("p", "mu", "phi"))
        return (
            tuple(f"{prefix}rho{j}" for j in range(self.rho.size))
            + tuple(f"{prefix}delta{j}" for j in range(self.delta.size))
            + tuple(f"{prefix}kappa{j}" for j in range(self.kappa.size))
        )

    def to_dict(self) -> Dict:
        record = {
            "rho": self.rho.tolist(),
            "delta": self.delta.tolist(),
            "kappa": self.kappa.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "n": self.n,
            "n_zero": self.n_zero,
            "n_nonzero": self.n_nonzero,
            "iterations": self.iterations,
            "perfect_separation": self.perfect_separation,
            "zero_boundary": self.zero_boundary,
            "links": list(self.links),
        }
        if self.intercept_only:
            params = self.natural_params()
            record.update({"p": params.p, "mu": params.mu, "phi": params.phi})
        return record


# ============================================================================
# 分布函数
# ============================================================================

def _intercept_index(design: np.ndarray) -> Optional[int]:
    for j in range(design.shape[1]):
        if np.all(design[:, j] == 1.0):
            return j
    return None


def _check_support(x: ArrayLike, right_closed: bool) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    upper_ok = (arr <= 1) if right_closed else (arr < 1)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(~upper_ok):
        interval = "[0, 1]" if right_closed else "[0, 1)"
        raise DomainError(f"x 必须位于 {interval}，当前值: {x}")
    return arr


def _broadcast(x: np.ndarray, params: ZibParams):
    return np.broadcast_arrays(
        x, np.asarray(params.p), np.asarray(params.mu), np.asarray(params.phi)
    )


def zib_logpdf(x: ArrayLike, params: ZibParams) -> ArrayLike:
    """
    零膨胀Beta对数密度

    x=0 处为 log p（点质量的概率），x 属于 (0,1) 时为 log(1-p) + log f_beta(x)。
    """
    arr = _check_support(x, right_closed=False)
    xb, p, mu, phi = _broadcast(arr, params)
    out = np.empty(xb.shape, dtype=float)
    zero = xb == 0
    with np.errstate(divide="ignore"):
        out[zero] = np.log(p[zero])
        pos = ~zero
        out[pos] = np.log1p(-p[pos]) + stats.beta.logpdf(
            xb[pos], mu[pos] * phi[pos], (1 - mu[pos]) * phi[pos]
        )
    return float(out) if out.ndim == 0 else out


def zib_pdf(x: ArrayLike, params: ZibParams) -> ArrayLike:
    """
    零膨胀Beta密度

    Args:
        x: 取值于 [0, 1)
        params: 分布参数

    Returns:
        x=0 时返回 p（概率），否则返回 (1-p) * f_beta(x; mu, phi)

    Raises:
        DomainError: x 不在 [0, 1)

    Example:
        >>> zib_pdf(0.3, ZibParams(p=0.2, mu=0.5, phi=2.0))
        0.8
    """
    logp = zib_logpdf(x, params)
    return float(np.exp(logp)) if np.ndim(logp) == 0 else np.exp(logp)


def zib_cdf(x: ArrayLike, params: ZibParams) -> ArrayLike:
    """
    零膨胀Beta累积分布函数 F(x) = p + (1-p) I_x(mu*phi, (1-mu)*phi)

    F(0) = p（零点跳跃），F(1) = 1。
    """
    arr = _check_support(x, right_closed=True)
    xb, p, mu, phi = _broadcast(arr, params)
    value = p + (1 - p) * np.asarray(reg_inc_beta(xb, mu * phi, (1 - mu) * phi))
    value = np.clip(value, 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


def zib_cdf_left(x: ArrayLike, params: ZibParams) -> ArrayLike:
    """左极限 F(x-)：x=0 处为0，x>0 处与 F(x) 相同"""
    arr = _check_support(x, right_closed=True)
    value = np.asarray(zib_cdf(arr, params), dtype=float)
    value = np.where(np.broadcast_to(arr, value.shape) == 0, 0.0, value)
    return float(value) if value.ndim == 0 else value


def zib_quantile(u: ArrayLike, params: ZibParams) -> ArrayLike:
    """
    零膨胀Beta广义逆分布函数

    u <= p 时返回0，否则返回 F_beta^{-1}((u - p) / (1 - p))。结果截断在 [0, 1) 内。

    Raises:
        DomainError: u 不在 [0, 1]
    """
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"u 必须位于 [0, 1]，当前值: {u}")
    ub, p, mu, phi = _broadcast(arr, params)
    out = np.zeros(ub.shape, dtype=float)
    cont = ub > p
    if np.any(cont):
        q = np.clip((ub[cont] - p[cont]) / (1 - p[cont]), 0.0, 1.0)
        x = np.asarray(
            inv_reg_inc_beta(q, mu[cont] * phi[cont], (1 - mu[cont]) * phi[cont])
        )
        out[cont] = np.clip(x, np.finfo(float).tiny, UNIT_CLAMP)
    return float(out) if out.ndim == 0 else out


def zib_loglik(
    data: ArrayLike,
    params_per_obs: ZibParams,
    return_flag: bool = False
):
    """
    零膨胀Beta对数似然：各观测 log zib_pdf 之和

    下溢为 -inf 的项以 LOG_FLOOR 代替并记录警告。

    Args:
        data: 观测值，取值于 [0, 1)
        params_per_obs: 标量或逐观测参数
        return_flag: 为True时同时返回是否发生下溢

    Returns:
        对数似然；return_flag=True 时返回 (对数似然, 是否下溢)
    """
    terms = np.atleast_1d(np.asarray(zib_logpdf(data, params_per_obs), dtype=float))
    bad = ~np.isfinite(terms)
    if np.any(bad):
        logger.warning(f"对数似然有 {int(bad.sum())} 项下溢，已替换为 {LOG_FLOOR}")
        terms = np.where(bad, LOG_FLOOR, terms)
    total = float(np.sum(terms))
    return (total, bool(np.any(bad))) if return_flag else total


def clamp_unit_interval(data: ArrayLike) -> np.ndarray:
    """
    校验相对丰度并把数值上等于1的值截断为 1 - 1e-10

    Raises:
        DomainError: 含负值、非有限值或明显大于1的值
    """
    arr = np.array(data, dtype=float, copy=True).reshape(-1)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("相对丰度必须为非负有限值")
    if np.any(arr > 1 + 1e-8):
        raise DomainError(f"相对丰度不能大于1，最大值: {arr.max()}")
    high = arr > UNIT_CLAMP
    if np.any(high):
        logger.warning(f"{int(high.sum())} 个相对丰度数值上等于1，已截断为 {UNIT_CLAMP}")
        arr[high] = UNIT_CLAMP
    return arr


# ============================================================================
# 拟合
# ============================================================================

def _check_rank(design: np.ndarray, name: str) -> None:
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientDesignError(
            f"{name} 列不满秩: 形状 {design.shape}, 秩 {np.linalg.matrix_rank(design)}"
        )


def _fit_presence(
    zero: np.ndarray,
    Q: np.ndarray,
    init: Optional[np.ndarray],
    max_iter: int
) -> Tuple[np.ndarray, bool, int, bool]:
    """零指示变量的logistic回归，返回 (rho, converged, iterations, separation)"""
    n = zero.size
    n_zero = int(zero.sum())
    icpt = _intercept_index(Q)

    # 零比例为0或1时截距取截断后的有限值，边界由 ZibFit.zero_boundary 标记
    boundary_logit = special.logit(np.clip(n_zero / n, 1 - UNIT_CLAMP, UNIT_CLAMP))
    if Q.shape[1] == 1:
        return np.array([boundary_logit]), True, 0, False

    if n_zero == 0 or n_zero == n:
        logger.warning(f"零膨胀部分完全分离: {n_zero}/{n} 个零")
        rho = np.zeros(Q.shape[1])
        rho[icpt] = boundary_logit
        return rho, False, 0, True

    z = zero.astype(float)

    def objective(beta: np.ndarray) -> float:
        eta = Q @ beta
        return float(np.sum(z * eta - np.logaddexp(0.0, eta)))

    def gradient(beta: np.ndarray) -> np.ndarray:
        return Q.T @ (z - special.expit(Q @ beta))

    def hessian(beta: np.ndarray) -> np.ndarray:
        prob = special.expit(Q @ beta)
        return -(Q.T * (prob * (1 - prob))) @ Q

    if init is None:
        init = np.zeros(Q.shape[1])
        init[icpt] = special.logit(n_zero / n)

    res = newton_raphson(gradient, hessian, init, tol=OPTIM_TOL,
                         max_iter=max_iter, objective=objective)
    rho = np.asarray(res.x)
    separation = bool(np.max(np.abs(Q @ rho)) > 30 or not res.converged)
    if separation:
        logger.warning("零膨胀部分疑似完全分离，系数可能发散")
    return rho, res.converged, res.iterations, separation


def _beta_moment_init(y: np.ndarray) -> Tuple[float, float]:
    """矩估计初值：mu 取非零样本均值，phi = mu(1-mu)/s^2 - 1 截断到 [0.1, 1e4]"""
    mu0 = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
    s2 = float(np.var(y, ddof=1)) if y.size > 1 else 0.0
    phi0 = mu0 * (1 - mu0) / s2 - 1 if s2 > 0 else PHI_INIT_BOUNDS[1]
    return mu0, float(np.clip(phi0, *PHI_INIT_BOUNDS))


def _fit_beta_part(
    y: np.ndarray,
    W: np.ndarray,
    Z: np.ndarray,
    init: Optional[np.ndarray],
    max_iter: int
) -> Tuple[np.ndarray, np.ndarray, bool, int]:
    """非零观测上 Beta 回归的牛顿-拉夫森法，返回 (delta, kappa, converged, iterations)"""
    k_w = W.shape[1]
    log_y = np.log(y)
    log_1my = np.log1p(-y)
    y_star = log_y - log_1my

    def unpack(theta: np.ndarray):
        mu = np.clip(special.expit(W @ theta[:k_w]), _MU_EPS, 1 - _MU_EPS)
        phi = np.exp(np.clip(Z @ theta[k_w:], -700, 700))
        a = np.maximum(mu * phi, _SHAPE_FLOOR)
        b = np.maximum((1 - mu) * phi, _SHAPE_FLOOR)
        return mu, phi, a, b

    def objective(theta: np.ndarray) -> float:
        mu, phi, a, b = unpack(theta)
        with np.errstate(all="ignore"):
            value = np.sum(
                special.gammaln(phi) - special.gammaln(a) - special.gammaln(b)
                + (a - 1) * log_y + (b - 1) * log_1my
            )
        return float(value) if np.isfinite(value) else -np.inf

    def scores(theta: np.ndarray):
        mu, phi, a, b = unpack(theta)
        dig_b = np.asarray(digamma(b))
        mu_star = np.asarray(digamma(a)) - dig_b
        ymu = y_star - mu_star
        l_mu = phi * ymu
        l_phi = mu * ymu + log_1my - dig_b + np.asarray(digamma(phi))
        return mu, phi, a, b, ymu, l_mu, l_phi

    def gradient(theta: np.ndarray) -> np.ndarray:
        mu, phi, _, _, _, l_mu, l_phi = scores(theta)
        dmu = mu * (1 - mu)
        return np.concatenate([W.T @ (l_mu * dmu), Z.T @ (l_phi * phi)])

    def hessian(theta: np.ndarray) -> np.ndarray:
        mu, phi, a, b, ymu, l_mu, l_phi = scores(theta)
        tri_a = np.asarray(trigamma(a))
        tri_b = np.asarray(trigamma(b))
        l_mumu = -phi ** 2 * (tri_a + tri_b)
        l_muphi = ymu - phi * (mu * tri_a - (1 - mu) * tri_b)
        l_phiphi = np.asarray(trigamma(phi)) - mu ** 2 * tri_a - (1 - mu) ** 2 * tri_b
        dmu = mu * (1 - mu)
        w_dd = l_mumu * dmu ** 2 + l_mu * dmu * (1 - 2 * mu)
        w_dk = l_muphi * dmu * phi
        w_kk = l_phiphi * phi ** 2 + l_phi * phi
        h_dd = (W.T * w_dd) @ W
        h_dk = (W.T * w_dk) @ Z
        h_kk = (Z.T * w_kk) @ Z
        return np.block([[h_dd, h_dk], [h_dk.T, h_kk]])

    if init is None:
        mu0, phi0 = _beta_moment_init(y)
        init = np.zeros(k_w + Z.shape[1])
        init[_intercept_index(W)] = special.logit(mu0)
        init[k_w + _intercept_index(Z)] = np.log(phi0)

    res = newton_raphson(gradient, hessian, init, tol=OPTIM_TOL,
                         max_iter=max_iter, objective=objective)
    theta = np.asarray(res.x)
    if not res.converged:
        logger.warning(f"Beta部分牛顿迭代未收敛，梯度范数 {res.gradient_norm:.3g}")
    return theta[:k_w], theta[k_w:], res.converged, res.iterations


def fit_zib_regression(
    data: ArrayLike,
    spec: ZibRegressionSpec,
    init: Optional[ZibFit] = None,
    max_iter: int = MAX_ITER
) -> ZibFit:
    """
    零膨胀Beta回归的最大似然拟合

    p_l = h1^{-1}(Q_l rho), mu_l = h2^{-1}(W_l delta), phi_l = h3^{-1}(Z_l kappa)。
    二元部分与Beta部分分别最大化；截距模型的二元部分取闭式解。

    Args:
        data: 相对丰度向量，取值于 [0, 1)（数值上等于1的值会被截断）
        spec: 回归设定，行数需与数据一致
        init: 热启动用的已有拟合（可选）
        max_iter: 每块牛顿迭代的上限

    Returns:
        ZibFit

    Raises:
        TooFewNonzeroError: 非零观测少于3个
        RankDeficientDesignError: 设计矩阵不满秩
        ValidationError: 行数不一致
    """
    y_all = clamp_unit_interval(data)
    n = y_all.size
    if spec.n != n:
        raise ValidationError(f"设计矩阵行数 {spec.n} 与数据长度 {n} 不一致")

    nonzero = y_all > 0
    n_nonzero = int(nonzero.sum())
    if n_nonzero < MIN_NONZERO:
        raise TooFewNonzeroError(
            f"非零观测只有 {n_nonzero} 个，至少需要 {MIN_NONZERO} 个"
        )

    Q = spec.q_design
    W = spec.w_design[nonzero]
    Z = spec.z_design[nonzero]
    _check_rank(Q, "q_design")
    _check_rank(W, "w_design（非零行）")
    _check_rank(Z, "z_design（非零行）")

    rho_init = beta_init = None
    if init is not None:
        rho_init = init.rho if (init.rho.size == Q.shape[1] and np.all(np.isfinite(init.rho))) else None
        if init.delta.size == W.shape[1] and init.kappa.size == Z.shape[1]:
            beta_init = np.concatenate([init.delta, init.kappa])

    rho, conv_p, it_p, separation = _fit_presence(~nonzero, Q, rho_init, max_iter)
    delta, kappa, conv_b, it_b = _fit_beta_part(y_all[nonzero], W, Z, beta_init, max_iter)

    fit = ZibFit(
        rho=rho,
        delta=delta,
        kappa=kappa,
        loglik=float("nan"),
        converged=bool(conv_p and conv_b),
        n_nonzero=n_nonzero,
        n=n,
        n_zero=n - n_nonzero,
        iterations=it_p + it_b,
        perfect_separation=separation,
        intercept_only=spec.is_intercept_only,
        links=spec.links,
    )
    fit.loglik = zib_loglik(y_all, fit.params(spec))
    logger.debug(
        f"ZIB拟合完成: n={n}, 非零={n_nonzero}, loglik={fit.loglik:.6g}, 收敛={fit.converged}"
    )
    return fit


def fit_zib(
    data: ArrayLike,
    init: Optional[ZibFit] = None,
    max_iter: int = MAX_ITER
) -> ZibFit:
    """
    无协变量零膨胀Beta拟合（两阶段估计的第一阶段）

    p 取零观测比例（闭式），(mu, phi) 由牛顿-拉夫森法从矩估计初值出发最大化。

    Raises:
        TooFewNonzeroError: 非零观测少于3个

    Example:
        >>> fit = fit_zib(np.array([0, 0, 0, 0, 0.2, 0.3, 0.5, 0.6, 0.1, 0.4]))
        >>> fit.natural_params().p
        0.4
    """
    n = np.size(data)
    return fit_zib_regression(data, ZibRegressionSpec.intercept_only(n), init=init,
                              max_iter=max_iter)


__all__ = [
    "ZibParams",
    "ZibRegressionSpec",
    "ZibFit",
    "LINK_FUNCTIONS",
    "zib_pdf",
    "zib_logpdf",
    "zib_cdf",
    "zib_cdf_left",
    "zib_quantile",
    "zib_loglik",
    "clamp_unit_interval",
    "fit_zib",
    "fit_zib_regression",
]
