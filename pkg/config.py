"""
配置文件：零膨胀Beta-Frank Copula依赖网络系统

管理数值默认参数、运行配置（环境变量）、日志配置和自定义异常
"""

import logging
from functools import lru_cache
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


# ============================================================================
# 项目路径配置
# ============================================================================

# 项目根目录
PROJECT_ROOT = Path(__file__).parent.absolute()

# 日志目录（仅在启用文件日志时创建）
LOG_DIR = PROJECT_ROOT / "logs"


# ============================================================================
# 数值计算配置
# ============================================================================

# 特殊函数绝对误差目标
SPECIAL_TOL = 1e-10

# 优化器收敛容差与迭代上限
OPTIM_TOL = 1e-8
MAX_ITER = 200
MAX_HALVINGS = 30

# Frank copula 参数搜索区间；|theta| 小于该阈值时按独立copula处理
THETA_BOUNDS = (-35.0, 35.0)
THETA_ZERO_EPS = 1e-8

# 等于1的相对丰度截断到 1 - 1e-10
UNIT_CLAMP = 1.0 - 1e-10

# 离散参数 phi 的矩估计初值截断范围
PHI_INIT_BOUNDS = (0.1, 1e4)

# 对数似然下溢时每项的下限
LOG_FLOOR = -1e10


# ============================================================================
# 统计估计配置
# ============================================================================

# 每个边际至少需要3个非零观测才能估计 (p, mu, phi)
MIN_NONZERO = 3

# 至少2个观测在两个物种上同时非零
MIN_CO_NONZERO = 2

# 刀切法（jackknife）留一重拟合的牛顿迭代上限
JACKKNIFE_MAX_ITER = 50

# 留一样本被跳过的比例超过该值时标记为质量降级
JACKKNIFE_DEGRADED_FRACTION = 0.10

# 二阶中心差分步长系数: h = 1e-4 * (1 + |theta|)
CURVATURE_STEP = 1e-4

# 模拟中重抽样上限
MAX_REDRAWS = 1000


# ============================================================================
# 模拟研究配置
# ============================================================================

# 模拟研究默认样本量、重复次数和检验水平
DEFAULT_SIM_N = 50
DEFAULT_SIM_REPS = 500
DEFAULT_SIM_ALPHA = 0.05


# ============================================================================
# 网络分析配置
# ============================================================================

# BY 错误发现率控制水平
DEFAULT_ALPHA = 0.01

# 层次聚类切割的簇数
DEFAULT_CLUSTERS = 3

# Erdos-Renyi 零模型重复次数
DEFAULT_NULL_REPS = 1000

# 自助法（bootstrap）重复次数
DEFAULT_BOOT_REPS = 50

# 流行率过滤阈值
DEFAULT_MIN_PREVALENCE = 0.20

# 视为"未分类"的物种标签（不区分大小写）
DEFAULT_UNASSIGNED_LABELS = ("", "unassigned", "unclassified")


# ============================================================================
# 输出配置
# ============================================================================

# 数值输出保留17位有效数字，保证往返精度
FLOAT_FORMAT = "%.17g"

# 运行清单（manifest）的配置结构版本
CONFIG_SCHEMA_VERSION = "1.0"


# ============================================================================
# 运行配置（环境变量 / .env）
# ============================================================================

class Settings(BaseSettings):
    """
    运行时配置

    从环境变量（前缀 ZIBCOP_）或项目根目录的 .env 文件读取。

    Attributes:
        threads: 默认并行工作进程数
        log_level: 日志级别名称
        log_file: 日志文件路径，None表示不写文件
        seed: 默认随机种子
    """

    model_config = SettingsConfigDict(
        env_prefix="ZIBCOP_",
        env_file=str(PROJECT_ROOT / ".env"),
        extra="ignore",
    )

    threads: int = 1
    log_level: str = "INFO"
    log_file: Optional[Path] = None
    seed: int = 20240101

    @field_validator("threads")
    @classmethod
    def _check_threads(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads 必须 >= 1")
        return value

    @field_validator("log_level")
    @classmethod
    def _check_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"未知的日志级别: {value}")
        return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """返回缓存的运行配置实例"""
    return Settings()


# ============================================================================
# 日志配置
# ============================================================================

# 日志格式
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# 日志文件轮转配置
LOG_MAX_BYTES = 10 * 1024 * 1024  # 10MB
LOG_BACKUP_COUNT = 5


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[Path] = None,
    console: bool = True
) -> logging.Logger:
    """
    配置日志系统

    Args:
        level: 日志级别
        log_file: 日志文件路径，None表示不写文件
        console: 是否输出到控制台

    Returns:
        配置好的logger实例
    """
    logger = logging.getLogger("zibcopula")
    logger.setLevel(level)

    # 清除已有的handlers，重复调用保持幂等
    logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=LOG_MAX_BYTES,
            backupCount=LOG_BACKUP_COUNT,
            encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    return logger


# ============================================================================
# 自定义异常类
# ============================================================================

class ZibCopulaError(Exception):
    """系统基础异常"""
    pass


class DomainError(ZibCopulaError, ValueError):
    """数学函数参数超出定义域"""
    pass


class ValidationError(ZibCopulaError, ValueError):
    """参数对象、配置或设计矩阵验证错误"""
    pass


class RankDeficientDesignError(ValidationError):
    """设计矩阵列不满秩"""
    pass


class NumericalError(ZibCopulaError):
    """优化过程中目标函数出现非有限值"""
    pass


class EstimationError(ZibCopulaError):
    """统计估计前提条件不满足"""
    pass


class TooFewNonzeroError(EstimationError):
    """非零观测少于3个，无法估计边际参数"""
    pass


class MutuallyExclusiveError(EstimationError):
    """两个物种同时非零的观测少于2个"""
    pass


class NonpositiveCurvatureError(EstimationError):
    """剖面似然在估计点的二阶导数非负，检验无定义"""
    pass


class GuardExhaustedError(EstimationError):
    """模拟重抽样次数用尽，参数配置不可行"""
    pass


class DataError(ZibCopulaError):
    """数据读取与处理相关错误"""
    pass


class DataFileNotFoundError(DataError):
    """输入文件不存在"""
    pass


class ParseError(DataError):
    """数据解析错误（含行列位置）"""
    pass


class DuplicateIdError(DataError):
    """样本或物种标识重复"""
    pass


class EmptyAfterFilterError(DataError):
    """过滤后没有剩余数据"""
    pass


class NoOverlapError(DataError):
    """丰度表与协变量表没有共同样本"""
    pass


class UsageError(ZibCopulaError):
    """命令行用法错误"""
    pass


# ============================================================================
# 初始化
# ============================================================================

# 创建默认logger（仅控制台）
logger = setup_logging(level=logging.WARNING)


# ============================================================================
# 配置导出
# ============================================================================

__all__ = [
    # 路径
    "PROJECT_ROOT",
    "LOG_DIR",

    # 数值配置
    "SPECIAL_TOL",
    "OPTIM_TOL",
    "MAX_ITER",
    "MAX_HALVINGS",
    "THETA_BOUNDS",
    "THETA_ZERO_EPS",
    "UNIT_CLAMP",
    "PHI_INIT_BOUNDS",
    "LOG_FLOOR",

    # 估计配置
    "MIN_NONZERO",
    "MIN_CO_NONZERO",
    "JACKKNIFE_MAX_ITER",
    "JACKKNIFE_DEGRADED_FRACTION",
    "CURVATURE_STEP",
    "MAX_REDRAWS",

    # 模拟配置
    "DEFAULT_SIM_N",
    "DEFAULT_SIM_REPS",
    "DEFAULT_SIM_ALPHA",

    # 网络配置
    "DEFAULT_ALPHA",
    "DEFAULT_CLUSTERS",
    "DEFAULT_NULL_REPS",
    "DEFAULT_BOOT_REPS",
    "DEFAULT_MIN_PREVALENCE",
    "DEFAULT_UNASSIGNED_LABELS",

    # 输出配置
    "FLOAT_FORMAT",
    "CONFIG_SCHEMA_VERSION",

    # 运行配置
    "Settings",
    "get_settings",

    # 日志
    "setup_logging",
    "logger",

    # 异常类
    "ZibCopulaError",
    "DomainError",
    "ValidationError",
    "RankDeficientDesignError",
    "NumericalError",
    "EstimationError",
    "TooFewNonzeroError",
    "MutuallyExclusiveError",
    "NonpositiveCurvatureError",
    "GuardExhaustedError",
    "DataError",
    "DataFileNotFoundError",
    "ParseError",
    "DuplicateIdError",
    "EmptyAfterFilterError",
    "NoOverlapError",
    "UsageError",
]
