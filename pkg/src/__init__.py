"""
零膨胀Beta-Frank Copula依赖网络系统

本包提供微生物相对丰度数据的成对依赖分析，包括：
- 零膨胀Beta边际（含协变量回归）的极大似然估计
- Frank copula 联合模型与两阶段估计
- 刀切法方差与重标度似然比独立性检验
- 模拟研究（偏差/方差、检验功效）
- BY错误发现率控制下的依赖网络、网络统计、零模型比较和自助法稳定性
"""

__version__ = "0.1.0"
__author__ = "zibcopula"

from .frank_copula import FrankTheta, theta_to_kendall_tau, theta_to_spearman_rho
from .joint_model import PairData, Scenario, joint_density, pair_loglik
from .network import (
    DependenceNetwork,
    bootstrap_stability,
    build_network,
    by_fdr,
    er_null_comparison,
    graph_stats,
    hierarchical_cluster,
    pairwise_analysis,
)
from .simulation import SimConfig, run_study
from .two_stage import PairFit, independence_test, rescaled_lrt, two_stage_fit
from .zib_margin import ZibFit, ZibParams, ZibRegressionSpec, fit_zib, fit_zib_regression

__all__ = [
    "FrankTheta",
    "theta_to_kendall_tau",
    "theta_to_spearman_rho",
    "PairData",
    "Scenario",
    "joint_density",
    "pair_loglik",
    "DependenceNetwork",
    "bootstrap_stability",
    "build_network",
    "by_fdr",
    "er_null_comparison",
    "graph_stats",
    "hierarchical_cluster",
    "pairwise_analysis",
    "SimConfig",
    "run_study",
    "PairFit",
    "independence_test",
    "rescaled_lrt",
    "two_stage_fit",
    "ZibFit",
    "ZibParams",
    "ZibRegressionSpec",
    "fit_zib",
    "fit_zib_regression",
]
