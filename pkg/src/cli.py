"""
命令行入口

子命令：
- fit-pair：一对物种的两阶段拟合与独立性检验，输出JSON
- network：全部物种对检验、BY校正、网络统计、层次聚类和零模型比较
- simulate：偏差/方差与功效模拟研究
- stability：自助法网络稳定性

退出码：0 成功，1 用法错误，2 数据或估计错误。每次运行在输出目录写出 manifest.json。
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from config import (
    logger,
    setup_logging,
    get_settings,
    ZibCopulaError,
    DataError,
    EmptyAfterFilterError,
    ValidationError,
    UsageError,
    DEFAULT_ALPHA,
    DEFAULT_BOOT_REPS,
    DEFAULT_CLUSTERS,
    DEFAULT_MIN_PREVALENCE,
    DEFAULT_NULL_REPS,
)
from src import __version__
from src.data_io import (
    AbundanceTable,
    AlignmentReport,
    align_covariates,
    filter_and_normalize,
    load_counts,
    load_covariates,
    write_json,
    write_manifest,
    write_tsv,
)
from src.joint_model import PairData
from src.network import (
    bootstrap_stability,
    build_network,
    er_null_comparison,
    graph_stats,
    hierarchical_cluster,
    pairwise_analysis,
)
from src.simulation import PRESETS, SimConfig, run_study
from src.two_stage import independence_test
from src.zib_margin import ZibRegressionSpec


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# 不写入manifest的参数（与结果无关）
_UNRECORDED_FLAGS = ("command", "handler", "out_dir", "log_level", "threads")


class _Parser(argparse.ArgumentParser):
    """用法错误抛出 UsageError，由 main 统一转换为退出码1"""

    def error(self, message: str):
        raise UsageError(message)


# ============================================================================
# 参数解析
# ============================================================================

def _common_parent() -> argparse.ArgumentParser:
    settings = get_settings()
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--threads", type=int, default=settings.threads,
                        help="并行进程数（默认取 ZIBCOP_THREADS）")
    parent.add_argument("--seed", type=int, default=settings.seed, help="随机种子")
    parent.add_argument("--out-dir", type=Path, default=Path("."), help="输出目录")
    parent.add_argument("--log-level", default=settings.log_level,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    return parent


def _input_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--input", type=Path, required=True, help="计数表（TSV/CSV）")
    parent.add_argument("--orientation", choices=["taxa-columns", "taxa-rows"],
                        default="taxa-columns", help="物种在列上还是行上")
    parent.add_argument("--min-prevalence", type=float, default=DEFAULT_MIN_PREVALENCE,
                        help="流行率过滤阈值")
    parent.add_argument("--keep-unassigned", action="store_true", help="保留未分类物种")
    parent.add_argument("--relative", action="store_true",
                        help="输入已是相对丰度（行和不超过1），只过滤不归一化")
    parent.add_argument("--covariates", type=Path, help="协变量表（首列为样本标识）")
    parent.add_argument("--p-formula", default="", help="零膨胀部分的协变量，如 age+bmi")
    parent.add_argument("--mu-formula", default="", help="均值部分的协变量")
    parent.add_argument("--phi-formula", default="", help="离散部分的协变量")
    parent.add_argument("--categorical", default="", help="按分类变量处理的列，逗号分隔")
    parent.add_argument("--reference", default="",
                        help="分类变量参照水平，如 antibiotics=never,sex=female")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    inputs = _input_parent()
    parser = _Parser(prog="zibcopula", description="零膨胀Beta-Frank copula 依赖网络分析")
    parser.add_argument("--version", action="version", version=f"zibcopula {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    fit = sub.add_parser("fit-pair", parents=[common, inputs], help="一对物种的独立性检验")
    fit.add_argument("--taxa", required=True, help="两个物种名称，逗号分隔")
    fit.add_argument("--out", type=Path, help="输出JSON（默认 OUT_DIR/fit.json）")
    fit.set_defaults(handler=cmd_fit_pair)

    net = sub.add_parser("network", parents=[common, inputs], help="依赖网络分析")
    net.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="FDR水平")
    net.add_argument("--fdr", choices=["by", "bh"], default="by")
    net.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS, help="层次聚类簇数")
    net.add_argument("--null-reps", type=int, default=DEFAULT_NULL_REPS, help="零模型随机图个数")
    net.add_argument("--no-null", action="store_true", help="跳过零模型比较")
    net.set_defaults(handler=cmd_network)

    sim = sub.add_parser("simulate", parents=[common], help="模拟研究")
    sim.add_argument("--preset", choices=list(PRESETS), default="paper-grid")
    sim.add_argument("--study", choices=["bias", "power", "both"], default="both")
    sim.add_argument("--reps", type=int, help="每个单元的重复次数")
    sim.add_argument("--n", type=int, help="样本量")
    sim.add_argument("--alpha", type=float, help="检验水平")
    sim.set_defaults(handler=cmd_simulate)

    stab = sub.add_parser("stability", parents=[common, inputs], help="自助法稳定性")
    stab.add_argument("--boot", type=int, default=DEFAULT_BOOT_REPS, help="自助法重抽次数")
    stab.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="FDR水平")
    stab.add_argument("--fdr", choices=["by", "bh"], default="by")
    stab.set_defaults(handler=cmd_stability)
    return parser


def _split(text: str, sep: str) -> List[str]:
    return [item.strip() for item in text.split(sep) if item.strip()]


def _parse_reference(text: str) -> Dict[str, str]:
    levels = {}
    for item in _split(text, ","):
        if "=" not in item:
            raise UsageError(f"--reference 需要 列=水平 形式: {item}")
        column, level = item.split("=", 1)
        levels[column.strip()] = level.strip()
    return levels


def _flags(args: argparse.Namespace) -> Dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _UNRECORDED_FLAGS}


# ============================================================================
# 数据准备
# ============================================================================

def _load_abundance(args: argparse.Namespace) -> AbundanceTable:
    raw = load_counts(args.input, taxa_as_rows=args.orientation == "taxa-rows")
    return filter_and_normalize(raw, min_prevalence=args.min_prevalence,
                                drop_unassigned=not args.keep_unassigned,
                                normalize=not args.relative)


def _prepare(
    args: argparse.Namespace
) -> Tuple[AbundanceTable, Optional[ZibRegressionSpec], Optional[AlignmentReport]]:
    """读取、过滤丰度表，并按公式构造协变量设计矩阵"""
    table = _load_abundance(args)
    formulas = {
        "p": _split(args.p_formula, "+"),
        "mu": _split(args.mu_formula, "+"),
        "phi": _split(args.phi_formula, "+"),
    }
    used = list(dict.fromkeys(formulas["p"] + formulas["mu"] + formulas["phi"]))
    if args.covariates is None:
        if used:
            raise UsageError("使用 --p-formula/--mu-formula/--phi-formula 时需要 --covariates")
        return table, None, None
    if not used:
        logger.warning("提供了 --covariates 但公式为空，按无协变量模型拟合")

    covariates = load_covariates(args.covariates)
    table, cov, report = align_covariates(
        table, covariates, used,
        categorical=_split(args.categorical, ","),
        reference_levels=_parse_reference(args.reference),
    )
    spec = ZibRegressionSpec.from_covariates(
        cov.frame.reset_index(drop=True),
        p_cols=cov.expand_terms(formulas["p"]),
        mu_cols=cov.expand_terms(formulas["mu"]),
        phi_cols=cov.expand_terms(formulas["phi"]),
    )
    return table, spec, report


def _require_pairs(table: AbundanceTable) -> None:
    """网络与稳定性分析至少需要两个物种"""
    n_taxa = table.values.shape[1]
    if n_taxa < 2:
        raise EmptyAfterFilterError(f"过滤后只剩 {n_taxa} 个物种，无法组成物种对")


# ============================================================================
# 子命令
# ============================================================================

def cmd_fit_pair(args: argparse.Namespace) -> List[str]:
    taxa = _split(args.taxa, ",")
    if len(taxa) != 2 or taxa[0] == taxa[1]:
        raise UsageError(f"--taxa 需要两个不同的物种名称: {args.taxa}")
    table, spec, report = _prepare(args)
    missing = [t for t in taxa if t not in table.values.columns]
    if missing:
        raise DataError(f"物种 {missing} 不在过滤后的表中")

    data = PairData(table.values[taxa[0]].to_numpy(dtype=float),
                    table.values[taxa[1]].to_numpy(dtype=float),
                    names=(taxa[0], taxa[1]))
    fit = independence_test(data, spec, spec, threads=args.threads)
    record = fit.to_dict()
    record["taxa"] = taxa
    record["scenario_counts"] = {s.name: c for s, c in data.counts().items()}
    record["filter"] = table.report
    if report is not None:
        record["alignment"] = report.to_dict()

    out = args.out if args.out is not None else args.out_dir / "fit.json"
    write_json(record, out)
    print(f"{taxa[0]}-{taxa[1]}: theta={fit.theta_hat:.6g}, "
          f"Lambda'={fit.lrt_stat:.6g}, p={fit.p_value:.6g}")
    return [str(out.name)]


def cmd_network(args: argparse.Namespace) -> List[str]:
    table, spec, report = _prepare(args)
    _require_pairs(table)
    pairs = pairwise_analysis(table.values, spec, threads=args.threads, show_progress=True)
    net = build_network(pairs, alpha=args.alpha, fdr=args.fdr)
    net.clusters = hierarchical_cluster(net, min(args.clusters, net.n_nodes))
    stats = graph_stats(net)

    out = args.out_dir
    write_tsv(pairs.frame, out / "pairs.tsv")
    write_tsv(net.edges, out / "edges.tsv")
    write_tsv(net.adjacency_frame().reset_index().rename(columns={"index": "taxon"}),
              out / "adjacency.tsv")
    write_tsv(stats.nodes, out / "nodes.tsv")
    outputs = ["pairs.tsv", "edges.tsv", "adjacency.tsv", "nodes.tsv", "network_summary.json"]

    summary = {
        "n_taxa": net.n_nodes,
        "n_pairs": pairs.n_pairs,
        "n_tested": int(len(pairs.tested)),
        "n_skipped": int(len(pairs.skipped)),
        "n_edges": net.n_edges,
        "n_positive": int((net.edges["sign"] > 0).sum()),
        "n_negative": int((net.edges["sign"] < 0).sum()),
        "alpha": args.alpha,
        "fdr": args.fdr,
        "clusters": args.clusters,
        "stats": stats.summary(),
        "filter": table.report,
    }
    if report is not None:
        summary["alignment"] = report.to_dict()

    if not args.no_null:
        null = er_null_comparison(net, n_reps=args.null_reps, seed=args.seed,
                                  k=args.clusters, threads=args.threads, show_progress=True)
        write_tsv(null.to_frame(), out / "null_model.tsv")
        write_tsv(null.null, out / "null_distribution.tsv")
        summary["null_model"] = {
            "observed": null.observed,
            "p_values": null.p_values,
            "ks_stat": null.ks_stat,
            "ks_p": null.ks_p,
            "n_reps": null.n_reps,
        }
        outputs += ["null_model.tsv", "null_distribution.tsv"]

    write_json(summary, out / "network_summary.json")
    print(f"网络: {net.n_nodes} 个节点, {net.n_edges} 条边, 密度 {stats.density:.4g}")
    return outputs


def cmd_simulate(args: argparse.Namespace) -> List[str]:
    config = SimConfig.preset(args.preset, reps=args.reps, n=args.n, seed=args.seed,
                              alpha=args.alpha)
    result = run_study(config, args.study, threads=args.threads, show_progress=True)

    out = args.out_dir
    write_tsv(result.cells, out / "simulation_cells.tsv")
    write_tsv(result.to_frame(), out / "simulation_tidy.tsv")
    write_tsv(result.replicates, out / "simulation_replicates.tsv")
    write_json(result.to_summary(), out / "simulation_summary.json")
    print(f"模拟研究 {config.name}: {len(result.cells)} 个单元 x {config.reps} 次重复")
    return ["simulation_cells.tsv", "simulation_tidy.tsv", "simulation_replicates.tsv",
            "simulation_summary.json"]


def cmd_stability(args: argparse.Namespace) -> List[str]:
    table, spec, _ = _prepare(args)
    _require_pairs(table)
    stability = bootstrap_stability(
        table.values, spec, alpha=args.alpha, n_boot=args.boot, seed=args.seed,
        fdr=args.fdr, threads=args.threads, show_progress=True,
    )
    out = args.out_dir
    write_tsv(stability.replicates, out / "stability_replicates.tsv")
    write_tsv(stability.selection, out / "stability_selection.tsv")
    summary = stability.summary()
    write_json(summary, out / "stability_summary.json")
    print(f"自助法稳定性: Dice 均值 {summary['dice']['mean']:.4g}, "
          f"重叠系数均值 {summary['overlap']['mean']:.4g}")
    return ["stability_replicates.tsv", "stability_selection.tsv", "stability_summary.json"]


# ============================================================================
# 入口
# ============================================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        退出码：0 成功，1 用法错误，2 数据或估计错误
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"用法错误: {e}", file=sys.stderr)
        return EXIT_USAGE

    settings = get_settings()
    setup_logging(level=getattr(logging, args.log_level), log_file=settings.log_file)

    try:
        if args.threads < 1:
            raise UsageError(f"--threads 必须 >= 1: {args.threads}")
        args.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.handler(args)
        inputs = {
            "input": getattr(args, "input", None),
            "covariates": getattr(args, "covariates", None),
        }
        write_manifest(args.out_dir, args.command, inputs, _flags(args), args.seed, outputs)
    except (UsageError, ValidationError) as e:
        print(f"用法错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ZibCopulaError as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "build_parser",
    "main",
]
