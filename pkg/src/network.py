"""
依赖网络分析模块

对所有物种对做独立性检验，经Benjamini-Yekutieli错误发现率控制后构建带符号的依赖网络，
并计算网络统计量、层次聚类、Erdos-Renyi零模型比较和自助法稳定性。

**流程：**
1. pairwise_analysis：逐对两阶段拟合 + 重标度似然比检验，失败的对标记跳过
2. by_fdr / build_network：BY校正后显著的对连边，边的符号取 theta 的符号
3. graph_stats / hierarchical_cluster：中心性、密度、直径、聚类系数、模块度
4. er_null_comparison：与边数相同的 G(n, M) 随机图比较
5. bootstrap_stability：按样本有放回重抽，比较显著对集合的重叠
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from scipy import stats
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import pdist, squareform
from statsmodels.stats.multitest import multipletests

from config import (
    logger,
    ValidationError,
    EstimationError,
    NumericalError,
    RankDeficientDesignError,
    NonpositiveCurvatureError,
    TooFewNonzeroError,
    MutuallyExclusiveError,
    DEFAULT_ALPHA,
    DEFAULT_CLUSTERS,
    DEFAULT_NULL_REPS,
    DEFAULT_BOOT_REPS,
)
from src.frank_copula import theta_to_kendall_tau
from src.joint_model import PairData
from src.parallel import STREAM_BOOTSTRAP, STREAM_NULL_MODEL, make_rng, run_tasks
from src.two_stage import PairFit, independence_test
from src.zib_margin import ZibRegressionSpec


PAIR_COLUMNS = [
    "taxon_i", "taxon_j", "n", "theta", "kendall_tau", "theta_var", "lrt_stat",
    "p_value", "omega", "boundary_hit", "status", "error",
]

EDGE_COLUMNS = ["taxon_i", "taxon_j", "theta", "kendall_tau", "p_value", "p_adjusted", "sign"]

FDR_METHODS = {"by": "fdr_by", "bh": "fdr_bh"}


# ============================================================================
# 成对检验
# ============================================================================

@dataclass
class PairTable:
    """
    所有无序物种对的检验结果

    Attributes:
        frame: 每对一行，列见 PAIR_COLUMNS（跳过的对 p_value 为 NaN，error 记录原因）
        fits: (taxon_i, taxon_j) -> PairFit，只包含成功的对
        taxa: 参与分析的物种名称
    """

    frame: pd.DataFrame
    fits: Dict[Tuple[str, str], PairFit]
    taxa: List[str]

    @property
    def n_pairs(self) -> int:
        return len(self.frame)

    @property
    def tested(self) -> pd.DataFrame:
        return self.frame[self.frame["p_value"].notna()]

    @property
    def skipped(self) -> pd.DataFrame:
        return self.frame[self.frame["p_value"].isna()]


def _status_for(error: Exception) -> str:
    if isinstance(error, TooFewNonzeroError):
        return "too_few_nonzero"
    if isinstance(error, MutuallyExclusiveError):
        return "mutually_exclusive"
    if isinstance(error, NonpositiveCurvatureError):
        return "curvature_undefined"
    if isinstance(error, RankDeficientDesignError):
        return "rank_deficient"
    return "failed"


def _pair_task(task) -> Tuple[Dict, Optional[PairFit]]:
    name_i, name_j, x_i, x_j, spec = task
    record = {column: np.nan for column in PAIR_COLUMNS}
    record.update({"taxon_i": name_i, "taxon_j": name_j, "n": int(x_i.size),
                   "boundary_hit": False, "error": ""})
    try:
        data = PairData(x_i, x_j, names=(name_i, name_j))
        fit = independence_test(data, spec, spec)
    except (EstimationError, NumericalError, RankDeficientDesignError) as e:
        record["status"] = _status_for(e)
        record["error"] = str(e)
        return record, None

    record.update({
        "theta": fit.theta_hat,
        "kendall_tau": fit.kendall_tau,
        "theta_var": fit.theta_var,
        "lrt_stat": fit.lrt_stat,
        "p_value": fit.p_value,
        "omega": fit.omega,
        "boundary_hit": fit.status.boundary_hit,
        "status": fit.status.describe(),
    })
    return record, fit


def pairwise_analysis(
    table: pd.DataFrame,
    spec: Optional[ZibRegressionSpec] = None,
    threads: int = 1,
    show_progress: bool = False
) -> PairTable:
    """
    对所有无序物种对做独立性检验

    Args:
        table: 样本 x 物种 的相对丰度表
        spec: 所有物种共用的协变量回归设定（行与 table 对齐），None 表示无协变量
        threads: 并行进程数（按物种对并行）
        show_progress: 是否显示进度条

    Returns:
        PairTable，行数为 T(T-1)/2

    Raises:
        ValidationError: 物种少于2个或设计矩阵行数不一致
    """
    taxa = [str(c) for c in table.columns]
    if len(taxa) < 2:
        raise ValidationError(f"至少需要2个物种，当前 {len(taxa)} 个")
    if spec is not None and spec.n != len(table):
        raise ValidationError(f"设计矩阵行数 {spec.n} 与样本数 {len(table)} 不一致")

    values = table.to_numpy(dtype=float)
    tasks = [
        (taxa[a], taxa[b], values[:, a], values[:, b], spec)
        for a, b in combinations(range(len(taxa)), 2)
    ]
    logger.info(f"成对分析: {len(taxa)} 个物种, {len(tasks)} 对, {len(table)} 个样本")
    results = run_tasks(_pair_task, tasks, threads=threads,
                        show_progress=show_progress, desc="pairs")

    records = [record for record, _ in results]
    fits = {(record["taxon_i"], record["taxon_j"]): fit
            for record, fit in results if fit is not None}
    frame = pd.DataFrame(records, columns=PAIR_COLUMNS)
    n_skipped = int(frame["p_value"].isna().sum())
    if n_skipped:
        logger.warning(f"{n_skipped}/{len(frame)} 对因前提条件不满足被跳过")
    return PairTable(frame=frame, fits=fits, taxa=taxa)


# ============================================================================
# 错误发现率
# ============================================================================

@dataclass
class FdrResult:
    """FDR校正结果：拒绝标志与校正后p值（与输入顺序一致）"""

    reject: np.ndarray
    p_adjusted: np.ndarray


def step_up_fdr(p_values: Sequence[float], alpha: float = DEFAULT_ALPHA,
                method: str = "by") -> FdrResult:
    """
    FDR step-up 校正（by: Benjamini-Yekutieli，bh: Benjamini-Hochberg）

    Raises:
        ValidationError: p值不在 [0, 1] 或含NaN，alpha 不在 (0, 1)，方法未知
    """
    if method not in FDR_METHODS:
        raise ValidationError(f"未知的FDR方法: {method}，可选: {list(FDR_METHODS)}")
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha 必须位于 (0, 1): {alpha}")
    p = np.asarray(p_values, dtype=float).reshape(-1)
    if p.size == 0:
        return FdrResult(reject=np.zeros(0, dtype=bool), p_adjusted=np.zeros(0))
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValidationError("p值必须为 [0, 1] 内的有限值")
    reject, adjusted, _, _ = multipletests(p, alpha=alpha, method=FDR_METHODS[method])
    return FdrResult(reject=np.asarray(reject, dtype=bool),
                     p_adjusted=np.asarray(adjusted, dtype=float))


def by_fdr(p_values: Sequence[float], alpha: float = DEFAULT_ALPHA) -> FdrResult:
    """
    Benjamini-Yekutieli step-up 过程

    c(m) = sum_{i=1..m} 1/i，k* = max{k : p_(k) <= k alpha / (m c(m))}，
    拒绝排序后前 k* 个假设；校正p值单调。

    Example:
        >>> by_fdr([0.001, 0.02, 0.03, 0.9], alpha=0.05).reject.tolist()
        [True, False, False, False]
    """
    return step_up_fdr(p_values, alpha=alpha, method="by")


# ============================================================================
# 网络构建
# ============================================================================

@dataclass
class DependenceNetwork:
    """
    带符号的依赖网络

    Attributes:
        nodes: 节点（物种）名称
        adjacency: 对称布尔邻接矩阵，对角线为False
        edge_sign: 对称符号矩阵，取值 -1/0/+1，仅在有边处非零
        edges: 边列表，列见 EDGE_COLUMNS
        clusters: 层次聚类标签（1..k），未聚类时为None
    """

    nodes: List[str]
    adjacency: np.ndarray
    edge_sign: np.ndarray
    edges: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=EDGE_COLUMNS))
    clusters: Optional[np.ndarray] = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (len(self.nodes), len(self.nodes)):
            raise ValidationError(f"邻接矩阵形状 {adj.shape} 与节点数 {len(self.nodes)} 不一致")
        if not np.array_equal(adj, adj.T) or np.any(np.diag(adj)):
            raise ValidationError("邻接矩阵必须对称且对角线为0")
        self.adjacency = adj
        self.edge_sign = np.asarray(self.edge_sign, dtype=int)

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray, nodes: Optional[List[str]] = None) -> "DependenceNetwork":
        """由邻接矩阵构造（所有边符号为+1）"""
        adj = np.asarray(adjacency, dtype=bool)
        names = nodes if nodes is not None else [str(i) for i in range(adj.shape[0])]
        return cls(nodes=list(names), adjacency=adj, edge_sign=adj.astype(int))

    @classmethod
    def from_graph(cls, graph: nx.Graph) -> "DependenceNetwork":
        nodes = list(graph.nodes())
        adj = nx.to_numpy_array(graph, nodelist=nodes, dtype=float) > 0
        return cls.from_adjacency(adj, [str(v) for v in nodes])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, k=1).sum())

    def graph(self) -> nx.Graph:
        """以节点下标 0..n-1 构造的无权networkx图"""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_nodes))
        rows, cols = np.nonzero(np.triu(self.adjacency, k=1))
        graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
        return graph

    def adjacency_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.adjacency.astype(int), index=self.nodes, columns=self.nodes)

    def sign_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.edge_sign, index=self.nodes, columns=self.nodes)


def build_network(
    table: PairTable,
    alpha: float = DEFAULT_ALPHA,
    fdr: str = "by"
) -> DependenceNetwork:
    """
    由成对检验结果构建依赖网络

    只对成功检验的对做FDR校正；校正后p值严格小于 alpha 的对连边，符号取 sign(theta)。
    step-up 过程在校正p值恰等于 alpha 时也拒绝，这类对不连边。
    table.frame 会新增 p_adjusted 与 significant 两列。

    Args:
        table: 成对检验结果
        alpha: FDR水平
        fdr: by 或 bh

    Returns:
        DependenceNetwork
    """
    frame = table.frame
    tested = frame["p_value"].notna().to_numpy()
    result = step_up_fdr(frame.loc[tested, "p_value"].to_numpy(dtype=float), alpha, method=fdr)

    p_adjusted = np.full(len(frame), np.nan)
    significant = np.zeros(len(frame), dtype=bool)
    p_adjusted[tested] = result.p_adjusted
    significant[tested] = result.reject & (result.p_adjusted < alpha)
    frame["p_adjusted"] = p_adjusted
    frame["significant"] = significant

    index = {name: k for k, name in enumerate(table.taxa)}
    n = len(table.taxa)
    adjacency = np.zeros((n, n), dtype=bool)
    edge_sign = np.zeros((n, n), dtype=int)
    edges = []
    for row in frame[significant].itertuples(index=False):
        a, b = index[row.taxon_i], index[row.taxon_j]
        sign = 1 if row.theta >= 0 else -1
        adjacency[a, b] = adjacency[b, a] = True
        edge_sign[a, b] = edge_sign[b, a] = sign
        edges.append({
            "taxon_i": row.taxon_i,
            "taxon_j": row.taxon_j,
            "theta": row.theta,
            "kendall_tau": theta_to_kendall_tau(row.theta),
            "p_value": row.p_value,
            "p_adjusted": row.p_adjusted,
            "sign": sign,
        })

    logger.info(f"网络构建完成: {n} 个节点, {len(edges)} 条边 (alpha={alpha}, {fdr})")
    return DependenceNetwork(
        nodes=list(table.taxa),
        adjacency=adjacency,
        edge_sign=edge_sign,
        edges=pd.DataFrame(edges, columns=EDGE_COLUMNS),
    )


# ============================================================================
# 网络统计量
# ============================================================================

@dataclass
class GraphStats:
    """
    网络统计量

    Attributes:
        nodes: 每个节点的 degree / closeness / betweenness / eigenvector / clustering
        density: 边密度
        diameter: 直径（不连通时为最大连通分量的直径）
        mean_distance: 平均最短路径长度（同上）
        avg_clustering: 平均局部聚类系数
        modularity: 给定划分的Newman模块度（无划分或无边时为NaN）
        n_components: 连通分量个数
        largest_component_only: 距离类指标是否只在最大连通分量上计算
    """

    nodes: pd.DataFrame
    density: float
    diameter: float
    mean_distance: float
    avg_clustering: float
    modularity: float
    n_components: int
    largest_component_only: bool

    def summary(self) -> Dict:
        """全局指标与节点中心性均值"""
        record = {
            "density": self.density,
            "diameter": self.diameter,
            "mean_distance": self.mean_distance,
            "avg_clustering": self.avg_clustering,
            "modularity": self.modularity,
            "n_components": self.n_components,
            "largest_component_only": self.largest_component_only,
        }
        for column in ("degree", "closeness", "betweenness", "eigenvector"):
            record[f"mean_{column}"] = float(self.nodes[column].mean())
        return record


def eigenvector_scores(adjacency: np.ndarray) -> np.ndarray:
    """
    特征向量中心性，最大值缩放为1；无边时全为0

    逐个连通分量取邻接子矩阵的Perron向量，分量内最大值缩放为
    该分量谱半径与全图谱半径之比。连通图上即为整图主特征向量；
    不连通时结果与节点编号无关，结构相同的分量得分相同。
    """
    adj = np.asarray(adjacency, dtype=float)
    scores = np.zeros(adj.shape[0])
    if adj.size == 0 or not np.any(adj):
        return scores

    graph = nx.from_numpy_array(adj)
    components = [sorted(c) for c in nx.connected_components(graph) if len(c) > 1]
    radii, vectors = [], []
    for members in components:
        values, vecs = np.linalg.eigh(adj[np.ix_(members, members)])
        principal = np.abs(vecs[:, -1])
        radii.append(values[-1])
        vectors.append(principal / principal.max())
    top = max(radii)
    for members, radius, vector in zip(components, radii, vectors):
        scores[members] = vector * radius / top
    return scores


def _partition(labels: np.ndarray) -> List[Set[int]]:
    return [set(np.flatnonzero(labels == k).tolist()) for k in np.unique(labels)]


def network_modularity(graph: nx.Graph, labels: Optional[np.ndarray]) -> float:
    """给定划分（标签数组）的Newman模块度"""
    if labels is None or graph.number_of_edges() == 0:
        return float("nan")
    return float(nx.community.modularity(graph, _partition(np.asarray(labels))))


def _distances(graph: nx.Graph) -> Tuple[float, float]:
    return float(nx.diameter(graph)), float(nx.average_shortest_path_length(graph))


def graph_stats(net: DependenceNetwork, labels: Optional[np.ndarray] = None) -> GraphStats:
    """
    计算节点中心性和全局网络统计量

    度中心性除以 (n-1)；接近中心性为所在连通分量内的 (n_c-1)/sum(d)；介数中心性乘以 2/((n-1)(n-2))；
    特征向量中心性最大值缩放为1。

    Args:
        net: 依赖网络
        labels: 模块度使用的划分，默认取 net.clusters

    Raises:
        ValidationError: 节点集为空
    """
    if net.n_nodes == 0:
        raise ValidationError("网络没有节点")
    graph = net.graph()
    labels = labels if labels is not None else net.clusters

    degree = nx.degree_centrality(graph) if net.n_nodes > 1 else {0: 0.0}
    closeness = nx.closeness_centrality(graph, wf_improved=False)
    betweenness = nx.betweenness_centrality(graph, normalized=True)
    clustering = nx.clustering(graph)
    order = range(net.n_nodes)
    nodes = pd.DataFrame({
        "node": net.nodes,
        "degree": [degree[v] for v in order],
        "closeness": [closeness[v] for v in order],
        "betweenness": [betweenness[v] for v in order],
        "eigenvector": eigenvector_scores(net.adjacency),
        "clustering": [clustering[v] for v in order],
    })
    if labels is not None:
        nodes["cluster"] = np.asarray(labels, dtype=int)

    n_components = nx.number_connected_components(graph)
    largest_only = n_components > 1
    if largest_only:
        size = max(len(c) for c in nx.connected_components(graph))
        # 节点数相同的最大分量按 (边数, 直径, 平均距离) 取最大者，结果与节点编号无关
        _, diameter, mean_distance = max(
            (core.number_of_edges(),) + _distances(core)
            for core in (graph.subgraph(c) for c in nx.connected_components(graph))
            if core.number_of_nodes() == size
        )
        logger.warning(f"网络有 {n_components} 个连通分量，距离指标在最大分量（{size} 个节点）上计算")
    else:
        diameter, mean_distance = _distances(graph)

    return GraphStats(
        nodes=nodes,
        density=float(nx.density(graph)) if net.n_nodes > 1 else 0.0,
        diameter=diameter,
        mean_distance=mean_distance,
        avg_clustering=float(nx.average_clustering(graph)),
        modularity=network_modularity(graph, labels),
        n_components=int(n_components),
        largest_component_only=largest_only,
    )


# ============================================================================
# 层次聚类
# ============================================================================

def complete_linkage(distance: np.ndarray, k: int) -> np.ndarray:
    """
    完全连接凝聚聚类，切成 k 个簇

    合并树由 scipy 的 complete linkage 构建，距离相同时的合并顺序只取决于节点下标；
    按合并顺序回退到恰好 k 个簇。标签按各簇最小节点下标依次编号为 1..k。
    """
    dist = np.asarray(distance, dtype=float)
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"簇数 k={k} 必须位于 [1, {n}]")
    if n == 1:
        return np.ones(1, dtype=int)

    tree = linkage(squareform(dist, checks=False), method="complete")
    raw = cut_tree(tree, n_clusters=k).ravel()
    mapping: Dict[int, int] = {}
    for label in raw:
        mapping.setdefault(int(label), len(mapping) + 1)
    return np.array([mapping[int(label)] for label in raw], dtype=int)


def adjacency_distance(adjacency: np.ndarray) -> np.ndarray:
    """邻接矩阵行之间的Hamming距离（不一致潜在邻居的比例）"""
    adj = np.asarray(adjacency, dtype=bool)
    if adj.shape[0] < 2:
        return np.zeros((adj.shape[0], adj.shape[0]))
    return squareform(pdist(adj, metric="hamming"))


def hierarchical_cluster(net: DependenceNetwork, k: int = DEFAULT_CLUSTERS) -> np.ndarray:
    """
    对邻接矩阵做完全连接层次聚类并切成 k 个簇

    Returns:
        每个节点的簇标签（1..k）

    Raises:
        ValidationError: k < 1 或 k 大于节点数
    """
    if k < 1 or k > net.n_nodes:
        raise ValidationError(f"簇数 k={k} 必须位于 [1, {net.n_nodes}]")
    return complete_linkage(adjacency_distance(net.adjacency), k)


# ============================================================================
# Erdos-Renyi 零模型
# ============================================================================

@dataclass
class NullModelReport:
    """
    G(n, M) 零模型比较结果

    Attributes:
        observed: 观测网络的 clustering / modularity
        null: 每个随机图一行的统计量
        p_values: 经验双侧p值 (1 + #{|null-mean| >= |obs-mean|}) / (1 + R)
        ks_stat / ks_p: 观测与零模型度分布的双样本KS检验
        n_reps: 随机图个数
        n_edges: 边数 M
    """

    observed: Dict[str, float]
    null: pd.DataFrame
    p_values: Dict[str, float]
    ks_stat: float
    ks_p: float
    n_reps: int
    n_edges: int

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "statistic": name,
                "observed": self.observed[name],
                "null_mean": float(self.null[name].mean()),
                "null_sd": float(self.null[name].std(ddof=1)),
                "p_value": self.p_values[name],
            }
            for name in ("clustering", "modularity")
        ]
        rows.append({"statistic": "degree_ks", "observed": self.ks_stat,
                     "null_mean": np.nan, "null_sd": np.nan, "p_value": self.ks_p})
        return pd.DataFrame(rows)


def _structure(graph: nx.Graph, k: int) -> Tuple[float, float]:
    net = DependenceNetwork.from_graph(graph)
    labels = hierarchical_cluster(net, min(k, net.n_nodes))
    return float(nx.average_clustering(graph)), network_modularity(net.graph(), labels)


def _null_replicate(task) -> Tuple[float, float, List[int]]:
    n, m, seed, k = task
    graph = nx.gnm_random_graph(n, m, seed=seed)
    clustering, modularity = _structure(graph, k)
    return clustering, modularity, [d for _, d in graph.degree()]


def empirical_p_value(observed: float, null: np.ndarray) -> float:
    """以零分布均值为中心的经验双侧p值"""
    null = np.asarray(null, dtype=float)
    null = null[np.isfinite(null)]
    if not np.isfinite(observed) or null.size == 0:
        return float("nan")
    center = null.mean()
    extreme = np.sum(np.abs(null - center) >= abs(observed - center))
    return float((1 + extreme) / (1 + null.size))


def er_null_comparison(
    net: DependenceNetwork,
    n_reps: int = DEFAULT_NULL_REPS,
    seed: int = 0,
    k: int = DEFAULT_CLUSTERS,
    threads: int = 1,
    show_progress: bool = False
) -> NullModelReport:
    """
    与边数相同的 Erdos-Renyi G(n, M) 随机图比较

    每个随机图计算平均聚类系数和按 k 簇层次聚类划分的模块度。

    Args:
        net: 观测网络
        n_reps: 随机图个数，>= 100
        seed: 随机种子
        k: 聚类簇数
        threads: 并行进程数
        show_progress: 是否显示进度条

    Raises:
        ValidationError: n_reps < 100
    """
    if n_reps < 100:
        raise ValidationError(f"零模型至少需要100个随机图，当前 {n_reps}")
    n, m = net.n_nodes, net.n_edges
    graph_seeds = [
        int(make_rng(seed, STREAM_NULL_MODEL, rep).integers(0, 2 ** 32 - 1))
        for rep in range(n_reps)
    ]
    results = run_tasks(_null_replicate, [(n, m, s, k) for s in graph_seeds],
                        threads=threads, show_progress=show_progress, desc="null model",
                        chunksize=max(1, n_reps // 16))

    obs_clustering, obs_modularity = _structure(net.graph(), k)
    null = pd.DataFrame({
        "rep": np.arange(n_reps),
        "clustering": [r[0] for r in results],
        "modularity": [r[1] for r in results],
    })
    observed = {"clustering": obs_clustering, "modularity": obs_modularity}
    p_values = {name: empirical_p_value(observed[name], null[name].to_numpy())
                for name in observed}

    observed_degrees = net.adjacency.sum(axis=1)
    null_degrees = np.concatenate([r[2] for r in results])
    ks = stats.ks_2samp(observed_degrees, null_degrees)
    logger.info(
        f"零模型比较: M={m}, 聚类系数 p={p_values['clustering']:.4g}, "
        f"模块度 p={p_values['modularity']:.4g}, KS p={ks.pvalue:.4g}"
    )
    return NullModelReport(
        observed=observed,
        null=null,
        p_values=p_values,
        ks_stat=float(ks.statistic),
        ks_p=float(ks.pvalue),
        n_reps=n_reps,
        n_edges=m,
    )


# ============================================================================
# 自助法稳定性
# ============================================================================

@dataclass
class StabilityReport:
    """
    自助法稳定性结果

    Attributes:
        replicates: 每次重抽一行：significant、overlap、dice、skipped
        selection: 每个物种对一行：是否在原数据中显著、被选中的频率
        original_significant: 原数据显著对个数
    """

    replicates: pd.DataFrame
    selection: pd.DataFrame
    original_significant: int

    def summary(self) -> Dict:
        record = {"boot_reps": int(len(self.replicates)),
                  "original_significant": self.original_significant}
        for column in ("significant", "overlap", "dice"):
            values = self.replicates[column].to_numpy(dtype=float)
            record[column] = {
                "mean": float(np.mean(values)),
                "sd": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
                "min": float(np.min(values)),
                "max": float(np.max(values)),
            }
        original = self.selection[self.selection["original"]]
        frequency = original["frequency"].to_numpy(dtype=float)
        record["selected_in_all"] = int(np.sum(frequency == 1.0))
        record["selected_over_90pct"] = int(np.sum(frequency > 0.9))
        record["selected_under_50pct"] = int(np.sum(frequency < 0.5))
        return record


def overlap_coefficient(a: Set, b: Set) -> float:
    """|A∩B| / min(|A|, |B|)，两者皆空时为1"""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / min(len(a), len(b))


def dice_coefficient(a: Set, b: Set) -> float:
    """2|A∩B| / (|A| + |B|)，两者皆空时为1"""
    if not a and not b:
        return 1.0
    return 2 * len(a & b) / (len(a) + len(b))


def _significant_pairs(table: PairTable) -> Set[Tuple[str, str]]:
    frame = table.frame
    return set(zip(frame.loc[frame["significant"], "taxon_i"],
                   frame.loc[frame["significant"], "taxon_j"]))


def bootstrap_stability(
    table: pd.DataFrame,
    spec: Optional[ZibRegressionSpec] = None,
    alpha: float = DEFAULT_ALPHA,
    n_boot: int = DEFAULT_BOOT_REPS,
    seed: int = 0,
    fdr: str = "by",
    original: Optional[PairTable] = None,
    resample: bool = True,
    threads: int = 1,
    show_progress: bool = False
) -> StabilityReport:
    """
    按样本有放回重抽，重复成对分析与FDR校正，比较显著对集合

    Args:
        table: 样本 x 物种 相对丰度表
        spec: 协变量回归设定（与 table 行对齐）
        alpha: FDR水平
        n_boot: 重抽次数，>= 2
        seed: 随机种子
        fdr: by 或 bh
        original: 原数据的成对分析结果（已构建网络），None时重新计算
        resample: False 时每次使用原样本（用于检验流程本身）
        threads: 并行进程数
        show_progress: 是否显示进度条

    Raises:
        ValidationError: n_boot < 2
    """
    if n_boot < 2:
        raise ValidationError(f"自助法至少需要2次重抽，当前 {n_boot}")
    if original is None:
        original = pairwise_analysis(table, spec, threads=threads, show_progress=show_progress)
    if "significant" not in original.frame:
        build_network(original, alpha, fdr=fdr)
    reference = _significant_pairs(original)

    n = len(table)
    pairs = list(zip(original.frame["taxon_i"], original.frame["taxon_j"]))
    counts = {pair: 0 for pair in pairs}
    rows = []
    for b in range(n_boot):
        if resample:
            idx = make_rng(seed, STREAM_BOOTSTRAP, b).integers(0, n, size=n)
        else:
            idx = np.arange(n)
        sample = table.iloc[idx].reset_index(drop=True)
        sub_spec = spec.subset(idx) if spec is not None else None
        boot = pairwise_analysis(sample, sub_spec, threads=threads)
        build_network(boot, alpha, fdr=fdr)
        selected = _significant_pairs(boot)
        for pair in selected:
            counts[pair] += 1
        rows.append({
            "replicate": b,
            "significant": len(selected),
            "overlap": overlap_coefficient(reference, selected),
            "dice": dice_coefficient(reference, selected),
            "skipped": int(boot.frame["p_value"].isna().sum()),
        })
        logger.info(f"自助法 {b + 1}/{n_boot}: {len(selected)} 个显著对")

    selection = pd.DataFrame({
        "taxon_i": [p[0] for p in pairs],
        "taxon_j": [p[1] for p in pairs],
        "original": [p in reference for p in pairs],
        "frequency": [counts[p] / n_boot for p in pairs],
    })
    return StabilityReport(replicates=pd.DataFrame(rows), selection=selection,
                           original_significant=len(reference))


__all__ = [
    "PAIR_COLUMNS",
    "EDGE_COLUMNS",
    "PairTable",
    "FdrResult",
    "DependenceNetwork",
    "GraphStats",
    "NullModelReport",
    "StabilityReport",
    "pairwise_analysis",
    "step_up_fdr",
    "by_fdr",
    "build_network",
    "eigenvector_scores",
    "network_modularity",
    "graph_stats",
    "complete_linkage",
    "adjacency_distance",
    "hierarchical_cluster",
    "empirical_p_value",
    "er_null_comparison",
    "overlap_coefficient",
    "dice_coefficient",
    "bootstrap_stability",
]
