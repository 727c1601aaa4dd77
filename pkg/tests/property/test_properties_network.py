"""
依赖网络属性测试

使用基于属性的测试验证FDR校正与网络统计量的通用正确性
"""

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, assume, strategies as st

from src.network import DependenceNetwork, by_fdr, step_up_fdr, graph_stats


# ============================================================================
# 测试数据生成策略
# ============================================================================

p_values_strategy = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=60
)
alpha_strategy = st.sampled_from([0.01, 0.05, 0.1, 0.2])


@st.composite
def connected_graph_strategy(draw):
    """3到6个节点的连通图：先放一条随机排列的路径，再随机加边"""
    n = draw(st.integers(min_value=3, max_value=6))
    order = draw(st.permutations(list(range(n))))
    adj = np.zeros((n, n), dtype=bool)
    for a, b in zip(order[:-1], order[1:]):
        adj[a, b] = adj[b, a] = True
    for a, b in combinations(range(n), 2):
        if draw(st.booleans()):
            adj[a, b] = adj[b, a] = True
    return adj


@st.composite
def relabeled_graph_strategy(draw):
    """2到7个节点的任意图（可不连通）及一个节点置换"""
    n = draw(st.integers(min_value=2, max_value=7))
    adj = np.zeros((n, n), dtype=bool)
    for a, b in combinations(range(n), 2):
        if draw(st.booleans()):
            adj[a, b] = adj[b, a] = True
    perm = np.array(draw(st.permutations(list(range(n)))))
    return adj, perm


# ============================================================================
# 参照实现
# ============================================================================

def step_up_oracle(p, alpha):
    """按定义求最大的 k 使 p_(k) <= k*alpha/(m*c_m)"""
    p = np.asarray(p, dtype=float)
    m = p.size
    c_m = np.sum(1.0 / np.arange(1, m + 1))
    order = np.argsort(p, kind="mergesort")
    thresholds = np.arange(1, m + 1) * alpha / (m * c_m)
    passing = np.flatnonzero(p[order] <= thresholds)
    reject = np.zeros(m, dtype=bool)
    if passing.size:
        reject[order[:passing[-1] + 1]] = True
    return reject, p[order] - thresholds


def all_pairs_distances(adj):
    n = adj.shape[0]
    dist = np.where(adj, 1.0, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(n):
        dist = np.minimum(dist, dist[:, [k]] + dist[[k], :])
    return dist


def path_counts(adj, dist):
    """sigma[s, t]：s 到 t 的最短路径条数"""
    n = adj.shape[0]
    sigma = np.zeros((n, n))
    for s in range(n):
        sigma[s, s] = 1.0
        for d in range(1, n):
            for t in range(n):
                if dist[s, t] == d:
                    sigma[s, t] = sum(sigma[s, u] for u in range(n) if adj[u, t] and dist[s, u] == d - 1)
    return sigma


def betweenness_oracle(adj):
    n = adj.shape[0]
    dist = all_pairs_distances(adj)
    sigma = path_counts(adj, dist)
    scores = np.zeros(n)
    for s, t in combinations(range(n), 2):
        for v in range(n):
            if v in (s, t):
                continue
            if dist[s, v] + dist[v, t] == dist[s, t]:
                scores[v] += sigma[s, v] * sigma[v, t] / sigma[s, t]
    return scores * 2.0 / ((n - 1) * (n - 2))


def eigenvector_oracle(adj, iterations=5000):
    """对 A + I 做幂迭代，最大分量缩放为1"""
    shifted = adj.astype(float) + np.eye(adj.shape[0])
    x = np.ones(adj.shape[0])
    for _ in range(iterations):
        x = shifted @ x
        x /= x.max()
    return x


# ============================================================================
# 属性测试
# ============================================================================

class TestProperty7StepUpFdr:
    """
    属性 7: BY step-up 校正

    拒绝集合等于按定义求得的前 k* 个最小p值；校正后p值不小于原始p值且不超过1。
    """

    @given(p=p_values_strategy, alpha=alpha_strategy)
    @settings(max_examples=300, deadline=None)
    def test_property_7_matches_definition(self, p, alpha):
        expected, gaps = step_up_oracle(p, alpha)
        # 恰好落在阈值上的p值对浮点舍入敏感
        assume(np.all(np.abs(gaps) > 1e-12))
        np.testing.assert_array_equal(by_fdr(p, alpha).reject, expected)

    @given(p=p_values_strategy, alpha=alpha_strategy)
    @settings(max_examples=200, deadline=None)
    def test_property_7_adjusted_bounds(self, p, alpha):
        result = by_fdr(p, alpha)
        raw = np.asarray(p)
        assert np.all(result.p_adjusted >= raw - 1e-15)
        assert np.all(result.p_adjusted <= 1.0)

    @given(p=p_values_strategy, alpha=alpha_strategy)
    @settings(max_examples=200, deadline=None)
    def test_property_7_by_subset_of_bh(self, p, alpha):
        by = step_up_fdr(p, alpha, "by").reject
        bh = step_up_fdr(p, alpha, "bh").reject
        assert np.all(bh[by])


class TestProperty8CentralityOracles:
    """
    属性 8: 小型连通图的网络统计量

    介数、接近中心性、特征向量中心性、直径和平均距离与逐对枚举的参照实现一致。
    """

    @given(adj=connected_graph_strategy())
    @settings(max_examples=100, deadline=None)
    def test_property_8_matches_brute_force(self, adj):
        n = adj.shape[0]
        net = DependenceNetwork.from_adjacency(adj)
        stats = graph_stats(net)
        dist = all_pairs_distances(adj)

        assert stats.n_components == 1
        assert not stats.largest_component_only
        np.testing.assert_allclose(stats.nodes["degree"], adj.sum(axis=1) / (n - 1))
        np.testing.assert_allclose(stats.nodes["closeness"], (n - 1) / dist.sum(axis=1))
        np.testing.assert_allclose(stats.nodes["betweenness"], betweenness_oracle(adj), atol=1e-12)
        np.testing.assert_allclose(stats.nodes["eigenvector"], eigenvector_oracle(adj), atol=1e-6)
        assert stats.diameter == dist.max()
        assert stats.mean_distance == pytest.approx(dist.sum() / (n * (n - 1)))
        assert stats.density == pytest.approx(adj.sum() / (n * (n - 1)))


class TestProperty9Relabeling:
    """
    属性 9: 节点重新编号

    任意图（含不连通图）重新编号后，节点统计量随编号置换，全局统计量不变。
    """

    @given(case=relabeled_graph_strategy())
    @settings(max_examples=150, deadline=None)
    def test_property_9_permutation_equivariant(self, case):
        adj, perm = case
        original = graph_stats(DependenceNetwork.from_adjacency(adj))
        permuted = graph_stats(DependenceNetwork.from_adjacency(adj[np.ix_(perm, perm)]))

        for column in ("degree", "closeness", "betweenness", "eigenvector", "clustering"):
            np.testing.assert_allclose(permuted.nodes[column].to_numpy(),
                                       original.nodes[column].to_numpy()[perm], atol=1e-9)
        assert permuted.n_components == original.n_components
        assert permuted.diameter == original.diameter
        assert permuted.mean_distance == pytest.approx(original.mean_distance)
        assert permuted.density == pytest.approx(original.density)
        assert permuted.avg_clustering == pytest.approx(original.avg_clustering)
