"""
pytest配置和共享fixtures

提供测试所需的边际参数设定、模拟丰度表和临时目录
"""

import pytest
import pandas as pd
import numpy as np
from pathlib import Path
import tempfile
import shutil

from src.simulation import sample_pair
from src.zib_margin import ZibParams


# ============================================================================
# pytest配置
# ============================================================================

def pytest_configure(config):
    """pytest配置钩子"""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "property: marks tests as property-based tests"
    )


# ============================================================================
# 临时目录fixtures
# ============================================================================

@pytest.fixture
def temp_dir():
    """创建临时目录用于测试"""
    temp_path = tempfile.mkdtemp()
    yield Path(temp_path)
    shutil.rmtree(temp_path, ignore_errors=True)


@pytest.fixture
def rng():
    """固定种子的随机数发生器"""
    return np.random.default_rng(20240101)


# ============================================================================
# 边际参数fixtures
# ============================================================================

@pytest.fixture
def low_zero_margins():
    """低零膨胀设定：p=(0.10, 0.25)，(mu, phi)=((2/7, 7), (5/7, 7))"""
    return ZibParams(p=0.10, mu=2 / 7, phi=7.0), ZibParams(p=0.25, mu=5 / 7, phi=7.0)


@pytest.fixture
def high_zero_margins():
    """高零膨胀设定：p=(0.60, 0.75)"""
    return ZibParams(p=0.60, mu=2 / 7, phi=7.0), ZibParams(p=0.75, mu=5 / 7, phi=7.0)


# ============================================================================
# 模拟丰度表
# ============================================================================

def make_planted_table(
    n_samples: int,
    n_pairs: int,
    theta: float = 3.0,
    seed: int = 7
) -> pd.DataFrame:
    """
    构造含 n_pairs 对依赖物种的相对丰度表

    物种 2k 与 2k+1 之间 theta 依赖，不同对之间独立。每个值除以物种数，
    使行和小于1（剩余部分视为其他物种）。

    Returns:
        样本 x 物种 DataFrame，物种名为 t00, t01, ...
    """
    rng = np.random.default_rng(seed)
    n_taxa = 2 * n_pairs
    gi = ZibParams(p=0.10, mu=2 / 7, phi=7.0)
    gj = ZibParams(p=0.25, mu=5 / 7, phi=7.0)
    columns = {}
    for k in range(n_pairs):
        data, _ = sample_pair(n_samples, gi, gj, theta, rng)
        columns[f"t{2 * k:02d}"] = data.x_i / n_taxa
        columns[f"t{2 * k + 1:02d}"] = data.x_j / n_taxa
    frame = pd.DataFrame(columns, index=[f"s{i:03d}" for i in range(n_samples)])
    frame.index.name = "sample_id"
    return frame


def planted_edges(n_pairs: int):
    """make_planted_table 中的依赖物种对"""
    return {(f"t{2 * k:02d}", f"t{2 * k + 1:02d}") for k in range(n_pairs)}


@pytest.fixture
def small_planted_table():
    """80个样本、4个物种（2对依赖）的相对丰度表"""
    return make_planted_table(80, 2, seed=11)


@pytest.fixture
def counts_file(temp_dir):
    """小型计数表TSV文件（样本为行）"""
    path = temp_dir / "counts.tsv"
    path.write_text(
        "sample\ttaxA\ttaxB\n"
        "s1\t10\t0\n"
        "s2\t3\t7\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def planted_table_factory():
    """make_planted_table 工厂，供需要不同规模的测试使用"""
    return make_planted_table


@pytest.fixture
def planted_edges_factory():
    return planted_edges
