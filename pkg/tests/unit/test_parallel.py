"""
单元测试：并行任务调度与随机数流
"""

import math

import numpy as np
import pytest

from src.parallel import (
    STREAM_SIMULATION,
    STREAM_NULL_MODEL,
    make_rng,
    run_tasks,
)
from config import ValidationError


class TestMakeRng:
    """测试随机数流派生"""

    def test_same_key_same_stream(self):
        a = make_rng(7, STREAM_SIMULATION, 3, 11).random(5)
        b = make_rng(7, STREAM_SIMULATION, 3, 11).random(5)
        np.testing.assert_array_equal(a, b)

    def test_different_keys_differ(self):
        base = make_rng(7, STREAM_SIMULATION, 3, 11).random(5)
        assert not np.array_equal(base, make_rng(7, STREAM_SIMULATION, 3, 12).random(5))
        assert not np.array_equal(base, make_rng(7, STREAM_NULL_MODEL, 3, 11).random(5))
        assert not np.array_equal(base, make_rng(8, STREAM_SIMULATION, 3, 11).random(5))


class TestRunTasks:
    """测试任务调度"""

    def test_sequential_keeps_order(self):
        assert run_tasks(lambda x: x * 2, [3, 1, 2]) == [6, 2, 4]

    def test_pool_matches_sequential(self):
        tasks = [float(i) for i in range(20)]
        assert run_tasks(math.sqrt, tasks, threads=3, chunksize=2) == [math.sqrt(t) for t in tasks]

    def test_single_task_runs_inline(self):
        # lambda 无法pickle，单个任务不经过进程池
        assert run_tasks(lambda x: x + 1, [1], threads=4) == [2]

    def test_empty(self):
        assert run_tasks(math.sqrt, [], threads=4) == []

    @pytest.mark.parametrize("kwargs", [{"threads": 0}, {"chunksize": 0}])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValidationError):
            run_tasks(math.sqrt, [1.0], **kwargs)
