"""
并行任务调度模块

按任务顺序返回结果的进程池封装，供刀切法、模拟研究、零模型和自助法使用。
随机种子由调用方放入任务参数中，因此结果与工作进程数无关。
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np
from tqdm import tqdm

from config import logger, ValidationError


T = TypeVar("T")
R = TypeVar("R")

# 随机数流编号，对应 SeedSequence 的 spawn_key 第一位
STREAM_SIMULATION = 0
STREAM_NULL_MODEL = 1
STREAM_BOOTSTRAP = 2


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """
    按 (seed, 流编号, 单元, 重复) 派生独立随机数发生器

    同一组键在任何进程、任何调度顺序下都得到相同的随机数序列。

    Example:
        >>> a = make_rng(1, STREAM_SIMULATION, 0, 5).random()
        >>> b = make_rng(1, STREAM_SIMULATION, 0, 5).random()
        >>> a == b
        True
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def run_tasks(
    func: Callable[[T], R],
    tasks: Iterable[T],
    threads: int = 1,
    show_progress: bool = False,
    desc: Optional[str] = None,
    chunksize: int = 1
) -> List[R]:
    """
    对任务列表逐个调用 func，按任务顺序返回结果

    threads <= 1 时在当前进程顺序执行；否则使用 ProcessPoolExecutor.map，
    func 和任务必须可被pickle（模块顶层函数）。

    Args:
        func: 单任务函数
        tasks: 任务参数序列
        threads: 工作进程数
        show_progress: 是否显示tqdm进度条
        desc: 进度条描述
        chunksize: 每次分发给工作进程的任务数

    Returns:
        与 tasks 顺序一致的结果列表

    Raises:
        ValidationError: threads 或 chunksize 非法
    """
    if threads < 1:
        raise ValidationError(f"threads 必须 >= 1，当前值: {threads}")
    if chunksize < 1:
        raise ValidationError(f"chunksize 必须 >= 1，当前值: {chunksize}")

    task_list = list(tasks)
    if not task_list:
        return []

    if threads == 1 or len(task_list) == 1:
        iterator = (func(task) for task in task_list)
        return list(tqdm(iterator, total=len(task_list), desc=desc, disable=not show_progress))

    workers = min(threads, len(task_list))
    logger.debug(f"启动进程池: {workers} 个进程, {len(task_list)} 个任务")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        iterator = executor.map(func, task_list, chunksize=chunksize)
        return list(tqdm(iterator, total=len(task_list), desc=desc, disable=not show_progress))


__all__ = [
    "STREAM_SIMULATION",
    "STREAM_NULL_MODEL",
    "STREAM_BOOTSTRAP",
    "make_rng",
    "run_tasks",
]
