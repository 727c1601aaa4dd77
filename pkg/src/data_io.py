"""
数据读写模块

读取物种计数表和协变量表，做流行率过滤与总和归一化，按样本标识对齐协变量（完整病例分析），
并以固定格式写出TSV、JSON和运行清单（manifest）。

**输出格式约定：**
- TSV：制表符分隔，浮点数保留17位有效数字，换行符统一为 \\n
- JSON：键排序、缩进2格、NaN/inf 写为 null，不含时间戳（重复运行字节一致）
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import (
    logger,
    ValidationError,
    DataFileNotFoundError,
    ParseError,
    DuplicateIdError,
    EmptyAfterFilterError,
    NoOverlapError,
    DEFAULT_MIN_PREVALENCE,
    DEFAULT_UNASSIGNED_LABELS,
    UNIT_CLAMP,
    FLOAT_FORMAT,
    CONFIG_SCHEMA_VERSION,
)


PathLike = Union[str, Path]


def _separator(path: Path) -> str:
    return "," if path.suffix.lower() == ".csv" else "\t"


def _check_exists(path: PathLike) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataFileNotFoundError(f"输入文件不存在: {path}")
    return path


def _first_duplicate(ids: Sequence[str]) -> Optional[str]:
    seen = set()
    for value in ids:
        if value in seen:
            return value
        seen.add(value)
    return None


# ============================================================================
# 丰度表
# ============================================================================

@dataclass
class AbundanceTable:
    """
    样本 x 物种 丰度表

    Attributes:
        values: 行为样本、列为物种的非负数值表（索引与列名均为字符串标识）
        is_normalized: 是否已做总和归一化（每行和为1）
        report: 过滤步骤的计数记录
    """

    values: pd.DataFrame
    is_normalized: bool = False
    report: Dict[str, int] = field(default_factory=dict)

    @property
    def sample_ids(self) -> List[str]:
        return [str(s) for s in self.values.index]

    @property
    def taxon_ids(self) -> List[str]:
        return [str(t) for t in self.values.columns]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_taxa(self) -> int:
        return self.values.shape[1]

    def subset_samples(self, sample_ids: Sequence[str]) -> "AbundanceTable":
        return AbundanceTable(self.values.loc[list(sample_ids)].copy(),
                              is_normalized=self.is_normalized, report=dict(self.report))


def load_counts(path: PathLike, taxa_as_rows: bool = False) -> AbundanceTable:
    """
    读取计数表（TSV或CSV，首行和首列为标识）

    后缀为 .csv 时按逗号分隔，否则按制表符分隔。标识重复在pandas改名之前检出；
    非数值或负数单元格报告其所在行号（文件中从1起算）和列名。

    Args:
        path: 文件路径
        taxa_as_rows: True 表示每行一个物种（列为样本），False 表示每列一个物种

    Returns:
        未归一化的 AbundanceTable（行为样本）

    Raises:
        DataFileNotFoundError: 文件不存在
        ParseError: 文件为空、单元格非数值或为负
        DuplicateIdError: 样本或物种标识重复

    Example:
        >>> table = load_counts("counts.tsv")
        >>> table.n_taxa
        2
    """
    path = _check_exists(path)
    try:
        raw = pd.read_csv(path, sep=_separator(path), header=None, dtype=str,
                          keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"文件为空: {path}") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"无法解析 {path}: {e}") from e

    if raw.shape[0] < 2 or raw.shape[1] < 2:
        raise ParseError(f"{path} 至少需要一个标识行、一个标识列和一个数据单元格")

    column_ids = [str(v).strip() for v in raw.iloc[0, 1:]]
    row_ids = [str(v).strip() for v in raw.iloc[1:, 0]]
    column_kind, row_kind = ("样本", "物种") if taxa_as_rows else ("物种", "样本")
    for ids, kind in ((column_ids, column_kind), (row_ids, row_kind)):
        duplicate = _first_duplicate(ids)
        if duplicate is not None:
            raise DuplicateIdError(f"{path} 中{kind}标识重复: '{duplicate}'")

    cells = raw.iloc[1:, 1:].apply(lambda col: col.str.strip())
    numeric = cells.apply(pd.to_numeric, errors="coerce")
    for check, reason in ((numeric.isna(), "不是数值"), (numeric < 0, "为负数")):
        mask = check.to_numpy()
        if mask.any():
            r, c = np.argwhere(mask)[0]
            raise ParseError(
                f"{path} 第 {r + 2} 行、列 '{column_ids[c]}' 的值 '{cells.iat[r, c]}' {reason}"
            )

    values = pd.DataFrame(numeric.to_numpy(dtype=float), index=row_ids, columns=column_ids)
    if taxa_as_rows:
        values = values.T
    values.index.name = "sample_id"
    values.columns.name = "taxon_id"
    logger.info(f"读取计数表: {path} ({values.shape[0]} 个样本 x {values.shape[1]} 个物种)")
    return AbundanceTable(values=values)


def filter_and_normalize(
    table: AbundanceTable,
    min_prevalence: float = DEFAULT_MIN_PREVALENCE,
    drop_unassigned: bool = True,
    unassigned_labels: Iterable[str] = DEFAULT_UNASSIGNED_LABELS,
    normalize: bool = True
) -> AbundanceTable:
    """
    过滤并做总和归一化

    依次：去除未分类物种（标签不区分大小写）、去除流行率低于阈值的物种、
    去除过滤后总和为0的样本，然后每行除以行和。归一化后等于1的值截断为 1 - 1e-10。
    normalize=False 时输入应已是相对丰度（取值不超过1、行和不超过1），只做过滤。

    Args:
        table: 原始计数表
        min_prevalence: 最低流行率（非零样本比例），取值于 [0, 1]
        drop_unassigned: 是否去除未分类物种
        unassigned_labels: 视为未分类的标签
        normalize: 是否做总和归一化

    Returns:
        归一化后的 AbundanceTable，report 记录各步骤去除的数量

    Raises:
        ValidationError: min_prevalence 不在 [0, 1]
        ParseError: normalize=False 时取值或行和超过1
        EmptyAfterFilterError: 过滤后没有物种或没有样本
    """
    if not 0 <= min_prevalence <= 1:
        raise ValidationError(f"min_prevalence 必须位于 [0, 1]: {min_prevalence}")
    values = table.values
    report = {"samples_in": table.n_samples, "taxa_in": table.n_taxa}

    if drop_unassigned:
        labels = {str(label).strip().lower() for label in unassigned_labels}
        keep = [str(t).strip().lower() not in labels for t in values.columns]
        report["taxa_unassigned"] = int(len(keep) - sum(keep))
        values = values.loc[:, keep]
    else:
        report["taxa_unassigned"] = 0

    prevalence = (values > 0).mean(axis=0)
    keep = prevalence >= min_prevalence
    report["taxa_low_prevalence"] = int((~keep).sum())
    values = values.loc[:, keep]
    if values.shape[1] == 0:
        raise EmptyAfterFilterError(f"过滤后没有剩余物种（流行率阈值 {min_prevalence}）")

    totals = values.sum(axis=1)
    nonzero = totals > 0
    report["samples_zero_total"] = int((~nonzero).sum())
    values = values.loc[nonzero]
    if values.shape[0] == 0:
        raise EmptyAfterFilterError("过滤后所有样本的总和均为0")

    if normalize:
        normalized = values.div(values.sum(axis=1), axis=0)
    else:
        if (values.to_numpy() > 1).any() or (values.sum(axis=1) > 1 + 1e-9).any():
            raise ParseError("相对丰度输入的取值和行和不能超过1")
        normalized = values
    at_one = normalized.to_numpy() >= 1.0
    if at_one.any():
        logger.warning(f"{int(at_one.sum())} 个归一化值等于1，已截断为 {UNIT_CLAMP}")
        normalized = normalized.clip(upper=UNIT_CLAMP)

    report["samples_out"] = normalized.shape[0]
    report["taxa_out"] = normalized.shape[1]
    logger.info(
        f"过滤完成: 物种 {report['taxa_in']} -> {report['taxa_out']}, "
        f"样本 {report['samples_in']} -> {report['samples_out']}"
    )
    return AbundanceTable(values=normalized, is_normalized=normalize, report=report)


# ============================================================================
# 协变量
# ============================================================================

@dataclass
class CovariateTable:
    """
    数值化后的协变量表（索引为样本标识，与丰度表逐行对齐）

    Attributes:
        frame: 数值协变量；分类变量已展开为 column[level] 形式的指示列
        terms: 原始列名 -> 展开后的列名列表
        reference_levels: 分类变量 -> 参照水平
    """

    frame: pd.DataFrame
    terms: Dict[str, List[str]] = field(default_factory=dict)
    reference_levels: Dict[str, str] = field(default_factory=dict)

    @property
    def sample_ids(self) -> List[str]:
        return [str(s) for s in self.frame.index]

    def expand_terms(self, names: Sequence[str]) -> List[str]:
        """
        把公式中的项（原始列名）换成设计矩阵列名

        Raises:
            ValidationError: 项不在协变量表中
        """
        columns: List[str] = []
        for name in names:
            if name in self.terms:
                columns.extend(self.terms[name])
            elif name in self.frame.columns:
                columns.append(name)
            else:
                raise ValidationError(f"公式项 '{name}' 不在协变量表中")
        return columns


@dataclass
class AlignmentReport:
    """对齐过程的计数记录"""

    n_abundance: int
    n_covariates: int
    n_shared: int
    n_complete: int
    missing_covariates: List[str] = field(default_factory=list)
    incomplete: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_abundance": self.n_abundance,
            "n_covariates": self.n_covariates,
            "n_shared": self.n_shared,
            "n_complete": self.n_complete,
            "missing_covariates": list(self.missing_covariates),
            "incomplete": list(self.incomplete),
        }


def load_covariates(path: PathLike) -> pd.DataFrame:
    """
    读取协变量表（首列为样本标识，首行为列名）

    空单元格与常见缺失标记（NA、nan等）读为缺失值。

    Raises:
        DataFileNotFoundError: 文件不存在
        ParseError: 文件为空或没有协变量列
        DuplicateIdError: 样本标识或列名重复
    """
    path = _check_exists(path)
    sep = _separator(path)
    try:
        header = pd.read_csv(path, sep=sep, header=None, nrows=1, dtype=str,
                             keep_default_na=False)
        frame = pd.read_csv(path, sep=sep, dtype=str)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"文件为空: {path}") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"无法解析 {path}: {e}") from e

    names = [str(v).strip() for v in header.iloc[0]]
    if len(names) < 2:
        raise ParseError(f"{path} 没有协变量列")
    duplicate = _first_duplicate(names[1:])
    if duplicate is not None:
        raise DuplicateIdError(f"{path} 中协变量列名重复: '{duplicate}'")
    frame.columns = names

    ids = frame.iloc[:, 0].astype(str).str.strip()
    duplicate = _first_duplicate(list(ids))
    if duplicate is not None:
        raise DuplicateIdError(f"{path} 中样本标识重复: '{duplicate}'")
    frame = frame.iloc[:, 1:].apply(lambda col: col.str.strip())
    frame.index = pd.Index(ids, name="sample_id")
    logger.info(f"读取协变量表: {path} ({frame.shape[0]} 个样本, 列: {list(frame.columns)})")
    return frame


def _is_numeric(column: pd.Series) -> bool:
    present = column.dropna()
    return present.empty or pd.to_numeric(present, errors="coerce").notna().all()


def _expand_categorical(
    column: pd.Series,
    name: str,
    reference: Optional[str]
) -> Tuple[pd.DataFrame, str]:
    levels = sorted(str(v) for v in column.unique())
    if reference is None:
        reference = levels[0]
    elif reference not in levels:
        raise ValidationError(f"分类变量 '{name}' 的参照水平 '{reference}' 不存在，可选: {levels}")
    indicators = pd.DataFrame(
        {f"{name}[{level}]": (column.astype(str) == level).astype(float)
         for level in levels if level != reference},
        index=column.index,
    )
    return indicators, reference


def align_covariates(
    table: AbundanceTable,
    covariates: pd.DataFrame,
    used_columns: Sequence[str],
    categorical: Optional[Sequence[str]] = None,
    reference_levels: Optional[Dict[str, str]] = None
) -> Tuple[AbundanceTable, CovariateTable, AlignmentReport]:
    """
    按样本标识对齐丰度表和协变量表（完整病例分析）

    只保留两表共有且在所用列上无缺失的样本，顺序沿用丰度表。分类变量（显式指定或
    含非数值取值的列）按参照编码展开为指示列，默认参照水平为字典序最小的水平；
    对齐后恒为0的指示列会被去除。

    Args:
        table: 丰度表
        covariates: load_covariates 读取的协变量表
        used_columns: 公式中用到的协变量列
        categorical: 强制按分类变量处理的列
        reference_levels: 分类变量的参照水平

    Returns:
        (对齐后的丰度表, 协变量表, 对齐报告)

    Raises:
        ValidationError: 所用列不存在
        NoOverlapError: 没有共同的完整样本

    Example:
        >>> ab, cov, report = align_covariates(table, frame, ["age", "antibiotics"])
        >>> report.n_complete
        97
    """
    used = list(dict.fromkeys(used_columns))
    missing = [c for c in used if c not in covariates.columns]
    if missing:
        raise ValidationError(f"协变量列不存在: {missing}，可选: {list(covariates.columns)}")

    cov_index = set(str(s) for s in covariates.index)
    shared = [s for s in table.sample_ids if s in cov_index]
    missing_cov = [s for s in table.sample_ids if s not in cov_index]
    if not shared:
        raise NoOverlapError("丰度表与协变量表没有共同样本")

    subset = covariates.loc[shared, used] if used else covariates.loc[shared, []]
    complete_mask = subset.notna().all(axis=1)
    complete = [s for s, ok in zip(shared, complete_mask) if ok]
    incomplete = [s for s, ok in zip(shared, complete_mask) if not ok]
    if not complete:
        raise NoOverlapError(f"共同样本在所用协变量 {used} 上均有缺失")
    if missing_cov or incomplete:
        logger.warning(
            f"对齐协变量: {len(missing_cov)} 个样本缺少协变量记录, "
            f"{len(incomplete)} 个样本协变量不完整，均已去除"
        )

    subset = subset.loc[complete]
    forced = set(categorical or ())
    references = dict(reference_levels or {})
    blocks = []
    terms: Dict[str, List[str]] = {}
    used_references: Dict[str, str] = {}
    for name in used:
        column = subset[name]
        if name in forced or not _is_numeric(column):
            block, reference = _expand_categorical(column, name, references.get(name))
            constant = [c for c in block.columns if not block[c].any()]
            if constant:
                logger.warning(f"分类变量 '{name}' 的水平 {constant} 在完整样本中未出现，已去除")
                block = block.drop(columns=constant)
            used_references[name] = reference
        else:
            block = pd.DataFrame({name: pd.to_numeric(column).astype(float)}, index=subset.index)
        terms[name] = list(block.columns)
        blocks.append(block)

    frame = pd.concat(blocks, axis=1) if blocks else pd.DataFrame(index=subset.index)
    frame.index.name = "sample_id"
    report = AlignmentReport(
        n_abundance=table.n_samples,
        n_covariates=len(covariates),
        n_shared=len(shared),
        n_complete=len(complete),
        missing_covariates=missing_cov,
        incomplete=incomplete,
    )
    logger.info(f"协变量对齐完成: {report.n_complete}/{report.n_abundance} 个样本保留")
    return (
        table.subset_samples(complete),
        CovariateTable(frame=frame, terms=terms, reference_levels=used_references),
        report,
    )


# ============================================================================
# 输出
# ============================================================================

def write_tsv(frame: pd.DataFrame, path: PathLike, index: bool = False) -> Path:
    """以17位有效数字写出制表符分隔文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep="\t", index=index, float_format=FLOAT_FORMAT,
                 lineterminator="\n", encoding="utf-8")
    logger.info(f"写出TSV: {len(frame)} 行 -> {path}")
    return path


def to_jsonable(obj: Any) -> Any:
    """把numpy/pandas对象转为JSON可序列化的Python对象，非有限浮点数转为None"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        items = sorted(obj, key=str) if isinstance(obj, set) else obj
        return [to_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, pd.DataFrame):
        return to_jsonable(obj.to_dict(orient="records"))
    if isinstance(obj, pd.Series):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj: Any, path: PathLike) -> Path:
    """写出键排序、缩进2格的JSON（NaN/inf 写为 null）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2, sort_keys=True,
                      allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"写出JSON -> {path}")
    return path


def file_digest(path: PathLike) -> str:
    """文件内容的SHA-256摘要"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    out_dir: PathLike,
    command: str,
    inputs: Dict[str, Optional[PathLike]],
    flags: Dict[str, Any],
    seed: Optional[int],
    outputs: Sequence[str] = ()
) -> Path:
    """
    写出运行清单 manifest.json

    记录子命令、输入文件及其SHA-256、全部参数、随机种子、输出文件名和配置结构版本。
    不含时间戳，重复运行得到相同的文件。
    """
    from src import __version__

    records = {}
    for name, value in inputs.items():
        if value is None:
            continue
        records[name] = {"path": str(value), "sha256": file_digest(value)}
    manifest = {
        "command": command,
        "inputs": records,
        "flags": flags,
        "seed": seed,
        "outputs": sorted(outputs),
        "schema_version": CONFIG_SCHEMA_VERSION,
        "version": __version__,
    }
    return write_json(manifest, Path(out_dir) / "manifest.json")


__all__ = [
    "AbundanceTable",
    "CovariateTable",
    "AlignmentReport",
    "load_counts",
    "filter_and_normalize",
    "load_covariates",
    "align_covariates",
    "write_tsv",
    "to_jsonable",
    "write_json",
    "file_digest",
    "write_manifest",
]
