import re
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ValidationError

from scaml_gp.benchmarks.schemas import TabularTask
from scaml_gp.core.schemas import DataSet
from scaml_gp.errors import (
    InvalidArgumentError,
    TabularFormatError,
    TabularValidationError,
)
from scaml_gp.optimization.schemas import DiscreteTable, Observation

PARAM_PREFIX = "param:"
VALUE_COLUMN = "value"
SIDECAR_SUFFIX = ".meta.json"


class TabularSidecar(BaseModel):
    """Contents of ``<table>.csv.meta.json``: ordered levels per parameter."""

    levels: dict[str, list[float]]


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + SIDECAR_SUFFIX)


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise TabularFormatError(str(e), str(path), int(match.group(1)) if match else None) from e
    except pd.errors.EmptyDataError as e:
        raise TabularFormatError("file is empty", str(path), 1) from e
    except UnicodeDecodeError as e:
        raise TabularFormatError(f"not UTF-8: {e}", str(path)) from e

    header = list(frame.columns)
    if len(header) < 2 or header[-1] != VALUE_COLUMN:
        raise TabularFormatError(f"last column must be {VALUE_COLUMN!r}", str(path), 1)
    bad = [name for name in header[:-1] if not name.startswith(PARAM_PREFIX) or name == PARAM_PREFIX]
    if bad:
        raise TabularFormatError(f"columns {bad} lack the {PARAM_PREFIX!r} prefix", str(path), 1)
    return frame


def _to_numbers(frame: pd.DataFrame, path: Path) -> np.ndarray:
    """Parse every cell as a float; the data row ``i`` sits on file line ``i + 2``."""
    numbers = np.empty(frame.shape)
    for j, name in enumerate(frame.columns):
        for i, cell in enumerate(frame[name].fillna("").str.strip()):
            try:
                numbers[i, j] = float(cell)
            except ValueError as e:
                raise TabularFormatError(
                    f"column {name!r}: cannot parse {cell!r} as a number", str(path), i + 2
                ) from e
    return numbers


def _load_levels(path: Path, columns: list[str], rows: np.ndarray) -> list[list[float]]:
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        return [sorted(set(column.tolist())) for column in rows.T]
    try:
        meta = TabularSidecar.model_validate_json(sidecar.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise TabularFormatError(f"invalid sidecar: {e}", str(sidecar)) from e
    missing = [name for name in columns if name not in meta.levels]
    if missing:
        raise TabularFormatError(f"sidecar lacks levels for {missing}", str(sidecar))
    return [list(meta.levels[name]) for name in columns]


def load_tabular(path: Path | str) -> TabularTask:
    """Parse and validate a lookup table (``param:<name>,...,value`` CSV)."""
    path = Path(path)
    frame = _read_frame(path)
    numbers = _to_numbers(frame, path)
    columns = [name[len(PARAM_PREFIX) :] for name in frame.columns[:-1]]
    rows, values = numbers[:, :-1], numbers[:, -1]

    if rows.shape[0] == 0:
        raise TabularValidationError("table has no rows", str(path), 2)
    non_finite = ~np.all(np.isfinite(numbers), axis=1)
    if non_finite.any():
        raise TabularValidationError(
            "non-finite entry", str(path), int(np.flatnonzero(non_finite)[0]) + 2
        )
    duplicated = pd.DataFrame(rows).duplicated().to_numpy()
    if duplicated.any():
        raise TabularValidationError(
            "duplicate configuration", str(path), int(np.flatnonzero(duplicated)[0]) + 2
        )

    levels = _load_levels(path, columns, rows)
    for j, (name, column_levels) in enumerate(zip(columns, levels)):
        outside = ~np.isin(rows[:, j], column_levels)
        if outside.any():
            raise TabularValidationError(
                f"column {name!r} value outside the declared levels",
                str(path),
                int(np.flatnonzero(outside)[0]) + 2,
            )
    try:
        task = TabularTask(name=path.stem, columns=columns, levels=levels, rows=rows, values=values)
    except ValidationError as e:
        raise TabularValidationError(str(e), str(path)) from e
    logger.debug(f"Loaded {path} with {rows.shape[0]} configurations over {len(columns)} parameters")
    return task


def write_tabular(task: TabularTask, path: Path | str) -> None:
    """Write a table and its level sidecar; ``load_tabular`` reads it back unchanged."""
    path = Path(path)
    frame = pd.DataFrame(task.rows, columns=[PARAM_PREFIX + name for name in task.columns])
    frame[VALUE_COLUMN] = task.values
    try:
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        sidecar = TabularSidecar(levels=dict(zip(task.columns, task.levels)))
        sidecar_path(path).write_text(sidecar.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise OSError(f"Cannot write lookup table {path}: {e}") from e


def load_tabular_suite(directory: Path | str) -> list[TabularTask]:
    """Load every ``*.csv`` table in a directory; all must share columns and levels."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise InvalidArgumentError(f"No *.csv lookup tables in {directory}")
    tasks = [load_tabular(path) for path in paths]
    reference = tasks[0]
    for path, task in zip(paths[1:], tasks[1:]):
        if task.columns != reference.columns:
            raise TabularValidationError(
                f"columns {task.columns} differ from {reference.columns}", str(path), 1
            )
        if task.levels != reference.levels:
            raise TabularValidationError(f"levels differ from {paths[0].name}", str(path))
    logger.info(f"Loaded {len(tasks)} lookup tables from {directory}")
    return tasks


def subsample_meta_tabular(
    tasks: list[TabularTask], points_per_task: int, rng: np.random.Generator
) -> list[DataSet]:
    """Draw ``points_per_task`` rows per table without replacement, in unit-cube coordinates."""
    datasets = []
    for task in tasks:
        if len(task.values) < points_per_task:
            raise InvalidArgumentError(
                f"Table {task.name!r} has {len(task.values)} rows, {points_per_task} requested"
            )
        index = rng.choice(len(task.values), size=points_per_task, replace=False)
        datasets.append(DataSet(inputs=task.unit_rows()[index], outputs=task.values[index]))
    return datasets


class TabularObjective:
    """Noiseless lookup over a table; queries must be rows of ``candidates``."""

    def __init__(self, task: TabularTask):
        self.task = task
        self.candidates = DiscreteTable(candidates=task.unit_rows())

    def index_of(self, x: np.ndarray) -> int:
        matches = np.flatnonzero(
            np.all(np.isclose(self.candidates.candidates, np.asarray(x, dtype=float)), axis=1)
        )
        if matches.size == 0:
            raise InvalidArgumentError(f"{np.asarray(x)} is not a configuration of {self.task.name!r}")
        return int(matches[0])

    def native(self, x: np.ndarray) -> np.ndarray:
        return np.array(self.task.rows[self.index_of(x)])

    def __call__(self, x: np.ndarray) -> Observation:
        value = float(self.task.values[self.index_of(x)])
        return Observation(y=value, f=value)
