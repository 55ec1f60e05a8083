from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.model_selection import train_test_split

from py_causal_order.core.errors import DataError
from py_causal_order.core.table import Table


class SplitError(DataError): ...


class LabeledTable(BaseModel):
    """A table with one 0/1 label per row, 1 marking an anomaly."""

    model_config = ConfigDict(frozen=True)
    table: Table
    labels: tuple[int, ...]

    @model_validator(mode="after")
    def _check_labels(self) -> "LabeledTable":
        if len(self.labels) != self.table.m:
            raise SplitError(f"{len(self.labels)} labels for {self.table.m} rows")
        if any(label not in (0, 1) for label in self.labels):
            raise SplitError("Labels must be 0 (normal) or 1 (anomaly)")
        return self

    @property
    def m(self) -> int:
        return self.table.m

    def label_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int64)

    def normal_rows(self) -> list[int]:
        return [row for row, label in enumerate(self.labels) if label == 0]

    def anomaly_rows(self) -> list[int]:
        return [row for row, label in enumerate(self.labels) if label == 1]

    def normals(self) -> Table:
        return self.table.select_rows(self.normal_rows())


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)
    seed: int = 0
    train_fraction_of_normals: float = Field(default=0.5, gt=0.0, le=1.0)


class DataSplit(BaseModel):
    """
    Train rows are normal only; the test part holds the remaining normals and every anomaly.
    `train_rows` and `test_rows` index the original table, both in ascending order.
    """

    model_config = ConfigDict(frozen=True)
    train: Table
    test: LabeledTable
    train_rows: tuple[int, ...]
    test_rows: tuple[int, ...]


def split(data: LabeledTable, spec: SplitSpec) -> DataSplit:
    normal_rows = data.normal_rows()
    anomaly_rows = data.anomaly_rows()
    if len(normal_rows) < 2:
        raise SplitError(f"At least 2 normal rows are needed to split, got {len(normal_rows)}")
    if len(anomaly_rows) < 1:
        raise SplitError("At least 1 anomalous row is needed to split")

    n_train = int(round(spec.train_fraction_of_normals * len(normal_rows)))
    n_train = min(max(n_train, 1), len(normal_rows))
    if n_train == len(normal_rows):
        train_rows, held_out = list(normal_rows), []
    else:
        train_rows, held_out = train_test_split(normal_rows, train_size=n_train, random_state=spec.seed)
    train_rows = sorted(int(row) for row in train_rows)
    test_rows = sorted([int(row) for row in held_out] + anomaly_rows)

    logger.debug(
        f"[DATA SPLIT] Seed {spec.seed}: {len(train_rows)} train normals, {len(test_rows)} test rows ({len(anomaly_rows)} anomalies)"
    )
    return DataSplit(
        train=data.table.select_rows(train_rows),
        test=LabeledTable(
            table=data.table.select_rows(test_rows),
            labels=tuple(data.labels[row] for row in test_rows),
        ),
        train_rows=tuple(train_rows),
        test_rows=tuple(test_rows),
    )


def load_labels(path: Union[str, Path], column: Optional[str] = None, delimiter: str = ",") -> tuple[int, ...]:
    """
    Read 0/1 labels, one per data row, from a delimited file with a header. The first column is
    used unless `column` names another.
    """
    try:
        frame = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise SplitError(f"Cannot parse label file {path}: {error}") from error
    name = frame.columns[0] if column is None else column
    if name not in frame.columns:
        raise SplitError(f"Label file {path} has no column {name!r}")
    series = frame[name]
    if not pd.api.types.is_integer_dtype(series) or not series.isin([0, 1]).all():
        raise SplitError(f"Labels in {path} must be 0 or 1")
    return tuple(int(label) for label in series)
