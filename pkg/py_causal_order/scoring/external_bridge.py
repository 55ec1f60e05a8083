"""
File bridge to likelihood models running outside this package.

`export_sequences` writes one JSON line per (sample, ordering) with the serialized text and the byte
span of every column value; an external model scores the spans and writes back a delimited file
with columns (sample, ordering, column, nll), which `import_external_nll` turns into the same
(m, K, d) tensor the surrogate scorer produces.
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict

from py_causal_order.core.errors import DataError
from py_causal_order.core.table import Ordering, Table, serialize_with_spans
from py_causal_order.ordering.lop_solver import OrderingSet

NLL_COLUMNS = ("sample", "ordering", "column", "nll")
MAX_REPORTED_GAPS = 20


class ExternalNllFormatError(DataError): ...


class CompletenessError(DataError):
    def __init__(self, gaps: list[tuple[int, int, int]], total: int) -> None:
        self.gaps = gaps
        self.total = total
        shown = ", ".join(f"(sample={s}, ordering={z}, column={j})" for s, z, j in gaps[:MAX_REPORTED_GAPS])
        suffix = "" if total <= MAX_REPORTED_GAPS else f" and {total - MAX_REPORTED_GAPS} more"
        super().__init__(f"Missing {total} NLL entries: {shown}{suffix}")


class SequenceRecord(BaseModel):
    model_config = ConfigDict(frozen=True)
    sample: int
    ordering: int
    text: str
    spans: list[tuple[int, int, int]]


def export_sequences(
    table: Table,
    orderings: Union[OrderingSet, Sequence[Ordering]],
    path: Union[str, Path],
    sample_ids: Optional[Sequence[int]] = None,
) -> int:
    """Write the serialized samples as JSON lines; returns the number of records."""
    ordering_list = orderings.orderings if isinstance(orderings, OrderingSet) else list(orderings)
    ids = list(range(table.m)) if sample_ids is None else list(sample_ids)
    if len(ids) != table.m:
        raise ExternalNllFormatError(f"{len(ids)} sample ids for {table.m} rows")

    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for sample_id, row in zip(ids, table.rows):
            for ordering_id, ordering in enumerate(ordering_list):
                text, spans = serialize_with_spans(row, table, ordering)
                record = SequenceRecord(sample=sample_id, ordering=ordering_id, text=text, spans=spans)
                handle.write(record.model_dump_json() + "\n")
                count += 1
    logger.success(f"[SEQUENCE EXPORT] Wrote {count} records to {path}")
    return count


def export_nll(
    nll: np.ndarray,
    path: Union[str, Path],
    sample_ids: Optional[Sequence[int]] = None,
    delimiter: str = ",",
) -> None:
    """Write an (m, K, d) NLL tensor in the external import format."""
    m, k, d = nll.shape
    ids = np.arange(m) if sample_ids is None else np.asarray(sample_ids)
    sample_index, ordering_index, column_index = np.meshgrid(np.arange(m), np.arange(k), np.arange(d), indexing="ij")
    frame = pd.DataFrame(
        {
            "sample": ids[sample_index.reshape(-1)],
            "ordering": ordering_index.reshape(-1),
            "column": column_index.reshape(-1),
            "nll": nll.reshape(-1),
        }
    )
    frame.to_csv(path, sep=delimiter, index=False, float_format="%.17g")


def import_external_nll(
    path: Union[str, Path],
    sample_ids: Optional[Sequence[int]] = None,
    n_orderings: Optional[int] = None,
    d: Optional[int] = None,
    delimiter: str = ",",
) -> np.ndarray:
    """
    Read (sample, ordering, column, nll) rows into an (m, K, d) tensor ordered like `sample_ids`.
    Without explicit dimensions, the observed sample ids and the largest ordering and column
    indices define the expected grid; every cell of the grid must be present exactly once.
    """
    try:
        frame = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise ExternalNllFormatError(f"Cannot parse NLL file {path}: {error}") from error
    missing_columns = [name for name in NLL_COLUMNS if name not in frame.columns]
    if len(missing_columns) > 0:
        raise ExternalNllFormatError(f"NLL file {path} lacks columns {missing_columns}")
    for name in ("sample", "ordering", "column"):
        if not pd.api.types.is_integer_dtype(frame[name]):
            raise ExternalNllFormatError(f"Column {name!r} of {path} must hold integers")
    values = pd.to_numeric(frame["nll"], errors="coerce").to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise ExternalNllFormatError(f"NLL values in {path} must be finite and >= 0")

    ids = sorted(frame["sample"].unique().tolist()) if sample_ids is None else list(sample_ids)
    k = int(frame["ordering"].max()) + 1 if n_orderings is None else n_orderings
    width = int(frame["column"].max()) + 1 if d is None else d
    row_of = {sample_id: row for row, sample_id in enumerate(ids)}

    keys = frame[["sample", "ordering", "column"]].itertuples(index=False, name=None)
    tensor = np.full((len(ids), k, width), np.nan)
    for (sample_id, ordering_id, column), value in zip(keys, values):
        if sample_id not in row_of or not 0 <= ordering_id < k or not 0 <= column < width:
            raise ExternalNllFormatError(
                f"Entry (sample={sample_id}, ordering={ordering_id}, column={column}) lies outside the expected grid"
            )
        cell = (row_of[sample_id], ordering_id, column)
        if not np.isnan(tensor[cell]):
            raise ExternalNllFormatError(
                f"Duplicate entry (sample={sample_id}, ordering={ordering_id}, column={column})"
            )
        tensor[cell] = value

    holes = np.argwhere(np.isnan(tensor))
    if len(holes) > 0:
        raise CompletenessError(
            [(ids[row], int(ordering_id), int(column)) for row, ordering_id, column in holes], len(holes)
        )
    logger.success(f"[NLL IMPORT] Read {tensor.size} NLL entries from {path}")
    return tensor
