from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from py_causal_order.core.errors import DataError, UsageError
from py_causal_order.core.table import Ordering, Sample, Table
from py_causal_order.ordering.lop_solver import OrderingSet
from py_causal_order.scoring.discretizer import ColumnDiscretizer

NORMALIZATION_TOLERANCE = 1e-9


class ScorerDataError(DataError): ...


class ScorerUsageError(UsageError): ...


class ConditionalTable(BaseModel):
    """
    Smoothed conditional distribution of one column given the column serialized right before it.
    `probabilities[c][v]` is p(v | context code c); the first position of an ordering has no
    context column and a single row holding the marginal.
    """

    model_config = ConfigDict(frozen=True)
    column: int = Field(ge=0)
    context_column: Optional[int] = None
    probabilities: tuple[tuple[float, ...], ...]

    @model_validator(mode="after")
    def _check_distributions(self) -> "ConditionalTable":
        for context, row in enumerate(self.probabilities):
            if any(probability <= 0.0 for probability in row):
                raise ScorerDataError(f"Column {self.column}, context {context}: zero probability")
            if abs(sum(row) - 1.0) > NORMALIZATION_TOLERANCE:
                raise ScorerDataError(f"Column {self.column}, context {context}: sums to {sum(row)}")
        return self


class SurrogateScorer(BaseModel):
    """
    Markov-1 column likelihood model over serialized samples: for every fitted ordering and every
    position in it, a conditional table of the column's discretized value given the previous column.
    Fitted scorers are immutable and can be shared across threads.
    """

    model_config = ConfigDict(frozen=True)
    column_names: tuple[str, ...]
    discretizers: tuple[ColumnDiscretizer, ...]
    bins: int = Field(ge=1)
    smoothing: float = Field(gt=0.0)
    orderings: tuple[Ordering, ...]
    tables: tuple[tuple[ConditionalTable, ...], ...]
    _positions: dict[tuple[int, ...], int] = PrivateAttr(default_factory=dict)
    _arrays: list[list[np.ndarray]] = PrivateAttr(default_factory=list)

    @model_validator(mode="after")
    def _check_layout(self) -> "SurrogateScorer":
        d = len(self.column_names)
        if len(self.discretizers) != d:
            raise ScorerDataError(f"Expected {d} discretizers, got {len(self.discretizers)}")
        if len(self.tables) != len(self.orderings):
            raise ScorerDataError("Every ordering needs its conditional tables")
        for ordering, tables in zip(self.orderings, self.tables):
            if ordering.d != d or len(tables) != d:
                raise ScorerDataError(f"Ordering {list(ordering.ranks)} does not cover {d} columns")
        return self

    def model_post_init(self, __context: object) -> None:
        self._positions = {ordering.ranks: position for position, ordering in enumerate(self.orderings)}
        self._arrays = [[np.array(table.probabilities) for table in tables] for tables in self.tables]

    @property
    def d(self) -> int:
        return len(self.column_names)

    def has_ordering(self, ordering: Ordering) -> bool:
        return ordering.ranks in self._positions

    def encode_rows(self, rows: Sequence[Sample]) -> np.ndarray:
        codes = np.zeros((len(rows), self.d), dtype=np.int64)
        for row_number, row in enumerate(rows):
            for column, (discretizer, cell) in enumerate(zip(self.discretizers, row)):
                codes[row_number, column] = discretizer.encode(cell)
        return codes

    def nll_of_codes(self, codes: np.ndarray, ordering: Ordering) -> np.ndarray:
        """Per-column negative log-likelihoods, shape (rows, d), of already discretized rows."""
        if ordering.ranks not in self._positions:
            raise ScorerUsageError(f"Ordering {list(ordering.ranks)} was not fitted by this scorer")
        arrays = self._arrays[self._positions[ordering.ranks]]
        nll = np.zeros(codes.shape, dtype=np.float64)
        previous: Optional[int] = None
        for position, column in enumerate(ordering.sequence):
            context = np.zeros(codes.shape[0], dtype=np.int64) if previous is None else codes[:, previous]
            nll[:, column] = -np.log(arrays[position][context, codes[:, column]])
            previous = column
        return nll

    def table_nll(self, rows: Sequence[Sample], orderings: Sequence[Ordering]) -> np.ndarray:
        """Column NLLs of every row under every ordering, shape (rows, K, d)."""
        codes = self.encode_rows(rows)
        return np.stack([self.nll_of_codes(codes, ordering) for ordering in orderings], axis=1)


def _fit_ordering(
    codes: np.ndarray, sizes: list[int], ordering: Ordering, smoothing: float
) -> tuple[ConditionalTable, ...]:
    tables: list[ConditionalTable] = []
    previous: Optional[int] = None
    for column in ordering.sequence:
        if previous is None:
            counts = np.bincount(codes[:, column], minlength=sizes[column]).astype(np.float64)[None, :]
        else:
            counts = np.zeros((sizes[previous], sizes[column]), dtype=np.float64)
            np.add.at(counts, (codes[:, previous], codes[:, column]), 1.0)
        smoothed = counts + smoothing
        probabilities = smoothed / smoothed.sum(axis=1, keepdims=True)
        tables.append(
            ConditionalTable(
                column=column,
                context_column=previous,
                probabilities=tuple(tuple(float(p) for p in row) for row in probabilities),
            )
        )
        previous = column
    return tuple(tables)


def fit(
    train: Table,
    orderings: Union[OrderingSet, Sequence[Ordering]],
    bins: int = 10,
    smoothing: float = 1.0,
    n_jobs: int = 1,
) -> SurrogateScorer:
    """
    Fit Laplace-smoothed Markov-1 conditionals for every ordering on all training rows.
    Quantile bin edges and vocabularies come from `train` only.
    """
    ordering_list = orderings.orderings if isinstance(orderings, OrderingSet) else list(orderings)
    if train.m == 0:
        raise ScorerDataError("Cannot fit a scorer on an empty training table")
    if len(ordering_list) == 0:
        raise ScorerUsageError("At least one ordering is needed to fit a scorer")
    if bins < 1 or smoothing <= 0.0:
        raise ScorerUsageError(f"bins must be >= 1 and smoothing > 0, got {bins} and {smoothing}")
    for ordering in ordering_list:
        if ordering.d != train.d:
            raise ScorerUsageError(f"Ordering {list(ordering.ranks)} does not cover {train.d} columns")

    discretizers = tuple(
        ColumnDiscretizer.fit(column, [row[position] for row in train.rows], bins)
        for position, column in enumerate(train.columns)
    )
    unique_orderings = list(dict.fromkeys(ordering_list))
    scorer_shell = SurrogateScorer(
        column_names=tuple(train.column_names),
        discretizers=discretizers,
        bins=bins,
        smoothing=smoothing,
        orderings=(),
        tables=(),
    )
    codes = scorer_shell.encode_rows(train.rows)
    sizes = [discretizer.size for discretizer in discretizers]
    tables = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_ordering)(codes, sizes, ordering, smoothing) for ordering in unique_orderings
    )
    logger.success(
        f"[SURROGATE FIT] Fitted {len(unique_orderings)} orderings on {train.m} rows, vocabulary sizes {sizes}"
    )
    return SurrogateScorer(
        column_names=scorer_shell.column_names,
        discretizers=discretizers,
        bins=bins,
        smoothing=smoothing,
        orderings=tuple(unique_orderings),
        tables=tuple(tables),
    )


def column_nll(scorer: SurrogateScorer, sample: Sample, ordering: Ordering) -> np.ndarray:
    """ℓ_j = -log p(x_j | x_prev) for every column j, indexed by column position."""
    if len(sample) != scorer.d:
        raise ScorerUsageError(f"Sample has {len(sample)} cells, scorer expects {scorer.d}")
    return scorer.nll_of_codes(scorer.encode_rows([sample]), ordering)[0]


def save_scorer(scorer: SurrogateScorer, path: Union[str, Path]) -> None:
    Path(path).write_text(scorer.model_dump_json(), encoding="utf-8")


def load_scorer(path: Union[str, Path]) -> SurrogateScorer:
    try:
        return SurrogateScorer.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as error:
        raise ScorerDataError(f"Invalid scorer snapshot {path}: {error}") from error
