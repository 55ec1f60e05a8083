import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from py_causal_order.core.errors import DataError, UsageError
from py_causal_order.core.table import Ordering, Sample, Table
from py_causal_order.factor.factor_model import FactorMapping, inverse_map
from py_causal_order.ordering.lop_solver import OrderingSet
from py_causal_order.scoring.surrogate_scorer import SurrogateScorer, column_nll

OrderingsLike = Union[OrderingSet, Sequence[Ordering]]


class WeightsError(UsageError): ...


class ScoreReportError(DataError): ...


class ColumnWeights(BaseModel):
    """
    Per-column contribution weights. Factor-count weights are integral (the number of factors a
    column belongs to) but any non-negative finite value is accepted, so weights can be rescaled.
    """

    model_config = ConfigDict(frozen=True)
    column_names: tuple[str, ...]
    alpha: tuple[float, ...]

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, alpha: tuple[float, ...]) -> tuple[float, ...]:
        for position, value in enumerate(alpha):
            if not math.isfinite(value) or value < 0.0:
                raise WeightsError(f"Weight {position} = {value} is not finite and >= 0")
        return alpha

    @model_validator(mode="after")
    def _check_length(self) -> "ColumnWeights":
        if len(self.alpha) != len(self.column_names):
            raise WeightsError(f"{len(self.alpha)} weights for {len(self.column_names)} columns")
        return self

    @classmethod
    def uniform(cls, column_names: Sequence[str]) -> "ColumnWeights":
        return cls(column_names=tuple(column_names), alpha=tuple(1.0 for _ in column_names))

    def scaled(self, factor: float) -> "ColumnWeights":
        return ColumnWeights(column_names=self.column_names, alpha=tuple(factor * a for a in self.alpha))

    def as_array(self) -> np.ndarray:
        return np.array(self.alpha, dtype=np.float64)

    @property
    def factor_counts(self) -> tuple[int, ...]:
        """Weights as factor counts; only defined while every weight is a whole number."""
        if any(not float(value).is_integer() for value in self.alpha):
            raise WeightsError(f"Weights {self.alpha} are not whole factor counts")
        return tuple(int(value) for value in self.alpha)

    @property
    def zero_weight_columns(self) -> list[str]:
        return [name for name, value in zip(self.column_names, self.alpha) if value == 0.0]


def compute_weights(mapping: FactorMapping) -> ColumnWeights:
    """α_j = the number of factors whose column set contains column j."""
    weights = ColumnWeights(
        column_names=mapping.column_names,
        alpha=tuple(float(len(inverse_map(mapping, column))) for column in range(mapping.d)),
    )
    if len(weights.zero_weight_columns) > 0:
        logger.warning(
            f"[FACTOR WEIGHTING] Columns outside every factor get weight 0 and are ignored: {weights.zero_weight_columns}"
        )
    return weights


def aggregate_scores(nll: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Score per sample: the α-weighted column NLL sum, averaged over orderings. `nll` is (m, K, d)."""
    return (nll * alpha[None, None, :]).sum(axis=2).mean(axis=1)


def _ordering_list(orderings: OrderingsLike) -> list[Ordering]:
    return orderings.orderings if isinstance(orderings, OrderingSet) else list(orderings)


def _check_weights(weights: ColumnWeights, d: int) -> None:
    if len(weights.alpha) != d:
        raise WeightsError(f"{len(weights.alpha)} weights for {d} columns")


def score(
    scorer: SurrogateScorer, sample: Sample, orderings: OrderingsLike, weights: ColumnWeights
) -> float:
    """Anomaly score of a single sample; higher means more anomalous."""
    _check_weights(weights, scorer.d)
    ordering_list = _ordering_list(orderings)
    nll = np.stack([column_nll(scorer, sample, ordering) for ordering in ordering_list])
    return float(aggregate_scores(nll[None, :, :], weights.as_array())[0])


class ScoreReport(BaseModel):
    """
    Scores of a batch of samples together with everything needed to recompute them:
    `nll[i, z, j]` is the NLL of column j of sample i under ordering z.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    column_names: tuple[str, ...]
    orderings: tuple[Ordering, ...]
    weights: ColumnWeights
    nll: np.ndarray
    scores: np.ndarray
    ignored_columns: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_shapes(self) -> "ScoreReport":
        expected = (self.scores.shape[0], len(self.orderings), len(self.column_names))
        if self.nll.shape != expected:
            raise ScoreReportError(f"NLL tensor has shape {self.nll.shape}, expected {expected}")
        return self

    @classmethod
    def from_nll(
        cls, nll: np.ndarray, orderings: OrderingsLike, weights: ColumnWeights
    ) -> "ScoreReport":
        nll = np.asarray(nll, dtype=np.float64)
        _check_weights(weights, nll.shape[2])
        ignored = tuple(weights.zero_weight_columns)
        if len(ignored) > 0:
            logger.info(f"[ANOMALY SCORING] Zero-weight columns ignored in scores: {list(ignored)}")
        return cls(
            column_names=weights.column_names,
            orderings=tuple(_ordering_list(orderings)),
            weights=weights,
            nll=nll,
            scores=aggregate_scores(nll, weights.as_array()),
            ignored_columns=ignored,
        )

    @property
    def m(self) -> int:
        return int(self.scores.shape[0])

    def recomputed_scores(self) -> np.ndarray:
        return aggregate_scores(self.nll, self.weights.as_array())

    def column_contributions(self) -> np.ndarray:
        """α_j times the ordering-averaged NLL of column j, shape (m, d); rows sum to the scores."""
        return self.nll.mean(axis=1) * self.weights.as_array()[None, :]


def score_table(
    scorer: SurrogateScorer, table: Table, orderings: OrderingsLike, weights: ColumnWeights
) -> ScoreReport:
    _check_weights(weights, scorer.d)
    if table.d != scorer.d:
        raise WeightsError(f"Table has {table.d} columns, scorer expects {scorer.d}")
    ordering_list = _ordering_list(orderings)
    report = ScoreReport.from_nll(scorer.table_nll(table.rows, ordering_list), ordering_list, weights)
    logger.success(f"[ANOMALY SCORING] Scored {report.m} samples under {len(ordering_list)} orderings")
    return report


def _sample_ids(report: ScoreReport, sample_ids: Optional[Sequence[int]]) -> list[int]:
    ids = list(range(report.m)) if sample_ids is None else list(sample_ids)
    if len(ids) != report.m:
        raise ScoreReportError(f"{len(ids)} sample ids for {report.m} scored samples")
    return ids


def write_scores(
    report: ScoreReport,
    path: Union[str, Path],
    sample_ids: Optional[Sequence[int]] = None,
    delimiter: str = ",",
) -> None:
    frame = pd.DataFrame({"sample": _sample_ids(report, sample_ids), "score": report.scores})
    frame.to_csv(path, sep=delimiter, index=False, float_format="%.17g")


def write_breakdown(
    report: ScoreReport,
    path: Union[str, Path],
    sample_ids: Optional[Sequence[int]] = None,
    delimiter: str = ",",
) -> None:
    """Long-format per-column view: (sample, column, alpha, mean_nll, contribution)."""
    ids = _sample_ids(report, sample_ids)
    mean_nll = report.nll.mean(axis=1)
    contributions = report.column_contributions()
    frame = pd.DataFrame(
        {
            "sample": np.repeat(ids, len(report.column_names)),
            "column": np.tile(report.column_names, report.m),
            "alpha": np.tile(report.weights.as_array(), report.m),
            "mean_nll": mean_nll.reshape(-1),
            "contribution": contributions.reshape(-1),
        }
    )
    frame.to_csv(path, sep=delimiter, index=False, float_format="%.17g")
