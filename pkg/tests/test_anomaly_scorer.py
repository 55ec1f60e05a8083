from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from py_causal_order.core.table import Cell, ColumnKind, ColumnSpec, Ordering, Table
from py_causal_order.evaluation.metrics import auc_roc
from py_causal_order.factor.factor_model import FactorMapping
from py_causal_order.scoring.anomaly_scorer import (
    ColumnWeights,
    ScoreReport,
    ScoreReportError,
    WeightsError,
    aggregate_scores,
    compute_weights,
    score,
    score_table,
    write_breakdown,
    write_scores,
)
from py_causal_order.scoring.surrogate_scorer import column_nll, fit

COLUMNS = [ColumnSpec(name=name, kind=ColumnKind.CATEGORICAL, index=index) for index, name in enumerate(("x1", "x2"))]


def copy_table() -> Table:
    return Table.from_values(COLUMNS, [[value, value] for value in "abcd" for _ in range(25)])


def sample(*values: str) -> tuple[Cell, ...]:
    return tuple(Cell.from_value(value, ColumnKind.CATEGORICAL) for value in values)


class TestComputeWeights:
    def test_factor_counts(self):
        mapping = FactorMapping(factor_names=("f1", "f2"), column_names=("a", "b", "c"), matrix=((1, 1, 0), (0, 1, 1)))
        assert compute_weights(mapping).alpha == (1.0, 2.0, 1.0)

    def test_factor_counts_view_is_integral(self):
        mapping = FactorMapping(factor_names=("f1", "f2"), column_names=("a", "b", "c"), matrix=((1, 1, 0), (0, 1, 1)))
        counts = compute_weights(mapping).factor_counts
        assert counts == (1, 2, 1)
        assert all(isinstance(count, int) for count in counts)

    def test_rescaled_weights_have_no_factor_counts(self):
        weights = ColumnWeights(column_names=("a", "b"), alpha=(1.0, 2.0)).scaled(0.5)
        with pytest.raises(WeightsError, match="whole factor counts"):
            weights.factor_counts

    def test_unmapped_column_gets_zero(self):
        mapping = FactorMapping(factor_names=("f1",), column_names=("a", "b", "c"), matrix=((1, 1, 0),))
        weights = compute_weights(mapping)
        assert weights.alpha == (1.0, 1.0, 0.0)
        assert weights.zero_weight_columns == ["c"]

    def test_single_factor_over_everything_is_uniform(self):
        mapping = FactorMapping(factor_names=("f1",), column_names=("a", "b"), matrix=((1, 1),))
        assert compute_weights(mapping) == ColumnWeights.uniform(["a", "b"])

    @pytest.mark.parametrize("alpha", [(-1.0, 1.0), (float("nan"), 1.0), (1.0,)])
    def test_invalid_weights(self, alpha: tuple[float, ...]):
        with pytest.raises(WeightsError):
            ColumnWeights(column_names=("a", "b"), alpha=alpha)


class TestScore:
    def setup_method(self):
        self.orderings = [Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))]
        self.scorer = fit(copy_table(), self.orderings)
        self.weights = ColumnWeights.uniform(["x1", "x2"])

    def test_zero_weights_give_zero(self):
        zero = ColumnWeights(column_names=("x1", "x2"), alpha=(0.0, 0.0))
        assert score(self.scorer, sample("a", "b"), self.orderings, zero) == 0.0

    def test_single_ordering_with_unit_weights_is_the_nll_sum(self):
        nll = column_nll(self.scorer, sample("a", "b"), self.orderings[0])
        assert score(self.scorer, sample("a", "b"), self.orderings[:1], self.weights) == pytest.approx(nll.sum())

    def test_duplicated_ordering_matches_single(self):
        single = score(self.scorer, sample("a", "c"), self.orderings[:1], self.weights)
        duplicated = score(self.scorer, sample("a", "c"), [self.orderings[0], self.orderings[0]], self.weights)
        assert duplicated == pytest.approx(single, abs=1e-12)

    def test_broken_copy_scores_above_every_consistent_sample(self):
        consistent = [score(self.scorer, sample(v, v), self.orderings, self.weights) for v in "abcd"]
        broken = [score(self.scorer, sample(v, w), self.orderings, self.weights) for v in "abcd" for w in "abcd" if v != w]
        assert min(broken) > max(consistent)

    def test_weight_count_must_match(self):
        with pytest.raises(WeightsError):
            score(self.scorer, sample("a", "a"), self.orderings, ColumnWeights.uniform(["x1"]))


class TestScoreReport:
    def setup_method(self):
        self.orderings = [Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))]
        self.scorer = fit(copy_table(), self.orderings)
        self.test_table = Table.from_values(COLUMNS, [["a", "a"], ["b", "c"], ["d", "d"], ["c", "a"], ["e", "e"]])
        self.labels = [0, 1, 0, 1, 0]
        self.weights = ColumnWeights(column_names=("x1", "x2"), alpha=(1.0, 2.0))

    def test_scores_decompose_into_stored_parts(self):
        report = score_table(self.scorer, self.test_table, self.orderings, self.weights)
        assert report.nll.shape == (5, 2, 2)
        assert np.allclose(report.recomputed_scores(), report.scores, rtol=0.0, atol=1e-9)
        assert np.allclose(report.column_contributions().sum(axis=1), report.scores, rtol=0.0, atol=1e-9)
        for row, cells in enumerate(self.test_table.rows):
            assert report.scores[row] == pytest.approx(score(self.scorer, cells, self.orderings, self.weights), abs=1e-9)

    @pytest.mark.parametrize("factor", [0.5, 2.0, 10.0])
    def test_weight_scaling_keeps_the_auc(self, factor: float):
        report = score_table(self.scorer, self.test_table, self.orderings, self.weights)
        scaled = score_table(self.scorer, self.test_table, self.orderings, self.weights.scaled(factor))
        assert np.allclose(scaled.scores, factor * report.scores)
        assert auc_roc(scaled.scores, self.labels) == auc_roc(report.scores, self.labels)

    def test_zero_weight_columns_are_flagged(self):
        weights = ColumnWeights(column_names=("x1", "x2"), alpha=(0.0, 1.0))
        report = ScoreReport.from_nll(np.ones((3, 1, 2)), self.orderings[:1], weights)
        assert report.ignored_columns == ("x1",)
        assert report.scores.tolist() == [1.0, 1.0, 1.0]

    def test_shape_mismatch(self):
        with pytest.raises(ScoreReportError):
            ScoreReport(
                column_names=("x1", "x2"),
                orderings=tuple(self.orderings),
                weights=self.weights,
                nll=np.ones((3, 1, 2)),
                scores=np.ones(3),
            )

    def test_aggregate_averages_over_orderings(self):
        nll = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert aggregate_scores(nll, np.array([1.0, 0.5])).tolist() == [(2.0 + 5.0) / 2]

    def test_writers(self, tmp_path: Path):
        report = score_table(self.scorer, self.test_table, self.orderings, self.weights)
        scores_path = tmp_path / "scores.csv"
        breakdown_path = tmp_path / "breakdown.tsv"
        write_scores(report, scores_path, sample_ids=[10, 11, 12, 13, 14])
        write_breakdown(report, breakdown_path, delimiter="\t")

        scores = pd.read_csv(scores_path, float_precision="round_trip")
        assert scores.columns.tolist() == ["sample", "score"]
        assert scores["sample"].tolist() == [10, 11, 12, 13, 14]
        assert np.array_equal(scores["score"].to_numpy(), report.scores)

        breakdown = pd.read_csv(breakdown_path, sep="\t", float_precision="round_trip")
        assert breakdown.columns.tolist() == ["sample", "column", "alpha", "mean_nll", "contribution"]
        assert len(breakdown) == 10
        totals = breakdown.groupby("sample")["contribution"].sum().to_numpy()
        assert np.allclose(totals, report.scores, rtol=0.0, atol=1e-9)

    def test_sample_ids_must_match(self, tmp_path: Path):
        report = score_table(self.scorer, self.test_table, self.orderings, self.weights)
        with pytest.raises(ScoreReportError):
            write_scores(report, tmp_path / "scores.csv", sample_ids=[1, 2])
