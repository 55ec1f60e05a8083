import math
from pathlib import Path

import numpy as np
import pytest

from py_causal_order.core.table import Cell, ColumnKind, ColumnSpec, Ordering, Table
from py_causal_order.scoring.discretizer import ColumnDiscretizer
from py_causal_order.scoring.surrogate_scorer import (
    NORMALIZATION_TOLERANCE,
    ConditionalTable,
    ScorerDataError,
    ScorerUsageError,
    column_nll,
    fit,
    load_scorer,
    save_scorer,
)


def categorical(*names: str) -> list[ColumnSpec]:
    return [ColumnSpec(name=name, kind=ColumnKind.CATEGORICAL, index=index) for index, name in enumerate(names)]


def copy_table(repeats: int = 25) -> Table:
    """x2 is an exact copy of x1; every value appears `repeats` times."""
    return Table.from_values(categorical("x1", "x2"), [[value, value] for value in "abcd" for _ in range(repeats)])


class TestColumnDiscretizer:
    def test_numerical_bins_are_right_closed_and_clamped(self):
        column = ColumnSpec(name="x", kind=ColumnKind.NUMERICAL, index=0)
        cells = [Cell.from_value(value, ColumnKind.NUMERICAL) for value in [1, 2, 3, 4, 5]]
        discretizer = ColumnDiscretizer.fit(column, cells, bins=2)
        assert discretizer.bin_edges == (3.0,)
        assert discretizer.vocabulary == ("bin0", "bin1")
        assert discretizer.token(Cell.from_value(3, ColumnKind.NUMERICAL)) == "bin0"
        assert discretizer.token(Cell.from_value(3.5, ColumnKind.NUMERICAL)) == "bin1"
        assert discretizer.encode(Cell.from_value(-100, ColumnKind.NUMERICAL)) == 0
        assert discretizer.encode(Cell.from_value(100, ColumnKind.NUMERICAL)) == 1

    def test_constant_numerical_column_has_a_single_bin(self):
        column = ColumnSpec(name="x", kind=ColumnKind.NUMERICAL, index=0)
        discretizer = ColumnDiscretizer.fit(column, [Cell.from_value(5, ColumnKind.NUMERICAL)] * 10, bins=10)
        assert discretizer.bin_edges == ()
        assert discretizer.vocabulary == ("bin0",)

    def test_unseen_category_maps_to_the_unknown_code(self):
        column = categorical("job")[0]
        cells = [Cell.from_value(value, ColumnKind.CATEGORICAL) for value in ["nurse", "clerk"]]
        discretizer = ColumnDiscretizer.fit(column, cells, bins=10)
        assert discretizer.size == 3
        assert discretizer.encode(Cell.from_value("pilot", ColumnKind.CATEGORICAL)) == discretizer.unknown_code
        assert discretizer.encode(Cell.missing()) == discretizer.unknown_code

    def test_missing_values_seen_in_training_get_their_own_code(self):
        column = categorical("job")[0]
        discretizer = ColumnDiscretizer.fit(column, [Cell.from_value("nurse", ColumnKind.CATEGORICAL), Cell.missing()], 10)
        assert discretizer.encode(Cell.missing()) != discretizer.unknown_code

    def test_text_is_bucketed_by_token_count(self):
        column = ColumnSpec(name="note", kind=ColumnKind.TEXT, index=0)
        cells = [Cell.from_value(text, ColumnKind.TEXT) for text in ["one two", "one two three"]]
        discretizer = ColumnDiscretizer.fit(column, cells, bins=2)
        assert discretizer.token(cells[0]) == "len0"
        assert discretizer.token(cells[1]) == "len1"


class TestFit:
    def test_marginal_uses_laplace_counts(self):
        table = Table.from_values(categorical("x"), [["a"], ["a"], ["a"], ["b"]])
        scorer = fit(table, [Ordering.identity(1)], smoothing=1.0)
        marginal = scorer.tables[0][0].probabilities[0]
        assert scorer.discretizers[0].vocabulary == ("a", "b")
        assert marginal[0] == pytest.approx(4 / 7)
        assert marginal[2] == pytest.approx(1 / 7)

    def test_copy_column_conditional(self):
        scorer = fit(copy_table(), [Ordering(ranks=(1, 2))])
        conditional = scorer.tables[0][1]
        assert conditional.context_column == 0
        a = scorer.discretizers[0].vocabulary.index("a")
        # 25 matches, vocabulary of 4 values plus the unknown bucket
        assert conditional.probabilities[a][a] == pytest.approx(26 / 30)

    def test_every_distribution_is_normalized(self):
        rng = np.random.default_rng(0)
        columns = [*categorical("a", "b"), ColumnSpec(name="n", kind=ColumnKind.NUMERICAL, index=2)]
        rows = [[str(rng.integers(3)), str(rng.integers(5)), float(rng.normal())] for _ in range(200)]
        scorer = fit(Table.from_values(columns, rows), [Ordering(ranks=(1, 2, 3)), Ordering(ranks=(3, 1, 2))])
        for tables in scorer.tables:
            for conditional in tables:
                for row in conditional.probabilities:
                    assert abs(sum(row) - 1.0) <= NORMALIZATION_TOLERANCE
                    assert min(row) > 0.0

    def test_duplicate_orderings_are_fitted_once(self):
        scorer = fit(copy_table(), [Ordering(ranks=(1, 2)), Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))])
        assert scorer.orderings == (Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1)))

    def test_threads_do_not_change_the_fit(self):
        orderings = [Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))]
        assert fit(copy_table(), orderings, n_jobs=1).model_dump() == fit(copy_table(), orderings, n_jobs=2).model_dump()

    def test_empty_training_table(self):
        with pytest.raises(ScorerDataError):
            fit(Table(columns=tuple(categorical("x"))), [Ordering.identity(1)])

    def test_no_orderings(self):
        with pytest.raises(ScorerUsageError):
            fit(copy_table(), [])

    def test_ordering_width_must_match(self):
        with pytest.raises(ScorerUsageError):
            fit(copy_table(), [Ordering.identity(3)])

    def test_conditional_table_rejects_unnormalized_rows(self):
        with pytest.raises(ScorerDataError):
            ConditionalTable(column=0, probabilities=((0.5, 0.4),))


class TestColumnNll:
    def setup_method(self):
        self.ordering = Ordering(ranks=(1, 2))
        self.scorer = fit(copy_table(), [self.ordering])

    def test_consistent_sample_is_cheap(self):
        sample = copy_table().rows[0]
        nll = column_nll(self.scorer, sample, self.ordering)
        assert nll[0] == pytest.approx(-math.log(26 / 105))
        assert nll[1] == pytest.approx(-math.log(26 / 30))

    def test_inconsistent_sample_is_expensive(self):
        sample = tuple(Cell.from_value(value, ColumnKind.CATEGORICAL) for value in ["a", "b"])
        nll = column_nll(self.scorer, sample, self.ordering)
        assert nll[1] == pytest.approx(-math.log(1 / 30))

    def test_unseen_value_is_finite(self):
        sample = tuple(Cell.from_value(value, ColumnKind.CATEGORICAL) for value in ["zz", "a"])
        nll = column_nll(self.scorer, sample, self.ordering)
        assert np.all(np.isfinite(nll))
        assert np.all(nll >= 0.0)

    def test_uniform_independent_binary_columns(self):
        rng = np.random.default_rng(1)
        values = rng.integers(0, 2, size=(4000, 2)).astype(str).tolist()
        table = Table.from_values(categorical("a", "b"), values)
        scorer = fit(table, [Ordering(ranks=(1, 2))])
        nll = scorer.table_nll(table.rows, [Ordering(ranks=(1, 2))])
        assert np.all(np.abs(nll.mean(axis=(0, 1)) - math.log(2)) < 0.05)

    def test_unfitted_ordering(self):
        with pytest.raises(ScorerUsageError):
            column_nll(self.scorer, copy_table().rows[0], Ordering(ranks=(2, 1)))

    def test_sample_width_must_match(self):
        with pytest.raises(ScorerUsageError):
            column_nll(self.scorer, copy_table().rows[0][:1], self.ordering)

    def test_table_nll_shape(self):
        scorer = fit(copy_table(), [Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))])
        assert scorer.table_nll(copy_table().rows, scorer.orderings).shape == (100, 2, 2)


class TestScorerSnapshot:
    def test_save_and_load(self, tmp_path: Path):
        scorer = fit(copy_table(), [Ordering(ranks=(1, 2)), Ordering(ranks=(2, 1))])
        path = tmp_path / "scorer.json"
        save_scorer(scorer, path)
        loaded = load_scorer(path)
        assert loaded.model_dump() == scorer.model_dump()
        rows = copy_table().rows
        assert np.array_equal(loaded.table_nll(rows, loaded.orderings), scorer.table_nll(rows, scorer.orderings))

    def test_malformed_snapshot(self, tmp_path: Path):
        path = tmp_path / "scorer.json"
        path.write_text('{"column_names": ["x"]}', encoding="utf-8")
        with pytest.raises(ScorerDataError):
            load_scorer(path)
