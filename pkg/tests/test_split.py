from pathlib import Path

import pytest

from py_causal_order.core.table import ColumnKind, ColumnSpec, Table
from py_causal_order.evaluation.split import LabeledTable, SplitError, SplitSpec, load_labels, split


def labeled(labels: list[int]) -> LabeledTable:
    column = ColumnSpec(name="x", kind=ColumnKind.NUMERICAL, index=0)
    return LabeledTable(table=Table.from_values([column], [[row] for row in range(len(labels))]), labels=tuple(labels))


class TestSplit:
    def setup_method(self):
        self.data = labeled([0] * 10 + [1] * 3)

    def test_half_of_the_normals_train(self):
        data_split = split(self.data, SplitSpec(seed=0))
        assert data_split.train.m == 5
        assert data_split.test.m == 8
        assert sum(data_split.test.labels) == 3
        assert set(data_split.train_rows).isdisjoint(data_split.test_rows)
        assert set(data_split.train_rows) | set(data_split.test_rows) == set(range(13))
        assert all(self.data.labels[row] == 0 for row in data_split.train_rows)
        assert {10, 11, 12} <= set(data_split.test_rows)

    def test_rows_keep_their_original_order(self):
        data_split = split(self.data, SplitSpec(seed=3))
        assert list(data_split.test_rows) == sorted(data_split.test_rows)
        assert [row[0].value for row in data_split.train.rows] == [float(row) for row in data_split.train_rows]

    def test_same_seed_same_split(self):
        assert split(self.data, SplitSpec(seed=4)) == split(self.data, SplitSpec(seed=4))

    def test_seeds_differ(self):
        splits = {split(self.data, SplitSpec(seed=seed)).train_rows for seed in range(10)}
        assert len(splits) > 1

    def test_full_fraction_trains_on_every_normal(self):
        data_split = split(self.data, SplitSpec(seed=0, train_fraction_of_normals=1.0))
        assert data_split.train.m == 10
        assert data_split.test.labels == (1, 1, 1)

    def test_single_normal(self):
        with pytest.raises(SplitError):
            split(labeled([0, 1, 1]), SplitSpec())

    def test_no_anomaly(self):
        with pytest.raises(SplitError):
            split(labeled([0, 0, 0]), SplitSpec())

    def test_label_count_must_match(self):
        with pytest.raises(SplitError):
            LabeledTable(table=labeled([0, 1]).table, labels=(0, 1, 0))


class TestLoadLabels:
    def test_named_column(self, tmp_path: Path):
        path = tmp_path / "labels.csv"
        path.write_text("id,is_anomaly\n1,0\n2,1\n3,0\n", encoding="utf-8")
        assert load_labels(path, column="is_anomaly") == (0, 1, 0)

    def test_first_column_by_default(self, tmp_path: Path):
        path = tmp_path / "labels.csv"
        path.write_text("label\n0\n1\n", encoding="utf-8")
        assert load_labels(path) == (0, 1)

    @pytest.mark.parametrize("content", ["label\n0\n2\n", "label\n0\n0.5\n", "label\nyes\n"])
    def test_invalid_labels(self, tmp_path: Path, content: str):
        path = tmp_path / "labels.csv"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(SplitError):
            load_labels(path)

    def test_unknown_column(self, tmp_path: Path):
        path = tmp_path / "labels.csv"
        path.write_text("label\n0\n", encoding="utf-8")
        with pytest.raises(SplitError):
            load_labels(path, column="other")
