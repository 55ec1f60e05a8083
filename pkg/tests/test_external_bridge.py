import json
from pathlib import Path

import numpy as np
import pytest

from py_causal_order.core.table import ColumnKind, ColumnSpec, Ordering, Table
from py_causal_order.scoring.anomaly_scorer import ColumnWeights, ScoreReport, score_table
from py_causal_order.scoring.external_bridge import (
    CompletenessError,
    ExternalNllFormatError,
    export_nll,
    export_sequences,
    import_external_nll,
)
from py_causal_order.scoring.surrogate_scorer import fit


class TestExternalBridge:
    def setup_method(self):
        columns = [
            ColumnSpec(name="age", kind=ColumnKind.NUMERICAL, index=0),
            ColumnSpec(name="job", kind=ColumnKind.CATEGORICAL, index=1),
            ColumnSpec(name="city", kind=ColumnKind.CATEGORICAL, index=2),
        ]
        self.table = Table.from_values(
            columns, [[30 + row % 7, "nurse" if row % 2 else "clerk", "Köln" if row % 3 else "Bonn"] for row in range(40)]
        )
        self.orderings = [Ordering(ranks=(1, 2, 3)), Ordering(ranks=(3, 1, 2))]

    def test_export_writes_one_record_per_sample_and_ordering(self, tmp_path: Path):
        path = tmp_path / "sequences.jsonl"
        count = export_sequences(self.table.select_rows([0, 1]), self.orderings, path)
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        assert count == 4
        assert [(record["sample"], record["ordering"]) for record in records] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert all(len(record["spans"]) == 3 for record in records)
        assert records[1]["text"].startswith("job is ")

    def test_spans_point_at_the_values(self, tmp_path: Path):
        path = tmp_path / "sequences.jsonl"
        export_sequences(self.table.select_rows([1]), self.orderings[:1], path, sample_ids=[41])
        record = json.loads(path.read_text(encoding="utf-8"))
        encoded = record["text"].encode("utf-8")
        assert record["sample"] == 41
        assert [encoded[start:end].decode("utf-8") for _, start, end in record["spans"]] == ["31", "nurse", "Köln"]

    def test_missing_entry_is_named(self, tmp_path: Path):
        path = tmp_path / "nll.csv"
        export_nll(np.ones((2, 2, 3)), path)
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(line for line in lines if line != "1,0,2,1") + "\n", encoding="utf-8")
        with pytest.raises(CompletenessError, match=r"sample=1, ordering=0, column=2") as error:
            import_external_nll(path, n_orderings=2, d=3)
        assert error.value.gaps == [(1, 0, 2)]

    def test_duplicate_entry(self, tmp_path: Path):
        path = tmp_path / "nll.csv"
        path.write_text("sample,ordering,column,nll\n0,0,0,1.0\n0,0,0,2.0\n", encoding="utf-8")
        with pytest.raises(ExternalNllFormatError, match="Duplicate"):
            import_external_nll(path)

    @pytest.mark.parametrize(
        "content",
        [
            "sample,ordering,nll\n0,0,1.0\n",
            "sample,ordering,column,nll\n0,0,0,-1.0\n",
            "sample,ordering,column,nll\n0,0,0.5,1.0\n",
            "sample,ordering,column,nll\n0,0,0,inf\n",
        ],
    )
    def test_malformed_files(self, tmp_path: Path, content: str):
        path = tmp_path / "nll.csv"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ExternalNllFormatError):
            import_external_nll(path)

    def test_entry_outside_the_grid(self, tmp_path: Path):
        path = tmp_path / "nll.csv"
        path.write_text("sample,ordering,column,nll\n0,0,5,1.0\n", encoding="utf-8")
        with pytest.raises(ExternalNllFormatError, match="outside"):
            import_external_nll(path, d=3)

    def test_round_trip_reproduces_scores(self, tmp_path: Path):
        scorer = fit(self.table, self.orderings)
        weights = ColumnWeights(column_names=tuple(self.table.column_names), alpha=(1.0, 2.0, 1.0))
        report = score_table(scorer, self.table, self.orderings, weights)
        ids = [100 + row for row in range(self.table.m)]
        path = tmp_path / "nll.tsv"
        export_nll(report.nll, path, sample_ids=ids, delimiter="\t")

        imported = import_external_nll(path, sample_ids=ids, n_orderings=2, d=3, delimiter="\t")
        rebuilt = ScoreReport.from_nll(imported, self.orderings, weights)
        assert np.allclose(rebuilt.scores, report.scores, rtol=0.0, atol=1e-9)

    def test_exported_nll_reads_back_bit_for_bit(self, tmp_path: Path):
        nll = np.random.default_rng(5).exponential(scale=3.0, size=(40, 2, 3))
        path = tmp_path / "nll.csv"
        export_nll(nll, path)
        assert np.array_equal(import_external_nll(path, n_orderings=2, d=3), nll)
