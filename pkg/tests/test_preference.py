from pathlib import Path

import numpy as np
import pytest

from py_causal_order.causal.causal_graph import CausalEdge, FactorCausalGraph
from py_causal_order.factor.factor_model import FactorMapping, FactorMappingError
from py_causal_order.ordering.preference import (
    PreferenceMatrix,
    PreferenceMatrixError,
    load_preference_matrix,
    project,
    save_preference_matrix,
)

COLUMNS = ("c1", "c2", "c3")


def mapping_of(*rows: tuple[int, ...]) -> FactorMapping:
    return FactorMapping(
        factor_names=tuple(f"f{position + 1}" for position in range(len(rows))),
        column_names=COLUMNS,
        matrix=tuple(rows),
    )


def graph_of(*edges: tuple[str, str, float]) -> FactorCausalGraph:
    factors = sorted({name for source, target, _ in edges for name in (source, target)})
    return FactorCausalGraph(
        factors=tuple(factors),
        edges=tuple(CausalEdge(source=source, target=target, weight=weight) for source, target, weight in edges),
    )


class TestProject:
    def test_single_edge_skips_self_pairs(self):
        matrix = project(graph_of(("f1", "f2", 0.5)), mapping_of((1, 1, 0), (0, 1, 1)))
        assert matrix.weights == ((0.0, 0.5, 0.5), (0.0, 0.0, 0.5), (0.0, 0.0, 0.0))

    def test_negative_weight_contributes_its_magnitude(self):
        matrix = project(graph_of(("f1", "f2", -0.8)), mapping_of((1, 0, 0), (0, 1, 0)))
        assert matrix.weights[0][1] == 0.8
        assert matrix.total_weight() == 0.8

    def test_overlapping_factors_introduce_a_column_cycle(self):
        graph = graph_of(("f1", "f2", 0.5), ("f2", "f3", 0.25))
        matrix = project(graph, mapping_of((1, 0, 0), (0, 1, 1), (1, 0, 1)))
        assert matrix.weights == ((0.0, 0.5, 0.5), (0.25, 0.0, 0.25), (0.25, 0.0, 0.0))
        assert matrix.weights[0][1] > 0 and matrix.weights[1][2] > 0 and matrix.weights[2][0] > 0
        assert any(sorted(cycle) == list(COLUMNS) for cycle in matrix.cycles(limit=20))

    def test_parallel_contributions_accumulate(self):
        graph = graph_of(("f1", "f2", 0.5), ("f2", "f1", 0.5))
        matrix = project(graph, mapping_of((1, 0, 0), (1, 1, 0)))
        # f1 -> f2 gives c1 -> c2; f2 -> f1 gives c2 -> c1 (c1 -> c1 skipped)
        assert matrix.weights[0][1] == 0.5
        assert matrix.weights[1][0] == 0.5

    def test_graph_factor_missing_from_mapping(self):
        graph = graph_of(("f1", "f9", 1.0))
        with pytest.raises(FactorMappingError, match="f9"):
            project(graph, mapping_of((1, 0, 0), (0, 1, 0)))


class TestPreferenceMatrix:
    def test_diagonal_must_be_zero(self):
        with pytest.raises(PreferenceMatrixError, match="Diagonal"):
            PreferenceMatrix.from_array(np.eye(2))

    def test_negative_entries_are_rejected(self):
        with pytest.raises(PreferenceMatrixError):
            PreferenceMatrix.from_array(np.array([[0.0, -1.0], [0.0, 0.0]]))

    def test_must_be_square(self):
        with pytest.raises(PreferenceMatrixError):
            PreferenceMatrix(column_names=("a", "b"), weights=((0.0, 1.0),))

    def test_save_and_load(self, tmp_path: Path):
        matrix = PreferenceMatrix.from_array(np.array([[0.0, 0.1, 2.0], [0.3, 0.0, 0.0], [0.0, 1e-12, 0.0]]), COLUMNS)
        path = tmp_path / "preferences.json"
        save_preference_matrix(matrix, path)
        assert load_preference_matrix(path) == matrix
