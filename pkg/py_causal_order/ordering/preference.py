import math
from pathlib import Path
from typing import Sequence, Union

import networkx as nx
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from py_causal_order.causal.causal_graph import FactorCausalGraph
from py_causal_order.core.errors import DataError
from py_causal_order.factor.factor_model import FactorMapping, FactorMappingError


class PreferenceMatrixError(DataError): ...


class PreferenceMatrix(BaseModel):
    """
    Column-level preferences: `weights[i][j]` is the accumulated evidence that column i should be
    serialized before column j. Entries are finite and non-negative; the diagonal is 0.
    """

    model_config = ConfigDict(frozen=True)
    column_names: tuple[str, ...]
    weights: tuple[tuple[float, ...], ...]

    @model_validator(mode="after")
    def _check_weights(self) -> "PreferenceMatrix":
        d = len(self.column_names)
        if len(self.weights) != d or any(len(row) != d for row in self.weights):
            raise PreferenceMatrixError(f"Preference matrix must be {d}x{d}")
        for i, row in enumerate(self.weights):
            for j, entry in enumerate(row):
                if not math.isfinite(entry) or entry < 0.0:
                    raise PreferenceMatrixError(f"Entry ({i}, {j}) = {entry} is not finite and >= 0")
            if row[i] != 0.0:
                raise PreferenceMatrixError(f"Diagonal entry ({i}, {i}) = {row[i]} must be 0")
        return self

    @classmethod
    def from_array(cls, weights: np.ndarray, column_names: Sequence[str] | None = None) -> "PreferenceMatrix":
        weights = np.asarray(weights, dtype=np.float64)
        names = column_names if column_names is not None else [f"c{i}" for i in range(weights.shape[0])]
        return cls(
            column_names=tuple(names),
            weights=tuple(tuple(float(entry) for entry in row) for row in weights),
        )

    @property
    def d(self) -> int:
        return len(self.column_names)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64).reshape(self.d, self.d)

    def total_weight(self) -> float:
        return float(self.as_array().sum())

    def cycles(self, limit: int = 10) -> list[list[str]]:
        """Directed cycles among positive entries, at most `limit` of them."""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.d))
        graph.add_edges_from(
            (i, j) for i, row in enumerate(self.weights) for j, entry in enumerate(row) if entry > 0.0
        )
        found: list[list[str]] = []
        for cycle in nx.simple_cycles(graph):
            found.append([self.column_names[node] for node in cycle])
            if len(found) >= limit:
                break
        return found


def project(graph: FactorCausalGraph, mapping: FactorMapping) -> PreferenceMatrix:
    """
    Project factor-level causality onto columns: for every edge f_u -> f_v and every pair
    (c_i, c_j) in M(f_u) × M(f_v) with c_i != c_j, add |weight| to w(c_i -> c_j).
    """
    unknown = [factor for factor in graph.factors if factor not in mapping.factor_names]
    if len(unknown) > 0:
        raise FactorMappingError(f"Graph factors missing from the mapping: {unknown}")

    weights = np.zeros((mapping.d, mapping.d), dtype=np.float64)
    for edge in graph.edges:
        sources = sorted(mapping.columns_of(mapping.factor_index(edge.source)))
        targets = sorted(mapping.columns_of(mapping.factor_index(edge.target)))
        strength = abs(edge.weight)
        for i in sources:
            for j in targets:
                if i != j:
                    weights[i, j] += strength

    matrix = PreferenceMatrix.from_array(weights, mapping.column_names)
    cycles = matrix.cycles(limit=3)
    if len(cycles) > 0:
        logger.info(f"[PREFERENCE PROJECTION] Projection introduces column cycles, e.g. {cycles}")
    logger.success(
        f"[PREFERENCE PROJECTION] Projected {len(graph.edges)} factor edges onto {mapping.d} columns"
    )
    return matrix


class _PreferenceDocument(BaseModel):
    columns: list[str]
    weights: list[list[float]]


def save_preference_matrix(matrix: PreferenceMatrix, path: Union[str, Path]) -> None:
    document = _PreferenceDocument(
        columns=list(matrix.column_names), weights=[list(row) for row in matrix.weights]
    )
    Path(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")


def load_preference_matrix(path: Union[str, Path]) -> PreferenceMatrix:
    try:
        document = _PreferenceDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as error:
        raise PreferenceMatrixError(f"Invalid preference matrix document {path}: {error}") from error
    return PreferenceMatrix(
        column_names=tuple(document.columns),
        weights=tuple(tuple(row) for row in document.weights),
    )
