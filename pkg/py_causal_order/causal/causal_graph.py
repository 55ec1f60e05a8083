import math
from collections import Counter
from pathlib import Path
from typing import Union

import networkx as nx
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from py_causal_order.core.errors import DataError


class GraphSchemaError(DataError): ...


class CausalEdge(BaseModel):
    """A weighted directed edge; the sign of `weight` is promoting/inhibiting, its magnitude the strength."""

    model_config = ConfigDict(frozen=True)
    source: str
    target: str
    weight: float


class FactorCausalGraph(BaseModel):
    """
    Weighted directed graph over factors. Both `a -> b` and `b -> a` may be present, which is how an
    orientation left open by discovery is represented.
    """

    model_config = ConfigDict(frozen=True)
    factors: tuple[str, ...]
    edges: tuple[CausalEdge, ...] = ()

    @model_validator(mode="after")
    def _check_edges(self) -> "FactorCausalGraph":
        if len(set(self.factors)) != len(self.factors):
            raise GraphSchemaError(f"Duplicate factor names: {list(self.factors)}")
        known = set(self.factors)
        seen: set[tuple[str, str]] = set()
        for edge in self.edges:
            if edge.source == edge.target:
                raise GraphSchemaError(f"Self-edge on factor {edge.source!r}")
            if not math.isfinite(edge.weight):
                raise GraphSchemaError(
                    f"Edge {edge.source!r} -> {edge.target!r} has non-finite weight {edge.weight}"
                )
            unknown = [name for name in (edge.source, edge.target) if name not in known]
            if len(unknown) > 0:
                raise GraphSchemaError(f"Edge references unknown factors: {unknown}")
            if (edge.source, edge.target) in seen:
                raise GraphSchemaError(f"Duplicate edge {edge.source!r} -> {edge.target!r}")
            seen.add((edge.source, edge.target))
        return self

    def weight(self, source: str, target: str) -> float:
        for edge in self.edges:
            if edge.source == source and edge.target == target:
                return edge.weight
        return 0.0

    def edge_multiset(self) -> Counter[tuple[str, str, float]]:
        return Counter((edge.source, edge.target, edge.weight) for edge in self.edges)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.factors)
        graph.add_weighted_edges_from((edge.source, edge.target, edge.weight) for edge in self.edges)
        return graph


class _GraphDocument(BaseModel):
    factors: list[str]
    edges: list[tuple[str, str, float]]


def save_graph(graph: FactorCausalGraph, path: Union[str, Path]) -> None:
    document = _GraphDocument(
        factors=list(graph.factors),
        edges=[(edge.source, edge.target, edge.weight) for edge in graph.edges],
    )
    Path(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"[GRAPH SAVE] Saved {len(graph.edges)} edges over {len(graph.factors)} factors to {path}")


def load_graph(path: Union[str, Path]) -> FactorCausalGraph:
    """
    Read `{"factors": [...], "edges": [[from, to, weight], ...]}`; graphs from any discovery tool
    (e.g. LiNGAM or FCI runs) plug in through this format.
    """
    try:
        document = _GraphDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as error:
        raise GraphSchemaError(f"Invalid causal graph document {path}: {error}") from error
    return FactorCausalGraph(
        factors=tuple(document.factors),
        edges=tuple(
            CausalEdge(source=source, target=target, weight=weight)
            for source, target, weight in document.edges
        ),
    )
