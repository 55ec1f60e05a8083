import numpy as np
import pytest

from py_causal_order.causal.pc_discovery import (
    DiscoveryParameterError,
    InsufficientDataError,
    PCDiscovery,
    discover_pc,
)
from py_causal_order.evaluation.synthetic import chain_factor_values, collider_factor_values
from py_causal_order.factor.factor_model import FactorValueMatrix


def skeleton_pairs(discovery: PCDiscovery) -> set[frozenset[int]]:
    assert discovery.skeleton_ is not None
    return {frozenset(edge) for edge in discovery.skeleton_.edges}


class TestPCDiscovery:
    def test_chain_skeleton(self):
        expected = {frozenset((0, 1)), frozenset((1, 2))}
        hits = 0
        for seed in range(10):
            discovery = PCDiscovery(alpha=0.05, max_cond=3)
            discovery.learn_graph(chain_factor_values(5000, seed))
            hits += skeleton_pairs(discovery) == expected
        assert hits >= 8

    def test_collider_orientation(self):
        hits = 0
        for seed in range(10):
            graph = discover_pc(collider_factor_values(5000, seed), alpha=0.05, max_cond=3)
            directed = {(edge.source, edge.target) for edge in graph.edges}
            hits += directed == {("f1", "f3"), ("f2", "f3")}
        assert hits >= 8

    def test_independent_factors_give_no_edges(self):
        rng = np.random.default_rng(3)
        values = FactorValueMatrix.from_array(("a", "b", "c"), rng.integers(0, 3, size=(5000, 3)))
        graph = discover_pc(values, alpha=0.01)
        assert graph.edges == ()

    def test_undirected_edges_are_emitted_both_ways_with_equal_weight(self):
        graph = discover_pc(chain_factor_values(5000, 0))
        weights = {(edge.source, edge.target): edge.weight for edge in graph.edges}
        assert weights[("f1", "f2")] == weights[("f2", "f1")]
        assert weights[("f2", "f3")] == weights[("f3", "f2")]
        assert all(weight >= 0.0 for weight in weights.values())

    def test_constant_factor_is_excluded(self):
        values = chain_factor_values(500, 1).as_array()
        values = np.column_stack([values, np.zeros(500, dtype=int)])
        discovery = PCDiscovery()
        graph = discovery.learn_graph(FactorValueMatrix.from_array(("f1", "f2", "f3", "const"), values))
        assert discovery.excluded_factors_ == ["const"]
        assert all("const" not in (edge.source, edge.target) for edge in graph.edges)
        assert graph.factors == ("f1", "f2", "f3", "const")

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            discover_pc(chain_factor_values(19, 0))

    @pytest.mark.parametrize("alpha, max_cond", [(0.0, 3), (1.0, 3), (0.05, -1)])
    def test_invalid_parameters(self, alpha: float, max_cond: int):
        with pytest.raises(DiscoveryParameterError):
            PCDiscovery(alpha=alpha, max_cond=max_cond)

    def test_thread_count_does_not_change_the_graph(self):
        values = chain_factor_values(3000, 5)
        assert discover_pc(values, n_jobs=1) == discover_pc(values, n_jobs=4)
