from itertools import combinations
from typing import Optional

import networkx as nx
import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from sklearn.metrics import mutual_info_score

from py_causal_order.causal.causal_graph import CausalEdge, FactorCausalGraph
from py_causal_order.causal.g_test import g_test
from py_causal_order.core.errors import DataError, UsageError
from py_causal_order.core.params import MIN_SAMPLES
from py_causal_order.factor.factor_model import FactorValueMatrix


class InsufficientDataError(DataError): ...


class DiscoveryParameterError(UsageError): ...


class PCDiscovery:
    """
    PC-stable structure learning over discrete factor values.

    1. Skeleton: starting from the complete graph over the non-constant factors, an edge x - y is
       removed as soon as a conditioning set S ⊆ adj(x) \\ {y} (or adj(y) \\ {x}) with |S| <= max_cond
       makes the G-test accept x ⊥ y | S. Removals are applied at the end of each conditioning-set size.
    2. Orientation: unshielded colliders x -> z <- y when z is not in sepset(x, y), then Meek rules 1-3.
    3. Weights: every emitted edge carries the empirical mutual information of its endpoints (nats);
       edges left undirected are emitted in both directions with the same weight.

    After `learn_graph`, the instance exposes `skeleton_`, `pdag_`, `sep_sets_` and `excluded_factors_`.
    """

    def __init__(
        self,
        alpha: float = 0.05,
        max_cond: int = 3,
        min_samples: int = MIN_SAMPLES,
        n_jobs: int = 1,
    ) -> None:
        if not 0.0 < alpha < 1.0:
            raise DiscoveryParameterError(f"alpha must lie in (0, 1), got {alpha}")
        if max_cond < 0:
            raise DiscoveryParameterError(f"max_cond must be >= 0, got {max_cond}")
        self.alpha = alpha
        self.max_cond = max_cond
        self.min_samples = min_samples
        self.n_jobs = n_jobs
        self.skeleton_: Optional[nx.Graph] = None
        self.pdag_: Optional[nx.DiGraph] = None
        self.sep_sets_: dict[frozenset[int], tuple[int, ...]] = {}
        self.excluded_factors_: list[str] = []

    def _find_separating_set(
        self, data: np.ndarray, x: int, y: int, adjacency: dict[int, list[int]], size: int
    ) -> Optional[tuple[int, ...]]:
        for anchor, other in ((x, y), (y, x)):
            neighbours = [node for node in adjacency[anchor] if node != other]
            if len(neighbours) < size:
                continue
            for conditioning in combinations(neighbours, size):
                result = g_test(
                    data[:, x],
                    data[:, y],
                    data[:, list(conditioning)] if size > 0 else None,
                )
                if not result.testable:
                    logger.debug(
                        f"[PC SKELETON] Test {x} ⊥ {y} | {conditioning} untestable, keeping the edge"
                    )
                    continue
                if result.is_independent(self.alpha):
                    return conditioning
        return None

    def _learn_skeleton(self, data: np.ndarray, active: list[int]) -> nx.Graph:
        skeleton = nx.Graph()
        skeleton.add_nodes_from(active)
        skeleton.add_edges_from(combinations(active, 2))

        for size in range(self.max_cond + 1):
            adjacency = {node: sorted(skeleton.neighbors(node)) for node in sorted(skeleton.nodes)}
            candidates = [
                (x, y)
                for x, y in sorted(tuple(sorted(edge)) for edge in skeleton.edges)
                if len(adjacency[x]) - 1 >= size or len(adjacency[y]) - 1 >= size
            ]
            if len(candidates) == 0:
                break
            separating_sets = Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self._find_separating_set)(data, x, y, adjacency, size)
                for x, y in candidates
            )
            removed = [
                (x, y, conditioning)
                for (x, y), conditioning in zip(candidates, separating_sets)
                if conditioning is not None
            ]
            for x, y, conditioning in removed:
                skeleton.remove_edge(x, y)
                self.sep_sets_[frozenset((x, y))] = conditioning
            logger.debug(
                f"[PC SKELETON] Conditioning size {size}: tested {len(candidates)} edges, removed {[(x, y) for x, y, _ in removed]}"
            )
        return skeleton

    @staticmethod
    def _is_undirected(pdag: nx.DiGraph, a: int, b: int) -> bool:
        return pdag.has_edge(a, b) and pdag.has_edge(b, a)

    @staticmethod
    def _is_directed(pdag: nx.DiGraph, a: int, b: int) -> bool:
        return pdag.has_edge(a, b) and not pdag.has_edge(b, a)

    @staticmethod
    def _is_adjacent(pdag: nx.DiGraph, a: int, b: int) -> bool:
        return pdag.has_edge(a, b) or pdag.has_edge(b, a)

    def _orient_colliders(self, skeleton: nx.Graph, pdag: nx.DiGraph) -> None:
        for z in sorted(skeleton.nodes):
            for x, y in combinations(sorted(skeleton.neighbors(z)), 2):
                if skeleton.has_edge(x, y):
                    continue
                if z in self.sep_sets_.get(frozenset((x, y)), ()):
                    continue
                for parent in (x, y):
                    # an orientation fixed by an earlier collider wins
                    if self._is_undirected(pdag, parent, z):
                        pdag.remove_edge(z, parent)
                logger.debug(f"[PC ORIENT] Collider {x} -> {z} <- {y}")

    def _meek_orients(self, pdag: nx.DiGraph, i: int, j: int) -> bool:
        nodes = sorted(pdag.nodes)
        # rule 1: k -> i - j with k, j non-adjacent
        for k in nodes:
            if k in (i, j):
                continue
            if self._is_directed(pdag, k, i) and not self._is_adjacent(pdag, k, j):
                return True
        # rule 2: i -> k -> j with i - j
        for k in nodes:
            if k in (i, j):
                continue
            if self._is_directed(pdag, i, k) and self._is_directed(pdag, k, j):
                return True
        # rule 3: i - k -> j and i - l -> j with k, l non-adjacent
        spouses = [
            k
            for k in nodes
            if k not in (i, j) and self._is_undirected(pdag, i, k) and self._is_directed(pdag, k, j)
        ]
        for k, l in combinations(spouses, 2):
            if not self._is_adjacent(pdag, k, l):
                return True
        return False

    def _apply_meek_rules(self, pdag: nx.DiGraph) -> None:
        changed = True
        while changed:
            changed = False
            undirected = sorted(
                (a, b) for a, b in pdag.edges if a < b and self._is_undirected(pdag, a, b)
            )
            for a, b in undirected:
                for i, j in ((a, b), (b, a)):
                    if self._meek_orients(pdag, i, j):
                        pdag.remove_edge(j, i)
                        logger.debug(f"[PC ORIENT] Meek rule orients {i} -> {j}")
                        changed = True
                        break
                if changed:
                    break

    def learn_graph(self, values: FactorValueMatrix) -> FactorCausalGraph:
        if values.m < self.min_samples:
            raise InsufficientDataError(
                f"PC discovery needs at least {self.min_samples} rows, got {values.m}"
            )
        data = values.as_array()
        active = [factor for factor in range(values.k) if len(np.unique(data[:, factor])) >= 2]
        self.excluded_factors_ = [
            values.factor_names[factor] for factor in range(values.k) if factor not in active
        ]
        if len(self.excluded_factors_) > 0:
            logger.warning(
                f"[PC SKELETON] Excluding constant factors from testing: {self.excluded_factors_}"
            )

        self.sep_sets_ = {}
        skeleton = self._learn_skeleton(data, active)
        pdag = nx.DiGraph()
        pdag.add_nodes_from(skeleton.nodes)
        for x, y in skeleton.edges:
            pdag.add_edge(x, y)
            pdag.add_edge(y, x)
        self._orient_colliders(skeleton, pdag)
        self._apply_meek_rules(pdag)
        self.skeleton_ = skeleton
        self.pdag_ = pdag

        mutual_information = {
            frozenset((x, y)): float(mutual_info_score(data[:, x], data[:, y]))
            for x, y in skeleton.edges
        }
        edges = [
            CausalEdge(
                source=values.factor_names[source],
                target=values.factor_names[target],
                weight=mutual_information[frozenset((source, target))],
            )
            for source, target in sorted(pdag.edges)
        ]
        graph = FactorCausalGraph(factors=values.factor_names, edges=tuple(edges))
        logger.success(
            f"[PC DISCOVERY] {skeleton.number_of_edges()} skeleton edges, {len(edges)} weighted directed edges"
        )
        return graph


def discover_pc(
    values: FactorValueMatrix,
    alpha: float = 0.05,
    max_cond: int = 3,
    n_jobs: int = 1,
    min_samples: int = MIN_SAMPLES,
) -> FactorCausalGraph:
    return PCDiscovery(
        alpha=alpha, max_cond=max_cond, min_samples=min_samples, n_jobs=n_jobs
    ).learn_graph(values)
