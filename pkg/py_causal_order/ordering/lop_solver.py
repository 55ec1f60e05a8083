import math
import threading
from itertools import islice, permutations
from pathlib import Path
from typing import Optional, Sequence, Union, cast

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from py_causal_order.core.errors import DataError, ResourceError, UsageError
from py_causal_order.core.params import DEFAULT_SOLUTION_CAP, DEFAULT_THRESHOLD_RATIO
from py_causal_order.core.table import Ordering
from py_causal_order.ordering.preference import PreferenceMatrix

RankVector = tuple[int, ...]


class OrderingParameterError(UsageError): ...


class OrderingSetError(DataError): ...


class EnumerationCapError(ResourceError):
    def __init__(self, cap: int) -> None:
        super().__init__(
            f"More than {cap} orderings reach the threshold; raise the solution cap or the threshold ratio"
        )
        self.cap = cap


class RankedOrdering(BaseModel):
    model_config = ConfigDict(frozen=True)
    ordering: Ordering
    objective: float


class OrderingSet(BaseModel):
    """
    The selected orderings with their objective values, best first; equal objectives are ordered by
    the lexicographically smaller rank vector. Every objective reaches `threshold`.
    """

    model_config = ConfigDict(frozen=True)
    column_names: tuple[str, ...]
    entries: tuple[RankedOrdering, ...]
    optimum: float
    threshold: float

    @model_validator(mode="after")
    def _check_entries(self) -> "OrderingSet":
        d = len(self.column_names)
        seen: set[RankVector] = set()
        for entry in self.entries:
            if entry.ordering.d != d:
                raise OrderingSetError(f"Ordering {list(entry.ordering.ranks)} does not cover {d} columns")
            if entry.objective < self.threshold:
                raise OrderingSetError(
                    f"Ordering {list(entry.ordering.ranks)} scores {entry.objective} below threshold {self.threshold}"
                )
            if entry.ordering.ranks in seen:
                raise OrderingSetError(f"Duplicate ordering {list(entry.ordering.ranks)}")
            seen.add(entry.ordering.ranks)
        keys = [(-entry.objective, entry.ordering.ranks) for entry in self.entries]
        if keys != sorted(keys):
            raise OrderingSetError("Orderings must be sorted by objective, then rank vector")
        return self

    @classmethod
    def single(cls, ordering: Ordering, column_names: Sequence[str]) -> "OrderingSet":
        """A one-ordering set carrying no objective, e.g. for a random serialization baseline."""
        return cls(
            column_names=tuple(column_names),
            entries=(RankedOrdering(ordering=ordering, objective=0.0),),
            optimum=0.0,
            threshold=0.0,
        )

    @property
    def k(self) -> int:
        return len(self.entries)

    def head(self, k: int) -> "OrderingSet":
        """The k best orderings; equal to enumerating with k directly."""
        return OrderingSet(
            column_names=self.column_names, entries=self.entries[:k], optimum=self.optimum, threshold=self.threshold
        )

    @property
    def orderings(self) -> list[Ordering]:
        return [entry.ordering for entry in self.entries]


def _objective_of_ranks(weights: np.ndarray, ranks: RankVector) -> float:
    rank_array = np.asarray(ranks)
    precedes = rank_array[:, None] < rank_array[None, :]
    # exactly rounded, so orderings selecting the same multiset of weights tie exactly
    return math.fsum(weights[precedes].tolist())


def _as_array(weights: Union[PreferenceMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(weights, PreferenceMatrix):
        return weights.as_array()
    return np.asarray(weights, dtype=np.float64)


def evaluate_objective(weights: Union[PreferenceMatrix, np.ndarray], ordering: Ordering) -> float:
    """Σ_{i,j} w[i][j]·[rank(i) < rank(j)]: the total weight of satisfied precedences."""
    return _objective_of_ranks(_as_array(weights), ordering.ranks)


def _ranks_of_sequence(sequence: Sequence[int]) -> RankVector:
    ranks = [0] * len(sequence)
    for rank, column in enumerate(sequence, start=1):
        ranks[column] = rank
    return tuple(ranks)


class _Incumbent:
    """Best leaf found so far, shared by concurrently explored subtrees; only ever improves."""

    def __init__(self) -> None:
        self.value = -math.inf
        self.ranks: Optional[RankVector] = None
        self._lock = threading.Lock()

    def offer(self, value: float, ranks: RankVector) -> None:
        with self._lock:
            if value > self.value or (value == self.value and self.ranks is not None and ranks < self.ranks):
                self.value = value
                self.ranks = ranks


class _LeafCounter:
    def __init__(self, cap: int) -> None:
        self.cap = cap
        self.count = 0
        self._lock = threading.Lock()

    def add(self) -> None:
        with self._lock:
            self.count += 1
            if self.count > self.cap:
                raise EnumerationCapError(self.cap)


class LinearOrderingSolver:
    """
    Exact branch-and-bound over position assignments for the Linear Ordering Problem.

    Columns are placed one position at a time. Placing column c in front of the still unplaced set R
    gains Σ_{r∈R} w[c][r]; the unplaced set can contribute at most Σ_{i<j∈R} max(w[i][j], w[j][i]).
    Leaves are re-evaluated with `evaluate_objective`, so reported objectives are exactly those of
    the canonical evaluation. Subtrees rooted at each first column may run on `n_jobs` threads.
    """

    def __init__(
        self,
        weights: Union[PreferenceMatrix, np.ndarray],
        n_jobs: int = 1,
        tolerance: float = 1e-9,
    ) -> None:
        self.weights = _as_array(weights)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise OrderingParameterError(f"Preference weights must be square, got {self.weights.shape}")
        self.d = self.weights.shape[0]
        if self.d < 1:
            raise OrderingParameterError("The Linear Ordering Problem needs at least one column")
        self.upper = np.maximum(self.weights, self.weights.T)
        np.fill_diagonal(self.upper, 0.0)
        self.n_jobs = n_jobs
        self.slack = tolerance * (1.0 + float(np.abs(self.weights).sum()))

    def _children(
        self, remaining: list[int], partial: float
    ) -> list[tuple[int, list[int], float, float]]:
        children = []
        for column in remaining:
            rest = [other for other in remaining if other != column]
            gain = float(self.weights[column, rest].sum()) if rest else 0.0
            bound = float(self.upper[np.ix_(rest, rest)].sum()) / 2.0 if len(rest) > 1 else 0.0
            children.append((column, rest, partial + gain, bound))
        return children

    def _maximize(self, prefix: list[int], remaining: list[int], partial: float, incumbent: _Incumbent) -> None:
        if len(remaining) == 0:
            ranks = _ranks_of_sequence(prefix)
            incumbent.offer(_objective_of_ranks(self.weights, ranks), ranks)
            return
        children = self._children(remaining, partial)
        children.sort(key=lambda child: (-child[2], child[0]))
        for column, rest, value, bound in children:
            if value + bound < incumbent.value - self.slack:
                continue
            self._maximize(prefix + [column], rest, value, incumbent)

    def _collect(
        self,
        prefix: list[int],
        remaining: list[int],
        partial: float,
        threshold: float,
        counter: _LeafCounter,
        found: list[tuple[float, RankVector]],
    ) -> None:
        if len(remaining) == 0:
            ranks = _ranks_of_sequence(prefix)
            value = _objective_of_ranks(self.weights, ranks)
            if value >= threshold:
                counter.add()
                found.append((value, ranks))
            return
        for column, rest, value, bound in self._children(remaining, partial):
            if value + bound < threshold - self.slack:
                continue
            self._collect(prefix + [column], rest, value, threshold, counter, found)

    def _root_subtrees(self) -> list[tuple[int, list[int], float, float]]:
        return self._children(list(range(self.d)), 0.0)

    def solve(self) -> tuple[float, Ordering]:
        if not np.any(self.weights):
            return 0.0, Ordering.identity(self.d)
        incumbent = _Incumbent()
        roots = sorted(self._root_subtrees(), key=lambda child: (-child[2], child[0]))
        Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(self._maximize)([column], rest, value, incumbent)
            for column, rest, value, _ in roots
        )
        ranks = cast(RankVector, incumbent.ranks)
        logger.debug(f"[LOP SOLVE] Optimum {incumbent.value} at ranks {list(ranks)}")
        return incumbent.value, Ordering(ranks=ranks)

    def enumerate(self, threshold: float, cap: int = DEFAULT_SOLUTION_CAP) -> list[tuple[float, RankVector]]:
        """Every ordering whose objective reaches `threshold`, best first."""
        counter = _LeafCounter(cap)
        roots = self._root_subtrees()

        def explore(column: int, rest: list[int], value: float) -> list[tuple[float, RankVector]]:
            found: list[tuple[float, RankVector]] = []
            self._collect([column], rest, value, threshold, counter, found)
            return found

        subtrees = Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(explore)(column, rest, value)
            for column, rest, value, bound in roots
            if value + bound >= threshold - self.slack
        )
        solutions = [solution for found in subtrees for solution in found]
        solutions.sort(key=lambda solution: (-solution[0], solution[1]))
        return solutions


def solve_lop(weights: Union[PreferenceMatrix, np.ndarray], n_jobs: int = 1) -> tuple[float, Ordering]:
    """
    Maximum of the Linear Ordering objective and one optimal ordering (the lexicographically
    smallest rank vector among the optima).
    """
    return LinearOrderingSolver(weights, n_jobs=n_jobs).solve()


def enumerate_top_k(
    weights: Union[PreferenceMatrix, np.ndarray],
    k: int,
    threshold_ratio: float = DEFAULT_THRESHOLD_RATIO,
    solution_cap: int = DEFAULT_SOLUTION_CAP,
    n_jobs: int = 1,
    column_names: Optional[Sequence[str]] = None,
) -> OrderingSet:
    """
    Solve for the optimum O*, enumerate every ordering with objective >= threshold_ratio·O*, and keep
    the k best by (objective descending, rank vector ascending).
    """
    if k < 1:
        raise OrderingParameterError(f"k must be >= 1, got {k}")
    if not 0.0 < threshold_ratio <= 1.0:
        raise OrderingParameterError(f"threshold_ratio must lie in (0, 1], got {threshold_ratio}")
    if column_names is None:
        column_names = (
            weights.column_names if isinstance(weights, PreferenceMatrix) else [f"c{i}" for i in range(len(weights))]
        )

    solver = LinearOrderingSolver(weights, n_jobs=n_jobs)
    optimum, _ = solver.solve()
    threshold = threshold_ratio * optimum

    if optimum == 0.0:
        # every one of the d! orderings qualifies; the k smallest rank vectors are generated lazily
        if math.factorial(solver.d) > solution_cap:
            raise EnumerationCapError(solution_cap)
        logger.warning(
            "[LOP ENUMERATION] Optimum is 0, every ordering qualifies; keeping the lexicographically smallest"
        )
        solutions = [(0.0, tuple(ranks)) for ranks in islice(permutations(range(1, solver.d + 1)), k)]
    else:
        solutions = solver.enumerate(threshold, cap=solution_cap)

    logger.info(
        f"[LOP ENUMERATION] Optimum {optimum}, threshold {threshold}, {len(solutions)} qualifying orderings, keeping {min(k, len(solutions))}"
    )
    return OrderingSet(
        column_names=tuple(column_names),
        entries=tuple(
            RankedOrdering(ordering=Ordering(ranks=ranks), objective=value) for value, ranks in solutions[:k]
        ),
        optimum=optimum,
        threshold=threshold,
    )


class _RankedDocument(BaseModel):
    ranks: list[int]
    objective: float


class _OrderingSetDocument(BaseModel):
    columns: list[str]
    optimum: float
    threshold: float
    orderings: list[_RankedDocument]


def save_ordering_set(ordering_set: OrderingSet, path: Union[str, Path]) -> None:
    document = _OrderingSetDocument(
        columns=list(ordering_set.column_names),
        optimum=ordering_set.optimum,
        threshold=ordering_set.threshold,
        orderings=[
            _RankedDocument(ranks=list(entry.ordering.ranks), objective=entry.objective)
            for entry in ordering_set.entries
        ],
    )
    Path(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")


def load_ordering_set(path: Union[str, Path]) -> OrderingSet:
    try:
        document = _OrderingSetDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as error:
        raise OrderingSetError(f"Invalid ordering set document {path}: {error}") from error
    return OrderingSet(
        column_names=tuple(document.columns),
        entries=tuple(
            RankedOrdering(ordering=Ordering(ranks=tuple(entry.ranks)), objective=entry.objective)
            for entry in document.orderings
        ),
        optimum=document.optimum,
        threshold=document.threshold,
    )
