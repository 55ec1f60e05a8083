import hashlib
from pathlib import Path
from typing import Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict

from py_causal_order.causal.causal_graph import FactorCausalGraph
from py_causal_order.causal.pc_discovery import discover_pc
from py_causal_order.core.errors import UsageError
from py_causal_order.core.params import (
    FULL_GRID,
    PC_SOURCE,
    ExperimentConfig,
    OrderingMode,
    PipelineParams,
    Weighting,
)
from py_causal_order.core.table import Ordering
from py_causal_order.evaluation.metrics import auc_roc, f1_at_contamination
from py_causal_order.evaluation.split import LabeledTable, SplitSpec, split
from py_causal_order.factor.factor_model import FactorMapping, FactorModel, FactorShapeError, FactorValueMatrix
from py_causal_order.ordering.lop_solver import OrderingSet, enumerate_top_k
from py_causal_order.ordering.preference import project
from py_causal_order.scoring.anomaly_scorer import ColumnWeights, ScoreReport, compute_weights
from py_causal_order.scoring.surrogate_scorer import fit
from py_causal_order.store.run_record import EvalRunRecord
from py_causal_order.store.run_repository import EvalRunRepository

# graph source name -> fixed graph, or None to discover a PC graph on every seed's training rows
GraphSources = Mapping[str, Optional[FactorCausalGraph]]


class ExperimentSetupError(UsageError): ...


class RunKey(NamedTuple):
    """
    One cell of the grid. Causal runs carry their graph source and K; the random baseline carries
    neither, as it serializes with a single random ordering whatever the graph.
    """

    graph_source: Optional[str]
    config: ExperimentConfig
    k: Optional[int]

    @property
    def label(self) -> str:
        if self.graph_source is None:
            return self.config.label
        return f"{self.config.label} [{self.graph_source}, K={self.k}]"


class ScoredRun(NamedTuple):
    key: RunKey
    scores: np.ndarray
    n_orderings: int


class RunResult(BaseModel):
    model_config = ConfigDict(frozen=True)
    graph_source: Optional[str] = None
    ordering_mode: OrderingMode
    weighting: Weighting
    k: Optional[int] = None
    seed: int
    auc: float
    f1: float
    n_orderings: int

    @property
    def config(self) -> ExperimentConfig:
        return ExperimentConfig(ordering_mode=self.ordering_mode, weighting=self.weighting)

    @property
    def key(self) -> RunKey:
        return RunKey(self.graph_source, self.config, self.k)


class CellSummary(BaseModel):
    model_config = ConfigDict(frozen=True)
    graph_source: Optional[str] = None
    ordering_mode: OrderingMode
    weighting: Weighting
    k: Optional[int] = None
    seeds: tuple[int, ...]
    aucs: tuple[float, ...]
    f1s: tuple[float, ...]
    mean_auc: float
    mean_f1: float

    @property
    def key(self) -> RunKey:
        config = ExperimentConfig(ordering_mode=self.ordering_mode, weighting=self.weighting)
        return RunKey(self.graph_source, config, self.k)


class CompareReport(BaseModel):
    """
    Per-seed runs and their per-cell means; `fingerprint` identifies the experiment. Causal cells
    exist for every graph source and every K, random cells once per weighting.
    """

    model_config = ConfigDict(frozen=True)
    fingerprint: str
    params: PipelineParams
    seeds: tuple[int, ...]
    graph_sources: tuple[str, ...]
    ks: tuple[int, ...]
    runs: tuple[RunResult, ...]
    cells: tuple[CellSummary, ...]

    def cell(
        self,
        ordering_mode: OrderingMode,
        weighting: Weighting,
        graph_source: Optional[str] = None,
        k: Optional[int] = None,
    ) -> CellSummary:
        """A causal cell defaults to the first graph source and the first K."""
        if ordering_mode is OrderingMode.CAUSAL:
            graph_source = self.graph_sources[0] if graph_source is None else graph_source
            k = self.ks[0] if k is None else k
        else:
            graph_source, k = None, None
        for cell in self.cells:
            if (cell.ordering_mode, cell.weighting, cell.graph_source, cell.k) == (ordering_mode, weighting, graph_source, k):
                return cell
        raise KeyError(f"No cell {ordering_mode.value}/{weighting.value} [{graph_source}, K={k}] in the report")


def random_ordering_set(column_names: Sequence[str], rng: np.random.Generator) -> OrderingSet:
    """A single uniformly random ordering."""
    sequence = rng.permutation(len(column_names)).tolist()
    return OrderingSet.single(Ordering.from_sequence(sequence), column_names)


def causal_ordering_set(
    values: FactorValueMatrix,
    mapping: FactorMapping,
    params: PipelineParams,
    graph: Optional[FactorCausalGraph] = None,
    n_jobs: int = 1,
) -> OrderingSet:
    """Discover (unless a graph is given), project onto columns and keep the top-k orderings."""
    if graph is None:
        graph = discover_pc(
            values, alpha=params.alpha, max_cond=params.max_cond, n_jobs=n_jobs, min_samples=params.min_samples
        )
    return enumerate_top_k(
        project(graph, mapping),
        k=params.k,
        threshold_ratio=params.threshold_ratio,
        solution_cap=params.solution_cap,
        n_jobs=n_jobs,
    )


def _graph_sources(graphs: Optional[GraphSources]) -> dict[str, Optional[FactorCausalGraph]]:
    sources = {PC_SOURCE: None} if graphs is None else dict(graphs)
    if len(sources) == 0:
        raise ExperimentSetupError("At least one graph source is needed")
    return sources


def _k_values(ks: Optional[Sequence[int]], params: PipelineParams) -> list[int]:
    values = [params.k] if ks is None else list(dict.fromkeys(ks))
    if len(values) == 0 or any(k < 1 for k in values):
        raise ExperimentSetupError(f"K values must be >= 1 and at least one is needed, got {values}")
    return values


def run_keys(
    configs: Sequence[ExperimentConfig], graph_sources: Sequence[str], ks: Sequence[int]
) -> list[RunKey]:
    """The cells of the grid in report order: configurations, then graph sources, then K."""
    keys: list[RunKey] = []
    for config in configs:
        if config.ordering_mode is OrderingMode.CAUSAL:
            keys.extend(RunKey(source, config, k) for source in graph_sources for k in ks)
        else:
            keys.append(RunKey(None, config, None))
    return keys


def experiment_fingerprint(
    data: LabeledTable,
    factor_model: FactorModel,
    params: PipelineParams,
    graphs: Optional[GraphSources] = None,
    ks: Optional[Sequence[int]] = None,
) -> str:
    digest = hashlib.sha256()
    for document in (data, factor_model.mapping, factor_model.values, params):
        digest.update(document.model_dump_json().encode("utf-8"))
    for source, graph in _graph_sources(graphs).items():
        digest.update(source.encode("utf-8"))
        digest.update(b"discovered" if graph is None else graph.model_dump_json().encode("utf-8"))
    digest.update(repr(_k_values(ks, params)).encode("utf-8"))
    return digest.hexdigest()


def _weights_for(weighting: Weighting, mapping: FactorMapping) -> ColumnWeights:
    if weighting is Weighting.FACTOR_COUNT:
        return compute_weights(mapping)
    return ColumnWeights.uniform(mapping.column_names)


def score_seed(
    data: LabeledTable,
    factor_model: FactorModel,
    configs: Sequence[ExperimentConfig],
    seed: int,
    params: PipelineParams = PipelineParams(),
    graphs: Optional[GraphSources] = None,
    ks: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, list[ScoredRun]]:
    """
    Test labels of the seed's split and the test scores of every cell, in `run_keys` order.

    Per graph source, orderings are enumerated once with the largest K and the scorer is fitted once;
    smaller K take the best orderings of that set. Configurations with the same orderings share the
    fitted scorer.
    """
    sources = _graph_sources(graphs)
    k_values = _k_values(ks, params)
    data_split = split(data, SplitSpec(seed=seed, train_fraction_of_normals=params.train_fraction_of_normals))
    test_rows = data_split.test.table.rows

    # (graph source, K) -> test NLL tensor and its orderings; the random baseline is (None, None)
    nll_by_variant: dict[tuple[Optional[str], Optional[int]], tuple[np.ndarray, OrderingSet]] = {}
    modes = dict.fromkeys(config.ordering_mode for config in configs)
    if OrderingMode.CAUSAL in modes:
        train_values = factor_model.values.select_rows(data_split.train_rows)
        largest = params.model_copy(update={"k": max(k_values)})
        for source, graph in sources.items():
            orderings = causal_ordering_set(train_values, factor_model.mapping, largest, graph)
            scorer = fit(data_split.train, orderings, bins=params.bins, smoothing=params.smoothing)
            nll = scorer.table_nll(test_rows, orderings.orderings)
            for k in k_values:
                head = orderings.head(k)
                nll_by_variant[(source, k)] = (nll[:, : head.k, :], head)
    if OrderingMode.RANDOM in modes:
        orderings = random_ordering_set(data.table.column_names, np.random.default_rng(seed))
        scorer = fit(data_split.train, orderings, bins=params.bins, smoothing=params.smoothing)
        nll_by_variant[(None, None)] = (scorer.table_nll(test_rows, orderings.orderings), orderings)

    scored: list[ScoredRun] = []
    for key in run_keys(configs, list(sources), k_values):
        nll, orderings = nll_by_variant[(key.graph_source, key.k)]
        report = ScoreReport.from_nll(nll, orderings, _weights_for(key.config.weighting, factor_model.mapping))
        scored.append(ScoredRun(key=key, scores=report.scores, n_orderings=orderings.k))
    return data_split.test.label_array(), scored


def _run_seed(
    data: LabeledTable,
    factor_model: FactorModel,
    configs: Sequence[ExperimentConfig],
    seed: int,
    params: PipelineParams,
    graphs: GraphSources,
    ks: Sequence[int],
) -> list[RunResult]:
    labels, scored = score_seed(data, factor_model, configs, seed, params, graphs, ks)
    results: list[RunResult] = []
    for run in scored:
        result = RunResult(
            graph_source=run.key.graph_source,
            ordering_mode=run.key.config.ordering_mode,
            weighting=run.key.config.weighting,
            k=run.key.k,
            seed=seed,
            auc=auc_roc(run.scores, labels),
            f1=f1_at_contamination(run.scores, labels),
            n_orderings=run.n_orderings,
        )
        logger.info(f"[EVAL RUN] {run.key.label} seed {seed}: AUC {result.auc:.4f}, F1 {result.f1:.4f}")
        results.append(result)
    return results


def _summarize(keys: Sequence[RunKey], seeds: Sequence[int], runs: Sequence[RunResult]) -> tuple[CellSummary, ...]:
    cells: list[CellSummary] = []
    for key in keys:
        by_seed = {run.seed: run for run in runs if run.key == key}
        ordered = [by_seed[seed] for seed in seeds]
        aucs = tuple(run.auc for run in ordered)
        f1s = tuple(run.f1 for run in ordered)
        cells.append(
            CellSummary(
                graph_source=key.graph_source,
                ordering_mode=key.config.ordering_mode,
                weighting=key.config.weighting,
                k=key.k,
                seeds=tuple(seeds),
                aucs=aucs,
                f1s=f1s,
                mean_auc=float(np.mean(aucs)),
                mean_f1=float(np.mean(f1s)),
            )
        )
    return tuple(cells)


def _stored_runs(
    repository: EvalRunRepository, fingerprint: str, keys: Sequence[RunKey], seed: int
) -> Optional[list[RunResult]]:
    runs: list[RunResult] = []
    for key in keys:
        record = repository.find_by_run_key(
            fingerprint, key.config.ordering_mode.value, key.config.weighting.value, seed, key.graph_source, key.k
        )
        if record is None:
            return None
        runs.append(
            RunResult(
                graph_source=record.graph_source,
                ordering_mode=OrderingMode(record.ordering_mode),
                weighting=Weighting(record.weighting),
                k=record.k,
                seed=record.seed,
                auc=record.auc,
                f1=record.f1,
                n_orderings=record.n_orderings,
            )
        )
    return runs


def compare_report(
    data: LabeledTable,
    factor_model: FactorModel,
    configs: Sequence[ExperimentConfig] = FULL_GRID,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    params: PipelineParams = PipelineParams(),
    n_jobs: int = 1,
    repository: Optional[EvalRunRepository] = None,
    graphs: Optional[GraphSources] = None,
    ks: Optional[Sequence[int]] = None,
) -> CompareReport:
    """
    Run every cell of the grid for every seed and summarize AUC-ROC and F1 per cell.

    - `graphs` names the graph sources compared by the causal configurations. A `None` graph is
      discovered with PC on the training rows of each seed; the default is that PC source alone.
    - `ks` lists the numbers of orderings compared by the causal configurations; the default is
      `params.k` alone.
    - Per seed, the split is shared by every cell, and a fitted scorer by the cells that use the
      same orderings.
    - With a `repository`, seeds whose runs are all stored under the same fingerprint are read back
      instead of recomputed, and new runs are stored afterwards.
    """
    configs = list(dict.fromkeys(configs))
    seeds = list(dict.fromkeys(seeds))
    if len(configs) == 0 or len(seeds) == 0:
        raise ExperimentSetupError("compare_report needs at least one configuration and one seed")
    if factor_model.values.m != data.m:
        raise FactorShapeError(f"{factor_model.values.m} factor value rows for {data.m} table rows")
    sources = _graph_sources(graphs)
    k_values = _k_values(ks, params)
    keys = run_keys(configs, list(sources), k_values)

    fingerprint = experiment_fingerprint(data, factor_model, params, sources, k_values)
    runs: list[RunResult] = []
    pending: list[int] = []
    for seed in seeds:
        stored = None if repository is None else _stored_runs(repository, fingerprint, keys, seed)
        if stored is None:
            pending.append(seed)
        else:
            logger.info(f"[EVAL RESUME] Seed {seed} read from the run store")
            runs.extend(stored)

    computed = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_run_seed)(data, factor_model, configs, seed, params, sources, k_values) for seed in pending
    )
    new_runs = [run for seed_runs in computed for run in seed_runs]
    runs.extend(new_runs)
    if repository is not None:
        for run in new_runs:
            repository.upsert_run(
                EvalRunRecord(
                    fingerprint=fingerprint,
                    graph_source=run.graph_source,
                    ordering_mode=run.ordering_mode.value,
                    weighting=run.weighting.value,
                    k=run.k,
                    seed=run.seed,
                    auc=run.auc,
                    f1=run.f1,
                    n_orderings=run.n_orderings,
                )
            )

    runs.sort(key=lambda run: (keys.index(run.key), seeds.index(run.seed)))
    report = CompareReport(
        fingerprint=fingerprint,
        params=params,
        seeds=tuple(seeds),
        graph_sources=tuple(sources),
        ks=tuple(k_values),
        runs=tuple(runs),
        cells=_summarize(keys, seeds, runs),
    )
    for cell in report.cells:
        logger.success(f"[EVAL REPORT] {cell.key.label}: mean AUC {cell.mean_auc:.4f}, mean F1 {cell.mean_f1:.4f}")
    return report


def write_report(
    report: CompareReport,
    json_path: Union[str, Path],
    table_path: Optional[Union[str, Path]] = None,
    delimiter: str = ",",
) -> None:
    """The full report as JSON, plus an optional flat (cell, seed, auc, f1) table."""
    Path(json_path).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    if table_path is None:
        return
    frame = pd.DataFrame(
        [
            {
                "config": run.config.label,
                "graph_source": run.graph_source,
                "k": run.k,
                "ordering_mode": run.ordering_mode.value,
                "weighting": run.weighting.value,
                "seed": run.seed,
                "auc": run.auc,
                "f1": run.f1,
                "n_orderings": run.n_orderings,
            }
            for run in report.runs
        ]
    )
    frame["k"] = frame["k"].astype("Int64")
    frame.to_csv(table_path, sep=delimiter, index=False, float_format="%.17g")
