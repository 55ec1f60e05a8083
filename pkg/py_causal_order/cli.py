import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from loguru import logger

from py_causal_order.causal.causal_graph import FactorCausalGraph, load_graph, save_graph
from py_causal_order.causal.pc_discovery import discover_pc
from py_causal_order.core.commons import CausalOrderProperties, ConfigError, load_properties
from py_causal_order.core.errors import CausalOrderError
from py_causal_order.core.params import PC_SOURCE
from py_causal_order.core.table import Table, load_schema, load_table
from py_causal_order.evaluation.experiment import compare_report, write_report
from py_causal_order.evaluation.split import LabeledTable, load_labels
from py_causal_order.factor.factor_model import FactorMapping, FactorModel, load_factor_defs, load_factor_model
from py_causal_order.ordering.lop_solver import enumerate_top_k, load_ordering_set, save_ordering_set
from py_causal_order.ordering.preference import load_preference_matrix, project, save_preference_matrix
from py_causal_order.scoring.anomaly_scorer import (
    ColumnWeights,
    ScoreReport,
    compute_weights,
    write_breakdown,
    write_scores,
)
from py_causal_order.scoring.external_bridge import export_nll, export_sequences, import_external_nll
from py_causal_order.scoring.surrogate_scorer import fit, load_scorer, save_scorer
from py_causal_order.store.run_repository import open_run_store

WEIGHTINGS = ("factor-count", "uniform")
# graph source name of paths.graph under --fixed-graph
FIXED_SOURCE = "fixed"

_PATH_FLAGS = {
    "table": "table",
    "schema": "schema_file",
    "labels": "labels",
    "factor_defs": "factor_defs",
    "factor_values": "factor_values",
    "graph": "graph",
    "preferences": "preferences",
    "orderings": "orderings",
    "scorer": "scorer",
    "scores": "scores",
    "breakdown": "breakdown",
    "sequences": "sequences",
    "external_nll": "external_nll",
    "report": "report",
    "report_table": "report_table",
    "run_store": "run_store",
}
_PARAMETER_FLAGS = {
    "delimiter": ("table", "delimiter"),
    "has_header": ("table", "has_header"),
    "label_column": ("table", "label_column"),
    "alpha": ("discovery", "alpha"),
    "max_cond": ("discovery", "max_cond"),
    "min_samples": ("discovery", "min_samples"),
    "k": ("ordering", "k"),
    "threshold_ratio": ("ordering", "threshold_ratio"),
    "solution_cap": ("ordering", "solution_cap"),
    "bins": ("scorer", "bins"),
    "smoothing": ("scorer", "smoothing"),
    "seeds": ("evaluation", "seeds"),
    "train_fraction": ("evaluation", "train_fraction_of_normals"),
    "ks": ("evaluation", "ks"),
}


def _require(properties: CausalOrderProperties, name: str, must_exist: bool = True) -> Path:
    path = getattr(properties.paths, name)
    if path is None:
        raise ConfigError(f"paths.{name} is not configured")
    if must_exist and not Path(path).exists():
        raise ConfigError(f"paths.{name} does not exist: {path}")
    return Path(path)


def _optional(properties: CausalOrderProperties, name: str) -> Optional[Path]:
    path = getattr(properties.paths, name)
    return None if path is None else _require(properties, name)


def _load_input_table(properties: CausalOrderProperties) -> Table:
    schema_path = _optional(properties, "schema_file")
    return load_table(
        _require(properties, "table"),
        schema=load_schema(schema_path) if schema_path is not None else None,
        delimiter=properties.table.delimiter,
        has_header=properties.table.has_header,
    )


def _load_labeled(properties: CausalOrderProperties, table: Table) -> Optional[LabeledTable]:
    labels_path = _optional(properties, "labels")
    if labels_path is None:
        return None
    labels = load_labels(labels_path, column=properties.table.label_column, delimiter=properties.table.delimiter)
    return LabeledTable(table=table, labels=labels)


def _load_factor_model(properties: CausalOrderProperties, table: Table) -> FactorModel:
    return load_factor_model(
        _require(properties, "factor_defs"),
        _require(properties, "factor_values"),
        table,
        delimiter=properties.table.delimiter,
    )


def _training_rows(properties: CausalOrderProperties, table: Table) -> list[int]:
    """Rows a stage may learn from: the normal rows when labels are configured, else all rows."""
    labeled = _load_labeled(properties, table)
    return list(range(table.m)) if labeled is None else labeled.normal_rows()


def run_discover(properties: CausalOrderProperties) -> None:
    factor_values_path = _require(properties, "factor_values")
    _require(properties, "factor_defs")
    table = _load_input_table(properties)
    factor_model = _load_factor_model(properties, table)
    values = factor_model.values.select_rows(_training_rows(properties, table))
    logger.info(f"[CLI DISCOVER] Learning a factor graph from {values.m} rows of {factor_values_path}")
    graph = discover_pc(
        values,
        alpha=properties.discovery.alpha,
        max_cond=properties.discovery.max_cond,
        n_jobs=properties.threads,
        min_samples=properties.discovery.min_samples,
    )
    save_graph(graph, _require(properties, "graph", must_exist=False))


def run_project(properties: CausalOrderProperties) -> None:
    table = _load_input_table(properties)
    mapping = FactorMapping.from_defs(load_factor_defs(_require(properties, "factor_defs")), table.column_names)
    matrix = project(load_graph(_require(properties, "graph")), mapping)
    save_preference_matrix(matrix, _require(properties, "preferences", must_exist=False))


def run_order(properties: CausalOrderProperties) -> None:
    matrix = load_preference_matrix(_require(properties, "preferences"))
    ordering_set = enumerate_top_k(
        matrix,
        k=properties.ordering.k,
        threshold_ratio=properties.ordering.threshold_ratio,
        solution_cap=properties.ordering.solution_cap,
        n_jobs=properties.threads,
    )
    save_ordering_set(ordering_set, _require(properties, "orderings", must_exist=False))


def run_fit(properties: CausalOrderProperties) -> None:
    table = _load_input_table(properties)
    ordering_set = load_ordering_set(_require(properties, "orderings"))
    train = table.select_rows(_training_rows(properties, table))
    scorer = fit(
        train,
        ordering_set,
        bins=properties.scorer.bins,
        smoothing=properties.scorer.smoothing,
        n_jobs=properties.threads,
    )
    save_scorer(scorer, _require(properties, "scorer", must_exist=False))


def _weights(properties: CausalOrderProperties, table: Table, weighting: str) -> ColumnWeights:
    if weighting == "uniform":
        return ColumnWeights.uniform(table.column_names)
    defs = load_factor_defs(_require(properties, "factor_defs"))
    return compute_weights(FactorMapping.from_defs(defs, table.column_names))


def run_score(properties: CausalOrderProperties, weighting: str = "factor-count") -> None:
    """Score every table row, from the surrogate scorer or from imported external NLLs."""
    table = _load_input_table(properties)
    ordering_set = load_ordering_set(_require(properties, "orderings"))
    weights = _weights(properties, table, weighting)
    external_path = _optional(properties, "external_nll")
    if external_path is not None:
        nll = import_external_nll(
            external_path,
            sample_ids=list(range(table.m)),
            n_orderings=ordering_set.k,
            d=table.d,
            delimiter=properties.table.delimiter,
        )
        report = ScoreReport.from_nll(nll, ordering_set, weights)
    else:
        scorer = load_scorer(_require(properties, "scorer"))
        report = ScoreReport.from_nll(scorer.table_nll(table.rows, ordering_set.orderings), ordering_set, weights)
    write_scores(report, _require(properties, "scores", must_exist=False), delimiter=properties.table.delimiter)
    if properties.paths.breakdown is not None:
        write_breakdown(report, properties.paths.breakdown, delimiter=properties.table.delimiter)
    logger.success(f"[CLI SCORE] Wrote {report.m} scores to {properties.paths.scores}")


def run_export(properties: CausalOrderProperties, with_nll: bool = False) -> None:
    """Write serialized sequences for an external scorer, optionally with surrogate NLLs to compare against."""
    table = _load_input_table(properties)
    ordering_set = load_ordering_set(_require(properties, "orderings"))
    export_sequences(table, ordering_set, _require(properties, "sequences", must_exist=False))
    if with_nll:
        scorer = load_scorer(_require(properties, "scorer"))
        export_nll(
            scorer.table_nll(table.rows, ordering_set.orderings),
            _require(properties, "external_nll", must_exist=False),
            delimiter=properties.table.delimiter,
        )


def _graph_sources(properties: CausalOrderProperties, fixed_graph: bool) -> dict[str, Optional[FactorCausalGraph]]:
    """PC discovery per seed (or paths.graph under --fixed-graph), plus every imported graph by name."""
    graphs: dict[str, Optional[FactorCausalGraph]] = (
        {FIXED_SOURCE: load_graph(_require(properties, "graph"))} if fixed_graph else {PC_SOURCE: None}
    )
    for name, path in properties.evaluation.graphs.items():
        if name in graphs:
            raise ConfigError(f"evaluation.graphs.{name} clashes with the {name!r} graph source")
        if not Path(path).exists():
            raise ConfigError(f"evaluation.graphs.{name} does not exist: {path}")
        graphs[name] = load_graph(path)
    return graphs


def run_eval(properties: CausalOrderProperties, fixed_graph: bool = False) -> None:
    table = _load_input_table(properties)
    labeled = _load_labeled(properties, table)
    if labeled is None:
        raise ConfigError("paths.labels is required for evaluation")
    factor_model = _load_factor_model(properties, table)
    graphs = _graph_sources(properties, fixed_graph)
    run_store_path = properties.paths.run_store
    repository = open_run_store(run_store_path) if run_store_path is not None else None
    report = compare_report(
        labeled,
        factor_model,
        configs=properties.evaluation.configs,
        seeds=properties.evaluation.seeds,
        params=properties.pipeline_params(),
        n_jobs=properties.threads,
        repository=repository,
        graphs=graphs,
        ks=properties.evaluation.ks,
    )
    write_report(
        report,
        _require(properties, "report", must_exist=False),
        properties.paths.report_table,
        delimiter=properties.table.delimiter,
    )


def run_pipeline(properties: CausalOrderProperties, weighting: str = "factor-count", fixed_graph: bool = False) -> None:
    run_discover(properties)
    run_project(properties)
    run_order(properties)
    run_fit(properties)
    run_score(properties, weighting=weighting)
    run_eval(properties, fixed_graph=fixed_graph)


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--threads", type=int, help="cap on worker threads")
    parser.add_argument("--seed", type=int, help="base seed of stochastic steps")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")
    for flag in _PATH_FLAGS:
        parser.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=Path)
    parser.add_argument("--delimiter")
    header = parser.add_mutually_exclusive_group()
    header.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    header.add_argument("--no-header", dest="has_header", action="store_const", const=False)
    parser.add_argument("--label-column", dest="label_column")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--max-cond", dest="max_cond", type=int)
    parser.add_argument("--min-samples", dest="min_samples", type=int)
    parser.add_argument("-k", "--k", dest="k", type=int)
    parser.add_argument("--threshold-ratio", dest="threshold_ratio", type=float)
    parser.add_argument("--solution-cap", dest="solution_cap", type=int)
    parser.add_argument("--bins", type=int)
    parser.add_argument("--smoothing", type=float)
    parser.add_argument("--seeds", type=int, nargs="+")
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.add_argument("--ks", type=int, nargs="+", help="numbers of orderings compared by eval")
    parser.add_argument(
        "--eval-graph",
        dest="eval_graphs",
        action="append",
        metavar="NAME=PATH",
        help="imported factor graph compared by eval (repeatable)",
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="py_causal_order",
        description="Causal column ordering and reweighting for tabular anomaly detection",
    )
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name in ("discover", "project", "order", "fit"):
        subcommands.add_parser(name, parents=[common])
    for name in ("score", "pipeline"):
        subparser = subcommands.add_parser(name, parents=[common])
        subparser.add_argument("--weighting", choices=WEIGHTINGS, default="factor-count")
    for name in ("eval", "pipeline"):
        subparser = subcommands.choices.get(name) or subcommands.add_parser(name, parents=[common])
        subparser.add_argument(
            "--fixed-graph", dest="fixed_graph", action="store_true", help="use paths.graph instead of discovering per seed"
        )
    export = subcommands.add_parser("export", parents=[common])
    export.add_argument("--with-nll", dest="with_nll", action="store_true")
    return parser


def _overrides(arguments: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    paths = {key: str(getattr(arguments, flag)) for flag, key in _PATH_FLAGS.items() if getattr(arguments, flag) is not None}
    if len(paths) > 0:
        overrides["paths"] = paths
    for flag, (section, key) in _PARAMETER_FLAGS.items():
        value = getattr(arguments, flag)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    for flag in ("threads", "seed"):
        if getattr(arguments, flag) is not None:
            overrides[flag] = getattr(arguments, flag)
    if arguments.eval_graphs is not None:
        overrides.setdefault("evaluation", {})["graphs"] = dict(_named_path(value) for value in arguments.eval_graphs)
    return overrides


def _named_path(value: str) -> tuple[str, str]:
    name, separator, path = value.partition("=")
    if separator == "" or name.strip() == "" or path.strip() == "":
        raise ConfigError(f"--eval-graph expects NAME=PATH, got {value!r}")
    return name.strip(), path.strip()


def _configure_logging(arguments: argparse.Namespace) -> None:
    logger.remove()
    level = "DEBUG" if arguments.verbose else "WARNING" if arguments.quiet else "INFO"
    logger.add(sys.stderr, level=level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    arguments = build_parser().parse_args(argv)
    _configure_logging(arguments)
    commands: dict[str, Callable[[CausalOrderProperties], None]] = {
        "discover": run_discover,
        "project": run_project,
        "order": run_order,
        "fit": run_fit,
        "score": lambda properties: run_score(properties, weighting=arguments.weighting),
        "eval": lambda properties: run_eval(properties, fixed_graph=arguments.fixed_graph),
        "export": lambda properties: run_export(properties, with_nll=arguments.with_nll),
        "pipeline": lambda properties: run_pipeline(
            properties, weighting=arguments.weighting, fixed_graph=arguments.fixed_graph
        ),
    }
    try:
        properties = load_properties(arguments.config, _overrides(arguments))
        commands[arguments.command](properties)
    except CausalOrderError as error:
        logger.error(f"[CLI {arguments.command.upper()}] {type(error).__name__}: {error}")
        return error.exit_status
    except Exception:
        logger.exception(f"[CLI {arguments.command.upper()}] Internal error")
        return 1
    logger.success(f"[CLI {arguments.command.upper()}] Done")
    return 0
