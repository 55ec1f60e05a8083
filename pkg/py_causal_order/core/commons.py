import json
from pathlib import Path
from typing import Any, Optional, Union

from loguru import logger
from py_spring_core import Properties
from pydantic import BaseModel, Field, ValidationError, model_validator

from py_causal_order.core.errors import UsageError
from py_causal_order.core.params import (
    DEFAULT_K,
    DEFAULT_SEED_COUNT,
    DEFAULT_SOLUTION_CAP,
    DEFAULT_THRESHOLD_RATIO,
    FULL_GRID,
    MIN_SAMPLES,
    ExperimentConfig,
    PipelineParams,
)

PROPERTIES_KEY = "causal_order"


class ConfigError(UsageError): ...


class PathsProperties(BaseModel):
    """Artifact locations; inputs must exist when a stage reads them, outputs are created."""

    table: Optional[Path] = None
    schema_file: Optional[Path] = None
    labels: Optional[Path] = None
    factor_defs: Optional[Path] = None
    factor_values: Optional[Path] = None
    graph: Optional[Path] = None
    preferences: Optional[Path] = None
    orderings: Optional[Path] = None
    scorer: Optional[Path] = None
    scores: Optional[Path] = None
    breakdown: Optional[Path] = None
    sequences: Optional[Path] = None
    external_nll: Optional[Path] = None
    report: Optional[Path] = None
    report_table: Optional[Path] = None
    run_store: Optional[Path] = None


class TableProperties(BaseModel):
    delimiter: str = Field(default=",", min_length=1)
    has_header: Optional[bool] = None
    label_column: Optional[str] = None


class DiscoveryProperties(BaseModel):
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    max_cond: int = Field(default=3, ge=0)
    min_samples: int = Field(default=MIN_SAMPLES, ge=1)


class OrderingProperties(BaseModel):
    k: int = Field(default=DEFAULT_K, ge=1)
    threshold_ratio: float = Field(default=DEFAULT_THRESHOLD_RATIO, gt=0.0, le=1.0)
    solution_cap: int = Field(default=DEFAULT_SOLUTION_CAP, ge=1)


class ScorerProperties(BaseModel):
    bins: int = Field(default=10, ge=1)
    smoothing: float = Field(default=1.0, gt=0.0)


class EvaluationProperties(BaseModel):
    """
    - `seeds`: the evaluation grid's seeds; unset means `seed`, `seed + 1`, ... (five seeds).
    - `ks`: numbers of orderings compared by the causal configurations; unset means `ordering.k`.
    - `graphs`: imported factor graphs compared with the discovered PC graph, by source name.
    """

    seeds: Optional[list[int]] = Field(default=None, min_length=1)
    train_fraction_of_normals: float = Field(default=0.5, gt=0.0, le=1.0)
    configs: list[ExperimentConfig] = Field(default_factory=lambda: list(FULL_GRID), min_length=1)
    ks: Optional[list[int]] = Field(default=None, min_length=1)
    graphs: dict[str, Path] = Field(default_factory=dict)


class CausalOrderProperties(Properties):
    """
    Settings of the whole pipeline, read from the `causal_order` key of a JSON config file:

    - `paths`: artifact locations.
    - `table`: delimiter, header and label-column handling of input files.
    - `discovery`, `ordering`, `scorer`, `evaluation`: stage parameters.
    - `seed`: base seed of the stochastic steps (data splits and random orderings), which all run
      inside the evaluation grid; explicit `evaluation.seeds` take precedence.
    - `threads`: cap on worker threads.
    """

    __key__ = PROPERTIES_KEY
    paths: PathsProperties = Field(default_factory=PathsProperties)
    table: TableProperties = Field(default_factory=TableProperties)
    discovery: DiscoveryProperties = Field(default_factory=DiscoveryProperties)
    ordering: OrderingProperties = Field(default_factory=OrderingProperties)
    scorer: ScorerProperties = Field(default_factory=ScorerProperties)
    evaluation: EvaluationProperties = Field(default_factory=EvaluationProperties)
    seed: int = 0
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _resolve_evaluation(self) -> "CausalOrderProperties":
        evaluation = self.evaluation
        if evaluation.seeds is None:
            evaluation.seeds = [self.seed + offset for offset in range(DEFAULT_SEED_COUNT)]
        if len(set(evaluation.seeds)) != len(evaluation.seeds):
            raise ConfigError(f"Evaluation seeds must be distinct: {evaluation.seeds}")
        if evaluation.ks is None:
            evaluation.ks = [self.ordering.k]
        if any(k < 1 for k in evaluation.ks):
            raise ConfigError(f"Evaluation K values must be >= 1: {evaluation.ks}")
        return self

    def pipeline_params(self) -> PipelineParams:
        return PipelineParams(
            alpha=self.discovery.alpha,
            max_cond=self.discovery.max_cond,
            min_samples=self.discovery.min_samples,
            k=self.ordering.k,
            threshold_ratio=self.ordering.threshold_ratio,
            solution_cap=self.ordering.solution_cap,
            bins=self.scorer.bins,
            smoothing=self.scorer.smoothing,
            train_fraction_of_normals=self.evaluation.train_fraction_of_normals,
        )


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_properties(
    path: Optional[Union[str, Path]] = None, overrides: Optional[dict[str, Any]] = None
) -> CausalOrderProperties:
    """
    Read the properties from `path` (or start from the defaults) and apply nested `overrides`,
    e.g. {"ordering": {"k": 5}}. Constraints are checked after the overrides are applied.
    """
    document: dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {config_path}")
        try:
            document = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            raise ConfigError(f"Config file {config_path} is not valid JSON: {error}") from error
        if not isinstance(document, dict):
            raise ConfigError(f"Config file {config_path} must hold a JSON object")
        document = document.get(PROPERTIES_KEY, document)

    try:
        properties = CausalOrderProperties.model_validate(_merge(document, overrides or {}))
    except ValidationError as error:
        raise ConfigError(f"Invalid configuration: {error}") from error
    logger.debug(f"[CONFIG LOAD] {properties.model_dump_json()}")
    return properties
