from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

MIN_SAMPLES = 20
DEFAULT_K = 10
DEFAULT_THRESHOLD_RATIO = 0.9
DEFAULT_SOLUTION_CAP = 100_000
DEFAULT_SEED_COUNT = 5

# graph source of the PC graph discovered per evaluation seed
PC_SOURCE = "pc"


class OrderingMode(str, Enum):
    CAUSAL = "causal"
    RANDOM = "random"


class Weighting(str, Enum):
    FACTOR_COUNT = "factor-count"
    UNIFORM = "uniform"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)
    ordering_mode: OrderingMode
    weighting: Weighting

    @property
    def label(self) -> str:
        return f"{self.ordering_mode.value}/{self.weighting.value}"


FULL_GRID = tuple(
    ExperimentConfig(ordering_mode=mode, weighting=weighting) for mode in OrderingMode for weighting in Weighting
)


class PipelineParams(BaseModel):
    """Every parameter that changes the outcome of an evaluation run."""

    model_config = ConfigDict(frozen=True)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    max_cond: int = Field(default=3, ge=0)
    min_samples: int = Field(default=MIN_SAMPLES, ge=1)
    k: int = Field(default=DEFAULT_K, ge=1)
    threshold_ratio: float = Field(default=DEFAULT_THRESHOLD_RATIO, gt=0.0, le=1.0)
    solution_cap: int = Field(default=DEFAULT_SOLUTION_CAP, ge=1)
    bins: int = Field(default=10, ge=1)
    smoothing: float = Field(default=1.0, gt=0.0)
    train_fraction_of_normals: float = Field(default=0.5, gt=0.0, le=1.0)
