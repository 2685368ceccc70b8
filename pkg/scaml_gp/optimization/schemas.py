from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from scaml_gp.core.schemas import DataSet
from scaml_gp.settings import SETTINGS


class ContinuousBox(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["continuous"] = "continuous"
    lower: np.ndarray = Field(..., description="Lower bound per dimension")
    upper: np.ndarray = Field(..., description="Upper bound per dimension")

    @field_validator("lower", "upper", mode="before")
    @classmethod
    def validate_bounds(cls, v):
        v = np.array(v, dtype=float, ndmin=1)
        v.setflags(write=False)
        return v

    @model_validator(mode="after")
    def validate_box(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("Lower and upper bounds differ in length")
        if np.any(self.lower >= self.upper):
            raise ValueError(f"Degenerate box [{self.lower}, {self.upper}]")
        return self

    @classmethod
    def unit(cls, dim: int) -> "ContinuousBox":
        return cls(lower=np.zeros(dim), upper=np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size


class DiscreteTable(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["discrete"] = "discrete"
    candidates: np.ndarray = Field(..., description="C x d candidate rows")

    @field_validator("candidates", mode="before")
    @classmethod
    def validate_candidates(cls, v):
        v = np.array(v, dtype=float, ndmin=2)
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError(f"Candidate table must be a non-empty matrix, got shape {v.shape}")
        if np.unique(v, axis=0).shape[0] != v.shape[0]:
            raise ValueError("Candidate rows must be unique")
        v.setflags(write=False)
        return v

    @property
    def dim(self) -> int:
        return self.candidates.shape[1]

    def __len__(self) -> int:
        return self.candidates.shape[0]


Domain = ContinuousBox | DiscreteTable


class AcquisitionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta_sqrt: float = Field(default_factory=lambda: SETTINGS.acquisition.beta_sqrt, ge=0.0)
    continuous_restarts: int = Field(
        default_factory=lambda: SETTINGS.acquisition.continuous_restarts, ge=1
    )
    candidate_pool: int = Field(default_factory=lambda: SETTINGS.acquisition.candidate_pool, ge=1)
    refine_tolerance: float = Field(
        default_factory=lambda: SETTINGS.acquisition.refine_tolerance, gt=0.0
    )
    refine_max_evaluations: int = Field(
        default_factory=lambda: SETTINGS.acquisition.refine_max_evaluations, ge=1
    )


class Observation(BaseModel):
    """One objective evaluation: the noisy observation and the noiseless value."""

    model_config = ConfigDict(frozen=True)

    y: float
    f: float


class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int = Field(..., ge=1)
    x: list[float] = Field(..., description="Queried point (normalized units)")
    y: float = Field(..., description="Noisy observation")
    f: float = Field(..., description="Noiseless objective value")
    simple_regret: float
    cumulative_regret: float
    fit_ms: float | None = None
    acq_ms: float | None = None


class BOState(BaseModel):
    """Sequential BO state; ``bo_step`` returns a new state rather than mutating."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    test_data: DataSet
    true_max: float
    incumbent_value: float = -np.inf  # Best noisy observation
    best_noiseless: float = -np.inf
    trace: list[IterationRecord] = Field(default_factory=list)
    visited: frozenset[int] = frozenset()
    truncated: bool = False

    @classmethod
    def start(cls, dim: int, true_max: float) -> "BOState":
        return cls(test_data=DataSet.empty(dim), true_max=true_max)

    @property
    def iterations(self) -> int:
        return len(self.trace)


class PosteriorEvaluator(Protocol):
    def mean_and_variance(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class ModelBackend(Protocol):
    """Re-fits hyperparameters on the current test data and returns a posterior."""

    name: str

    def fit(self, test_data: DataSet, rng: np.random.Generator) -> PosteriorEvaluator: ...


class Objective(Protocol):
    def __call__(self, x: np.ndarray) -> Observation: ...
