from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from scaml_gp.optimization.schemas import AcquisitionConfig, IterationRecord
from scaml_gp.settings import SETTINGS

SYNTHETIC_BENCHMARKS = ("branin", "hartmann3", "hartmann6")
TABULAR_PREFIX = "tabular:"


class ExperimentConfig(BaseModel):
    """One reproducible experiment: a benchmark, a method and a set of seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    benchmark: str = Field(..., description="branin | hartmann3 | hartmann6 | tabular:<directory>")
    method: Literal["gpbo", "scaml"] = Field(..., description="Plain GP-UCB or ScaML-GP")
    meta_tasks: int = Field(default=8, ge=0, description="Number of meta-tasks M")
    points_per_task: int = Field(default=32, ge=1, description="Points per meta-task N_m")
    iterations: int = Field(default=30, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], description="Seed list, or a count")
    noise_std: float | None = Field(
        default=None, ge=0.0, description="Observation noise std; family default when unset"
    )
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    output_path: Path = Field(default=Path("results.csv"))
    meta_data_dir: Path | None = Field(
        default=None, description="Where per-seed meta-data CSVs are written, if anywhere"
    )
    record_timings: bool = False
    max_workers: int = Field(default_factory=lambda: SETTINGS.harness.max_workers, ge=1)

    @field_validator("seeds", mode="before")
    @classmethod
    def validate_seeds(cls, v):
        if isinstance(v, int):
            if v < 1:
                raise ValueError(f"Seed count must be positive, got {v}")
            return list(range(v))
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seed_list(cls, v):
        if not v:
            raise ValueError("At least one seed is required")
        if len(set(v)) != len(v) or min(v) < 0:
            raise ValueError(f"Seeds must be unique and non-negative, got {v}")
        return v

    @field_validator("benchmark")
    @classmethod
    def validate_benchmark(cls, v):
        if v in SYNTHETIC_BENCHMARKS:
            return v
        if v.startswith(TABULAR_PREFIX) and len(v) > len(TABULAR_PREFIX):
            return v
        raise ValueError(f"Unknown benchmark {v!r}")

    @model_validator(mode="after")
    def validate_combination(self):
        if self.is_tabular and self.noise_std:
            raise ValueError("Tabular benchmarks are noiseless; noise_std must be 0 or unset")
        return self

    @property
    def is_tabular(self) -> bool:
        return self.benchmark.startswith(TABULAR_PREFIX)

    @property
    def family(self) -> str:
        return "tabular" if self.is_tabular else self.benchmark

    @property
    def tabular_directory(self) -> Path:
        return Path(self.benchmark[len(TABULAR_PREFIX) :])

    @property
    def resolved_noise_std(self) -> float:
        if self.noise_std is not None:
            return self.noise_std
        return SETTINGS.benchmarks.noise_std.get(self.family, 0.0)


class InputScaling(BaseModel):
    """Per-dimension affine map between the native box and the unit cube."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: np.ndarray
    upper: np.ndarray

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def to_native(self, u: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)


class NormalizationState(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["per-task", "joint-test"]
    mean: float = 0.0
    std: float = 1.0
    floored: bool = Field(default=False, description="std was raised to the floor")

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.std + self.mean

    def denormalize_variance(self, variances: np.ndarray) -> np.ndarray:
        return np.asarray(variances, dtype=float) * self.std**2


class RunResult(BaseModel):
    """Trace of one seed; ``error`` is set and ``records`` empty when the seed failed."""

    seed: int
    method: str
    benchmark: str
    true_max: float | None = None
    records: list[IterationRecord] = Field(default_factory=list)
    truncated: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def final_simple_regret(self) -> float | None:
        return self.records[-1].simple_regret if self.records else None

    @property
    def final_cumulative_regret(self) -> float | None:
        return self.records[-1].cumulative_regret if self.records else None
