from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SyntheticFamily = Literal["branin", "hartmann3", "hartmann6"]


class BraninTask(BaseModel):
    """Coefficients of ``a(x2 - b x1^2 + c x1 - r)^2 + s(1 - t)cos(x1) + s``."""

    model_config = ConfigDict(frozen=True)

    family: Literal["branin"] = "branin"
    a: float
    b: float
    c: float
    r: float
    s: float
    t: float

    @classmethod
    def standard(cls) -> "BraninTask":
        return cls(
            a=1.0,
            b=5.1 / (4.0 * np.pi**2),
            c=5.0 / np.pi,
            r=6.0,
            s=10.0,
            t=1.0 / (8.0 * np.pi),
        )

    @property
    def dim(self) -> int:
        return 2


class HartmannTask(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: Literal[3, 6] = Field(..., description="Selects the fixed A and P matrices")
    alpha: np.ndarray = Field(..., description="Weights of the four Gaussian bumps")

    @field_validator("alpha", mode="before")
    @classmethod
    def validate_alpha(cls, v):
        v = np.array(v, dtype=float, ndmin=1)
        if v.shape != (4,):
            raise ValueError(f"alpha must have 4 entries, got shape {v.shape}")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"alpha must be finite and non-negative, got {v}")
        v.setflags(write=False)
        return v

    @classmethod
    def standard(cls, dim: Literal[3, 6]) -> "HartmannTask":
        return cls(dim=dim, alpha=[1.0, 1.2, 3.0, 3.2])

    @property
    def family(self) -> str:
        return f"hartmann{self.dim}"


SyntheticTask = BraninTask | HartmannTask


class TabularTask(BaseModel):
    """A lookup table mapping ordinal configurations to objective values."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = Field(default="", description="Table identifier, usually the file stem")
    columns: list[str] = Field(..., description="Parameter names without the param: prefix")
    levels: list[list[float]] = Field(..., description="Ordered ordinal levels per column")
    rows: np.ndarray = Field(..., description="C x d configuration matrix")
    values: np.ndarray = Field(..., description="Objective value per configuration")

    @field_validator("rows", mode="before")
    @classmethod
    def validate_rows(cls, v):
        v = np.array(v, dtype=float, ndmin=2)
        v.setflags(write=False)
        return v

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v):
        v = np.array(v, dtype=float, ndmin=1)
        v.setflags(write=False)
        return v

    @model_validator(mode="after")
    def validate_table(self):
        if self.rows.shape[0] == 0:
            raise ValueError("Table has no rows")
        if self.rows.shape[0] != self.values.shape[0]:
            raise ValueError(f"{self.rows.shape[0]} rows but {self.values.shape[0]} values")
        if self.rows.shape[1] != len(self.columns) or len(self.levels) != len(self.columns):
            raise ValueError("Columns, levels and row width disagree")
        if not np.all(np.isfinite(self.rows)) or not np.all(np.isfinite(self.values)):
            raise ValueError("Table contains non-finite entries")
        if np.unique(self.rows, axis=0).shape[0] != self.rows.shape[0]:
            raise ValueError("Table contains duplicate configurations")
        for name, column, levels in zip(self.columns, self.rows.T, self.levels):
            if len(set(levels)) != len(levels):
                raise ValueError(f"Column {name} lists a level twice")
            if not np.all(np.isin(column, levels)):
                raise ValueError(f"Column {name} has values outside its levels")
        return self

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def true_max(self) -> float:
        return float(self.values[self.best_index])

    def unit_rows(self) -> np.ndarray:
        """Rows mapped to [0, 1] by ordinal rank; a column with one level maps to 0."""
        unit = np.zeros(self.rows.shape)
        for j, levels in enumerate(self.levels):
            rank = {level: i for i, level in enumerate(levels)}
            ranks = np.array([rank[value] for value in self.rows[:, j]], dtype=float)
            unit[:, j] = ranks / (len(levels) - 1) if len(levels) > 1 else 0.0
        return unit


class MetaDataSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_meta: int = Field(..., ge=0, description="Number of meta-tasks M")
    points_per_task: int = Field(..., ge=1, description="Points per meta-task N_m")
    noise_std: float = Field(..., ge=0.0, description="Observation noise std (output units)")
    seed: int = Field(..., ge=0)
