import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

LENGTHSCALE_BOX = (1e-4, 1e2)
OUTPUTSCALE_BOX = (1e-4, 1e2)
NOISE_BOX = (1e-8, 1e-2)


def _frozen_array(value, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=float, ndmin=ndim)
    if array.ndim != ndim:
        raise ValueError(f"Expected a {ndim}-d array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class KernelParams(BaseModel):
    """SE-ARD hyperparameters of one task kernel."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lengthscales: np.ndarray = Field(..., description="One lengthscale per input dimension")
    outputscale: float = Field(..., description="Signal variance")

    @field_validator("lengthscales", mode="before")
    @classmethod
    def validate_lengthscales(cls, v):
        v = _frozen_array(v, 1)
        if v.size == 0:
            raise ValueError("At least one lengthscale is required")
        lo, hi = LENGTHSCALE_BOX
        if np.any(~np.isfinite(v)) or np.any(v < lo) or np.any(v > hi):
            raise ValueError(f"Lengthscales {v} outside [{lo}, {hi}]")
        return v

    @field_validator("outputscale")
    @classmethod
    def validate_outputscale(cls, v):
        lo, hi = OUTPUTSCALE_BOX
        if not lo <= v <= hi:
            raise ValueError(f"Outputscale {v} outside [{lo}, {hi}]")
        return float(v)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        return np.log(np.append(self.lengthscales, self.outputscale))

    @classmethod
    def from_log(cls, log_values: np.ndarray) -> "KernelParams":
        values = np.exp(np.asarray(log_values, dtype=float))
        return cls(
            lengthscales=np.clip(values[:-1], *LENGTHSCALE_BOX),
            outputscale=float(np.clip(values[-1], *OUTPUTSCALE_BOX)),
        )


class NoiseParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    noise_variance: float = Field(..., description="Observation noise variance")

    @field_validator("noise_variance")
    @classmethod
    def validate_noise_variance(cls, v):
        lo, hi = NOISE_BOX
        if not lo <= v <= hi:
            raise ValueError(f"Noise variance {v} outside [{lo}, {hi}]")
        return float(v)

    @classmethod
    def from_log(cls, log_value: float) -> "NoiseParams":
        return cls(noise_variance=float(np.clip(np.exp(log_value), *NOISE_BOX)))


class DataSet(BaseModel):
    """Inputs (rows in the unit cube once normalized) and their outputs."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray = Field(..., description="N x d input matrix")
    outputs: np.ndarray = Field(..., description="Length-N output vector")

    @field_validator("inputs", mode="before")
    @classmethod
    def validate_inputs(cls, v):
        return _frozen_array(v, 2)

    @field_validator("outputs", mode="before")
    @classmethod
    def validate_outputs(cls, v):
        return _frozen_array(v, 1)

    @model_validator(mode="after")
    def validate_lengths(self):
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} input rows but {self.outputs.shape[0]} outputs"
            )
        return self

    @classmethod
    def empty(cls, dim: int) -> "DataSet":
        return cls(inputs=np.zeros((0, dim)), outputs=np.zeros(0))

    @property
    def n(self) -> int:
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def append(self, x: np.ndarray, y: float) -> "DataSet":
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return DataSet(
            inputs=np.vstack([self.inputs, x]),
            outputs=np.append(self.outputs, float(y)),
        )

    def with_outputs(self, outputs: np.ndarray) -> "DataSet":
        return DataSet(inputs=self.inputs, outputs=outputs)


class FitDiagnostics(BaseModel):
    """Outcome of one optimizer restart."""

    model_config = ConfigDict(frozen=True)

    restart: int
    success: bool
    message: str
    initial_value: float | None = None
    final_value: float | None = None
    iterations: int = 0
