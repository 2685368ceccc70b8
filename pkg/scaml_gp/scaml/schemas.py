import hashlib

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from scaml_gp.core.regression import FittedGP
from scaml_gp.core.schemas import KernelParams, NoiseParams
from scaml_gp.errors import InvalidArgumentError, StaleCacheError


class TaskIndex(BaseModel):
    """1-based task index; ``num_meta + 1`` marks the test task."""

    model_config = ConfigDict(frozen=True)

    value: int = Field(..., description="Task number in 1..M+1")
    num_meta: int = Field(..., ge=0, description="Number of meta-tasks M")

    @model_validator(mode="after")
    def validate_range(self):
        if not 1 <= self.value <= self.num_meta + 1:
            raise ValueError(f"Task index {self.value} outside [1, {self.num_meta + 1}]")
        return self

    @classmethod
    def test(cls, num_meta: int) -> "TaskIndex":
        return cls(value=num_meta + 1, num_meta=num_meta)

    @property
    def is_test(self) -> bool:
        return self.value == self.num_meta + 1


def as_task_index(task: "TaskIndex | int", num_meta: int) -> TaskIndex:
    if isinstance(task, TaskIndex):
        if task.num_meta != num_meta:
            raise InvalidArgumentError(
                f"Task index built for M={task.num_meta}, model has M={num_meta}"
            )
        return task
    try:
        return TaskIndex(value=int(task), num_meta=num_meta)
    except ValueError as e:
        raise InvalidArgumentError(str(e)) from e


class TaskWeights(BaseModel):
    """Per-meta-task weights; zero is accepted as the decoupled limit."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: np.ndarray = Field(..., description="Length-M weight vector")

    @field_validator("w", mode="before")
    @classmethod
    def validate_w(cls, v):
        v = np.array(v, dtype=float, ndmin=1)
        if v.ndim != 1:
            raise ValueError(f"Weights must be a vector, got shape {v.shape}")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"Weights must be finite and non-negative, got {v}")
        v.setflags(write=False)
        return v

    @classmethod
    def ones(cls, num_meta: int) -> "TaskWeights":
        return cls(w=np.ones(num_meta))

    def __len__(self) -> int:
        return self.w.size


class TestHypers(BaseModel):
    """Test-task hyperparameters: residual kernel k_t, noise and task weights."""

    __test__ = False
    model_config = ConfigDict(frozen=True)

    kernel: KernelParams
    noise: NoiseParams
    weights: TaskWeights


class MetaModel(BaseModel):
    """Fitted meta-task GPs plus the test-task hyperparameters."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    meta_gps: list[FittedGP] = Field(default_factory=list)
    weights: TaskWeights
    test_kernel: KernelParams
    test_noise: NoiseParams

    @model_validator(mode="after")
    def validate_shapes(self):
        for m, gp in enumerate(self.meta_gps, start=1):
            if gp.dim != self.test_kernel.dim:
                raise ValueError(
                    f"Meta-task {m} has dimension {gp.dim}, test kernel {self.test_kernel.dim}"
                )
        if len(self.weights) != len(self.meta_gps):
            raise ValueError(
                f"{len(self.weights)} weights for {len(self.meta_gps)} meta-tasks"
            )
        return self

    @property
    def num_meta(self) -> int:
        return len(self.meta_gps)

    @property
    def dim(self) -> int:
        return self.test_kernel.dim

    @property
    def test_hypers(self) -> TestHypers:
        return TestHypers(kernel=self.test_kernel, noise=self.test_noise, weights=self.weights)

    def with_test_hypers(self, theta: TestHypers) -> "MetaModel":
        return MetaModel(
            meta_gps=self.meta_gps,
            weights=theta.weights,
            test_kernel=theta.kernel,
            test_noise=theta.noise,
        )


def inputs_key(X: np.ndarray) -> str:
    X = np.ascontiguousarray(X, dtype=float)
    digest = hashlib.sha256(str(X.shape).encode("utf-8"))
    digest.update(X.tobytes())
    return digest.hexdigest()


class PosteriorCache(BaseModel):
    """Meta-task posterior means and covariances at the current test inputs."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    key: str = Field(..., description="Content hash of the test inputs")
    inputs: np.ndarray = Field(..., description="Test inputs the cache was built for")
    means: np.ndarray = Field(..., description="M x N_t posterior means")
    covs: np.ndarray = Field(..., description="M x N_t x N_t posterior covariances")

    @classmethod
    def build(cls, model: MetaModel, X: np.ndarray) -> "PosteriorCache":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != model.dim:
            raise InvalidArgumentError(f"Inputs have {X.shape[1]} columns, model expects {model.dim}")
        n = X.shape[0]
        means = np.zeros((model.num_meta, n))
        covs = np.zeros((model.num_meta, n, n))
        for m, gp in enumerate(model.meta_gps):
            means[m], covs[m] = gp.predict(X)
        return cls(key=inputs_key(X), inputs=X.copy(), means=means, covs=covs)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def check(self, X: np.ndarray) -> None:
        if inputs_key(np.atleast_2d(X)) != self.key:
            raise StaleCacheError(
                f"Posterior cache built for {self.n} inputs does not match the {np.atleast_2d(X).shape[0]} queried"
            )
