from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats


class HyperPrior(BaseModel):
    """Prior over one positive hyperparameter plus its constraint box.

    ``gamma`` uses the shape-rate convention (``a`` = shape, ``b`` = rate),
    ``lognormal`` places ``N(a, b)`` on the log of the parameter (``b`` is the
    standard deviation) and ``flat`` has density one inside the box.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["gamma", "lognormal", "flat"] = Field(..., description="Prior family")
    a: float = Field(default=1.0, description="Gamma shape or log-normal mean")
    b: float = Field(default=1.0, description="Gamma rate or log-normal stddev")
    lower: float = Field(..., gt=0.0, description="Lower constraint")
    upper: float = Field(..., gt=0.0, description="Upper constraint")

    @model_validator(mode="after")
    def validate_parameters(self):
        if self.kind == "gamma" and (self.a <= 0 or self.b <= 0):
            raise ValueError("Gamma shape and rate must be strictly positive")
        if self.kind == "lognormal" and self.b <= 0:
            raise ValueError("Log-normal stddev must be strictly positive")
        if self.lower >= self.upper:
            raise ValueError(f"Empty constraint box [{self.lower}, {self.upper}]")
        return self

    @classmethod
    def gamma(cls, shape: float, rate: float, lower: float, upper: float) -> "HyperPrior":
        return cls(kind="gamma", a=shape, b=rate, lower=lower, upper=upper)

    @classmethod
    def lognormal(cls, mean: float, stddev: float, lower: float, upper: float) -> "HyperPrior":
        return cls(kind="lognormal", a=mean, b=stddev, lower=lower, upper=upper)

    @classmethod
    def flat(cls, lower: float, upper: float) -> "HyperPrior":
        return cls(kind="flat", lower=lower, upper=upper)

    @property
    def distribution(self):
        if self.kind == "gamma":
            return stats.gamma(a=self.a, scale=1.0 / self.b)
        if self.kind == "lognormal":
            return stats.lognorm(s=self.b, scale=np.exp(self.a))
        return None

    @property
    def log_bounds(self) -> tuple[float, float]:
        return float(np.log(self.lower)), float(np.log(self.upper))

    def contains(self, value: np.ndarray | float) -> bool:
        value = np.asarray(value, dtype=float)
        return bool(np.all((value >= self.lower) & (value <= self.upper)))

    def clip(self, value: np.ndarray | float) -> np.ndarray:
        return np.clip(value, self.lower, self.upper)

    def log_density(self, value: np.ndarray | float) -> float:
        """Summed log-density of one or more parameter values."""
        if self.kind == "flat":
            return 0.0
        return float(np.sum(self.distribution.logpdf(value)))

    def log_density_grad(self, value: np.ndarray | float) -> np.ndarray:
        """Derivative of the log-density with respect to ``log(value)``."""
        value = np.asarray(value, dtype=float)
        if self.kind == "gamma":
            return (self.a - 1.0) - self.b * value
        if self.kind == "lognormal":
            return -1.0 - (np.log(value) - self.a) / self.b**2
        return np.zeros_like(value)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray | float:
        if self.kind == "flat":
            lo, hi = self.log_bounds
            draw = np.exp(rng.uniform(lo, hi, size=size))
        else:
            draw = self.distribution.rvs(size=size, random_state=rng)
        return self.clip(draw)

    def median(self) -> float:
        if self.kind == "flat":
            return float(np.sqrt(self.lower * self.upper))
        return float(self.clip(self.distribution.median()))


class GPPriors(BaseModel):
    """Hyperpriors for one SE-ARD task kernel and its noise."""

    model_config = ConfigDict(frozen=True)

    lengthscale: HyperPrior
    outputscale: HyperPrior
    noise: HyperPrior


def default_priors() -> GPPriors:
    return GPPriors(
        lengthscale=HyperPrior.gamma(3.0, 6.0, 1e-4, 1e2),
        outputscale=HyperPrior.gamma(2.0, 0.15, 1e-4, 1e2),
        noise=HyperPrior.lognormal(-8.0, 2.0, 1e-8, 1e-2),
    )


def residual_kernel_priors() -> GPPriors:
    # jointly normalized test outputs are not standardized, hence broader priors
    return GPPriors(
        lengthscale=HyperPrior.lognormal(0.5, 1.5, 1e-4, 1e2),
        outputscale=HyperPrior.lognormal(-2.0, 3.0, 1e-4, 1e2),
        noise=HyperPrior.lognormal(-8.0, 2.0, 1e-8, 1e-2),
    )


def weight_prior() -> HyperPrior:
    return HyperPrior.gamma(1.0, 1.0, 1e-6, 1e2)
