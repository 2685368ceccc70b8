from typing import Callable

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from scaml_gp.core.kernels import kernel_matrix, kernel_matrix_grads
from scaml_gp.core.linalg import (
    GaussianTerms,
    clamp_variances,
    cholesky_with_jitter,
    gaussian_log_density,
    symmetrize,
)
from scaml_gp.core.optimize import multistart_maximize
from scaml_gp.core.priors import GPPriors
from scaml_gp.core.schemas import DataSet, FitDiagnostics, KernelParams, NoiseParams
from scaml_gp.errors import InvalidArgumentError
from scaml_gp.settings import SETTINGS

PriorMean = Callable[[np.ndarray], np.ndarray]


def zero_mean(X: np.ndarray) -> np.ndarray:
    return np.zeros(np.atleast_2d(X).shape[0])


def _check_query(Xq: np.ndarray, dim: int) -> np.ndarray:
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != dim:
        raise InvalidArgumentError(f"Query has {Xq.shape[1]} columns, model expects {dim}")
    return Xq


class FittedGP(BaseModel):
    """One task's data, hyperparameters and cached Cholesky solve (immutable)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: DataSet
    kernel: KernelParams
    noise: NoiseParams
    prior_mean: PriorMean = Field(default=zero_mean, description="Query-evaluable mean")
    chol: np.ndarray = Field(..., description="Lower Cholesky factor of K + noise I")
    alpha: np.ndarray = Field(..., description="(K + noise I)^-1 (y - m(X))")
    jitter: float = 0.0
    diagnostics: list[FitDiagnostics] = Field(default_factory=list)

    @classmethod
    def condition(
        cls,
        data: DataSet,
        kernel: KernelParams,
        noise: NoiseParams,
        prior_mean: PriorMean = zero_mean,
        diagnostics: list[FitDiagnostics] | None = None,
    ) -> "FittedGP":
        if data.dim != kernel.dim:
            raise InvalidArgumentError(
                f"Data has {data.dim} dimensions, kernel has {kernel.dim}"
            )
        K = kernel_matrix(data.inputs, data.inputs, kernel)
        chol, jitter = cholesky_with_jitter(K + noise.noise_variance * np.eye(data.n))
        residual = data.outputs - prior_mean(data.inputs)
        alpha = linalg.cho_solve((chol, True), residual) if data.n else np.zeros(0)
        return cls(
            data=data,
            kernel=kernel,
            noise=noise,
            prior_mean=prior_mean,
            chol=chol,
            alpha=alpha,
            jitter=jitter,
            diagnostics=diagnostics or [],
        )

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def cross_terms(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Kq = kernel_matrix(Xq, self.data.inputs, self.kernel)
        if self.data.n == 0 or Xq.shape[0] == 0:
            return Kq, np.zeros((self.data.n, Xq.shape[0]))
        return Kq, linalg.solve_triangular(self.chol, Kq.T, lower=True)

    def predict(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xq = _check_query(Xq, self.dim)
        Kq, V = self.cross_terms(Xq)
        mean = self.prior_mean(Xq) + Kq @ self.alpha
        cov = symmetrize(kernel_matrix(Xq, Xq, self.kernel) - V.T @ V)
        np.fill_diagonal(cov, clamp_variances(np.diag(cov).copy()))
        return mean, cov

    def mean_and_variance(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xq = _check_query(Xq, self.dim)
        Kq, V = self.cross_terms(Xq)
        mean = self.prior_mean(Xq) + Kq @ self.alpha
        variance = self.kernel.outputscale - np.sum(V**2, axis=0)
        return mean, clamp_variances(variance)


def gp_posterior(gp: FittedGP, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean vector and covariance matrix at the query rows."""
    return gp.predict(Xq)


def posterior_mean_variance(gp: FittedGP, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return gp.mean_and_variance(Xq)


def _lml_terms(
    params: KernelParams, noise: NoiseParams, data: DataSet, prior_mean: PriorMean
) -> GaussianTerms:
    if data.n < 1:
        raise InvalidArgumentError("The marginal likelihood needs at least one observation")
    if data.dim != params.dim:
        raise InvalidArgumentError(f"Data has {data.dim} dimensions, kernel has {params.dim}")
    K = kernel_matrix(data.inputs, data.inputs, params)
    residual = data.outputs - prior_mean(data.inputs)
    return gaussian_log_density(residual, K + noise.noise_variance * np.eye(data.n))


def log_marginal_likelihood(
    params: KernelParams,
    noise: NoiseParams,
    data: DataSet,
    prior_mean: PriorMean = zero_mean,
) -> float:
    return _lml_terms(params, noise, data, prior_mean).value


def _lml_with_gradient(
    params: KernelParams, noise: NoiseParams, data: DataSet, prior_mean: PriorMean
) -> tuple[float, np.ndarray]:
    terms = _lml_terms(params, noise, data, prior_mean)
    W = terms.trace_weights()
    _, dK = kernel_matrix_grads(data.inputs, params)
    grad = [0.5 * np.sum(W * d) for d in dK]
    grad.append(0.5 * noise.noise_variance * np.trace(W))
    return terms.value, np.array(grad)


def lml_gradient(
    params: KernelParams,
    noise: NoiseParams,
    data: DataSet,
    prior_mean: PriorMean = zero_mean,
) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. the log-hyperparameters.

    Ordered as ``[log lengthscale_1..d, log outputscale, log noise_variance]``.
    """
    return _lml_with_gradient(params, noise, data, prior_mean)[1]


def _check_boxes(params: KernelParams, noise: NoiseParams, priors: GPPriors) -> None:
    checks = (
        ("lengthscales", params.lengthscales, priors.lengthscale),
        ("outputscale", params.outputscale, priors.outputscale),
        ("noise_variance", noise.noise_variance, priors.noise),
    )
    for name, value, prior in checks:
        if not prior.contains(value):
            raise InvalidArgumentError(
                f"{name}={value} outside [{prior.lower}, {prior.upper}]"
            )


def log_hyperprior(params: KernelParams, noise: NoiseParams, priors: GPPriors) -> float:
    return (
        priors.lengthscale.log_density(params.lengthscales)
        + priors.outputscale.log_density(params.outputscale)
        + priors.noise.log_density(noise.noise_variance)
    )


def log_map_objective(
    params: KernelParams,
    noise: NoiseParams,
    data: DataSet,
    priors: GPPriors,
    prior_mean: PriorMean = zero_mean,
) -> float:
    _check_boxes(params, noise, priors)
    return log_marginal_likelihood(params, noise, data, prior_mean) + log_hyperprior(
        params, noise, priors
    )


def _unpack(theta: np.ndarray) -> tuple[KernelParams, NoiseParams]:
    return KernelParams.from_log(theta[:-1]), NoiseParams.from_log(theta[-1])


def _map_objective_and_grad(
    theta: np.ndarray, data: DataSet, priors: GPPriors, prior_mean: PriorMean
) -> tuple[float, np.ndarray]:
    params, noise = _unpack(theta)
    value, grad = _lml_with_gradient(params, noise, data, prior_mean)
    value += log_hyperprior(params, noise, priors)
    prior_grad = np.concatenate(
        [
            priors.lengthscale.log_density_grad(params.lengthscales),
            [priors.outputscale.log_density_grad(params.outputscale)],
            [priors.noise.log_density_grad(noise.noise_variance)],
        ]
    )
    return value, grad + prior_grad


def sample_initial_points(
    priors: GPPriors, dim: int, restarts: int, rng: np.random.Generator
) -> np.ndarray:
    """Log-space initial guesses drawn from the hyperpriors, one row per restart."""
    rows = []
    for _ in range(restarts):
        rows.append(
            np.log(
                np.concatenate(
                    [
                        np.atleast_1d(priors.lengthscale.sample(rng, size=dim)),
                        [priors.outputscale.sample(rng)],
                        [priors.noise.sample(rng)],
                    ]
                )
            )
        )
    return np.array(rows)


def log_bounds(priors: GPPriors, dim: int) -> list[tuple[float, float]]:
    return [priors.lengthscale.log_bounds] * dim + [
        priors.outputscale.log_bounds,
        priors.noise.log_bounds,
    ]


def prior_median_hypers(priors: GPPriors, dim: int) -> tuple[KernelParams, NoiseParams]:
    return (
        KernelParams(
            lengthscales=np.full(dim, priors.lengthscale.median()),
            outputscale=priors.outputscale.median(),
        ),
        NoiseParams(noise_variance=priors.noise.median()),
    )


def fit_map(
    data: DataSet,
    priors: GPPriors | None = None,
    prior_mean: PriorMean = zero_mean,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
) -> FittedGP:
    """MAP-fit SE-ARD hyperparameters with multi-restart L-BFGS-B in log-space."""
    priors = SETTINGS.gp.priors if priors is None else priors
    restarts = SETTINGS.gp.restarts if restarts is None else restarts
    if restarts < 1:
        raise InvalidArgumentError(f"restarts must be >= 1, got {restarts}")
    rng = np.random.default_rng() if rng is None else rng

    if data.n == 0:
        params, noise = prior_median_hypers(priors, data.dim)
        logger.debug("Empty dataset, using prior-median hyperparameters")
        return FittedGP.condition(data, params, noise, prior_mean)

    initial = sample_initial_points(priors, data.dim, restarts, rng)
    result = multistart_maximize(
        lambda theta: _map_objective_and_grad(theta, data, priors, prior_mean),
        initial,
        log_bounds(priors, data.dim),
        max_iterations=SETTINGS.gp.max_iterations,
        ftol=SETTINGS.gp.ftol,
    )
    params, noise = _unpack(result.x)
    logger.debug(
        f"MAP fit on {data.n} points: lengthscales={np.round(params.lengthscales, 4)}, "
        f"outputscale={params.outputscale:.4g}, noise={noise.noise_variance:.3g}, "
        f"objective={result.value:.4f}"
    )
    return FittedGP.condition(data, params, noise, prior_mean, result.diagnostics)
