"""ScaML-GP: a test-task prior assembled from independently fitted meta-task GPs.

Meta-task GPs are fitted once on their own data. Their posteriors at the test
inputs are cached, after which every evaluation of the test-task likelihood
costs O(M N_t^2 + N_t^3) and never touches the meta-task data again.
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from loguru import logger
from scipy import linalg

from scaml_gp.core.kernels import kernel_matrix, kernel_matrix_grads
from scaml_gp.core.linalg import clamp_variances, cholesky_with_jitter, gaussian_log_density, symmetrize
from scaml_gp.core.optimize import multistart_maximize
from scaml_gp.core.priors import GPPriors, HyperPrior
from scaml_gp.core.regression import (
    FittedGP,
    fit_map,
    log_bounds,
    prior_median_hypers,
    sample_initial_points,
)
from scaml_gp.core.schemas import DataSet, KernelParams, NoiseParams
from scaml_gp.errors import InvalidArgumentError, OptimizationError, ScamlError
from scaml_gp.scaml.schemas import MetaModel, PosteriorCache, TaskWeights, TestHypers
from scaml_gp.settings import SETTINGS


def task_stream(data: DataSet, base_seed: int) -> np.random.Generator:
    """Random stream for one meta-task, keyed by the task's content."""
    digest = hashlib.sha256(np.ascontiguousarray(data.inputs).tobytes())
    digest.update(np.ascontiguousarray(data.outputs).tobytes())
    content = int.from_bytes(digest.digest()[:8], "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([base_seed, content])))


def fit_meta_tasks(
    meta_data: list[DataSet],
    priors: GPPriors | None = None,
    rng: np.random.Generator | None = None,
    restarts: int | None = None,
    workers: int | None = None,
) -> list[FittedGP]:
    """MAP-fit one zero-mean GP per meta-task, each on its own data only."""
    rng = np.random.default_rng() if rng is None else rng
    workers = SETTINGS.scaml.meta_fit_workers if workers is None else workers
    base_seed = int(rng.integers(0, 2**63 - 1))
    for m, data in enumerate(meta_data, start=1):
        if data.n == 0:
            raise InvalidArgumentError(f"Meta-task {m} has no observations")

    def fit_one(item: tuple[int, DataSet]) -> FittedGP:
        m, data = item
        try:
            return fit_map(data, priors, restarts=restarts, rng=task_stream(data, base_seed))
        except ScamlError as e:
            diagnostics = getattr(e, "diagnostics", [])
            raise OptimizationError(f"Meta-task {m}: {e}", diagnostics) from e

    items = list(enumerate(meta_data, start=1))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(fit_one, items))
    else:
        fitted = [fit_one(item) for item in items]
    logger.info(f"Fitted {len(fitted)} meta-task GPs")
    return fitted


def build_meta_model(
    meta_gps: list[FittedGP],
    dim: int,
    theta: TestHypers | None = None,
    priors: GPPriors | None = None,
) -> MetaModel:
    """Meta-model with given test hyperparameters, or prior medians and unit weights."""
    if theta is None:
        kernel, noise = prior_median_hypers(priors or SETTINGS.scaml.residual_priors, dim)
        theta = TestHypers(kernel=kernel, noise=noise, weights=TaskWeights.ones(len(meta_gps)))
    return MetaModel(
        meta_gps=meta_gps,
        weights=theta.weights,
        test_kernel=theta.kernel,
        test_noise=theta.noise,
    )


def _resolve_cache(model: MetaModel, cache: PosteriorCache | None, X: np.ndarray) -> PosteriorCache:
    if cache is None:
        return PosteriorCache.build(model, X)
    cache.check(X)
    return cache


def _prior_moments(model: MetaModel, cache: PosteriorCache) -> tuple[np.ndarray, np.ndarray]:
    w = model.weights.w
    mean = w @ cache.means if model.num_meta else np.zeros(cache.n)
    cov = kernel_matrix(cache.inputs, cache.inputs, model.test_kernel)
    if model.num_meta:
        cov = cov + np.einsum("m,mij->ij", w**2, cache.covs)
    return mean, cov


def test_prior(
    model: MetaModel, cache: PosteriorCache | None, Xq: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Test-task prior conditioned on the meta-data: weighted meta posteriors plus k_t."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    return _prior_moments(model, _resolve_cache(model, cache, Xq))


def prior_variance_contributions(
    model: MetaModel, cache: PosteriorCache | None, Xq: np.ndarray
) -> np.ndarray:
    """Per-source split of the prior variance; row 0 is k_t, row m is meta-task m."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    cache = _resolve_cache(model, cache, Xq)
    rows = [np.full(cache.n, model.test_kernel.outputscale)]
    for m in range(model.num_meta):
        rows.append(model.weights.w[m] ** 2 * np.diag(cache.covs[m]))
    return np.array(rows)


def test_task_log_likelihood(
    theta: TestHypers, model: MetaModel, cache: PosteriorCache, test_data: DataSet
) -> float:
    if test_data.n < 1:
        raise InvalidArgumentError("The test-task likelihood needs at least one observation")
    cache.check(test_data.inputs)
    model = model.with_test_hypers(theta)
    mean, cov = _prior_moments(model, cache)
    cov = cov + theta.noise.noise_variance * np.eye(test_data.n)
    return gaussian_log_density(test_data.outputs - mean, cov).value


def _unpack_theta(vector: np.ndarray, dim: int) -> TestHypers:
    return TestHypers(
        kernel=KernelParams.from_log(vector[: dim + 1]),
        noise=NoiseParams.from_log(vector[dim + 1]),
        weights=TaskWeights(w=np.exp(vector[dim + 2 :])),
    )


def _test_objective_and_grad(
    vector: np.ndarray,
    model: MetaModel,
    cache: PosteriorCache,
    test_data: DataSet,
    priors: GPPriors,
    weight_prior: HyperPrior,
) -> tuple[float, np.ndarray]:
    theta = _unpack_theta(vector, model.dim)
    w = theta.weights.w
    X, n = test_data.inputs, test_data.n
    K_t, dK_t = kernel_matrix_grads(X, theta.kernel)
    mean = w @ cache.means if w.size else np.zeros(n)
    cov = K_t + theta.noise.noise_variance * np.eye(n)
    if w.size:
        cov = cov + np.einsum("m,mij->ij", w**2, cache.covs)
    terms = gaussian_log_density(test_data.outputs - mean, cov)
    W = terms.trace_weights()

    grad = [0.5 * np.sum(W * d) for d in dK_t]
    grad.append(0.5 * theta.noise.noise_variance * np.trace(W))
    weight_grad = w * (cache.means @ terms.alpha) + w**2 * np.einsum("ij,mij->m", W, cache.covs)

    value = (
        terms.value
        + priors.lengthscale.log_density(theta.kernel.lengthscales)
        + priors.outputscale.log_density(theta.kernel.outputscale)
        + priors.noise.log_density(theta.noise.noise_variance)
        + weight_prior.log_density(w)
    )
    prior_grad = np.concatenate(
        [
            priors.lengthscale.log_density_grad(theta.kernel.lengthscales),
            [priors.outputscale.log_density_grad(theta.kernel.outputscale)],
            [priors.noise.log_density_grad(theta.noise.noise_variance)],
            weight_prior.log_density_grad(w),
        ]
    )
    return value, np.concatenate([grad, weight_grad]) + prior_grad


def fit_test_hypers(
    model: MetaModel,
    cache: PosteriorCache,
    test_data: DataSet,
    priors: GPPriors | None = None,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    weight_prior: HyperPrior | None = None,
    warm_start: TestHypers | None = None,
) -> TestHypers:
    """MAP-fit k_t, the test noise and the task weights; meta-task GPs stay fixed."""
    priors = SETTINGS.scaml.residual_priors if priors is None else priors
    weight_prior = SETTINGS.scaml.weight_prior if weight_prior is None else weight_prior
    restarts = SETTINGS.scaml.restarts if restarts is None else restarts
    rng = np.random.default_rng() if rng is None else rng
    if restarts < 1:
        raise InvalidArgumentError(f"restarts must be >= 1, got {restarts}")

    if test_data.n == 0:
        kernel, noise = prior_median_hypers(priors, model.dim)
        return TestHypers(kernel=kernel, noise=noise, weights=TaskWeights.ones(model.num_meta))

    cache.check(test_data.inputs)
    kernel_points = sample_initial_points(priors, model.dim, restarts, rng)
    weight_points = np.log(
        np.reshape(weight_prior.sample(rng, size=restarts * model.num_meta), (restarts, model.num_meta))
    )
    initial = np.hstack([kernel_points, weight_points])
    if warm_start is not None:
        initial[0] = np.concatenate(
            [
                warm_start.kernel.to_log(),
                [np.log(warm_start.noise.noise_variance)],
                np.log(np.clip(warm_start.weights.w, weight_prior.lower, weight_prior.upper)),
            ]
        )
    bounds = log_bounds(priors, model.dim) + [weight_prior.log_bounds] * model.num_meta

    result = multistart_maximize(
        lambda v: _test_objective_and_grad(v, model, cache, test_data, priors, weight_prior),
        initial,
        bounds,
        max_iterations=SETTINGS.gp.max_iterations,
        ftol=SETTINGS.gp.ftol,
    )
    theta = _unpack_theta(result.x, model.dim)
    logger.debug(
        f"Test-task fit on {test_data.n} points: weights={np.round(theta.weights.w, 4)}, "
        f"outputscale={theta.kernel.outputscale:.4g}, objective={result.value:.4f}"
    )
    return theta


class ScaMLPosterior:
    """Test-task posterior: the meta-informed prior conditioned on the test data."""

    def __init__(self, model: MetaModel, cache: PosteriorCache, test_data: DataSet):
        self.model = model
        self.test_data = test_data
        X_t = test_data.inputs
        cache.check(X_t)
        self._meta_factors = []
        for gp in model.meta_gps:
            _, V_t = gp.cross_terms(X_t)
            self._meta_factors.append(V_t)
        mean, cov = _prior_moments(model, cache)
        self.chol, self.jitter = cholesky_with_jitter(
            cov + model.test_noise.noise_variance * np.eye(test_data.n)
        )
        residual = test_data.outputs - mean
        self.alpha = linalg.cho_solve((self.chol, True), residual) if test_data.n else np.zeros(0)

    def _prior_blocks(self, Xq: np.ndarray, full_cov: bool):
        model, X_t = self.model, self.test_data.inputs
        mean_q = np.zeros(Xq.shape[0])
        cross = kernel_matrix(Xq, X_t, model.test_kernel)
        if full_cov:
            qq = kernel_matrix(Xq, Xq, model.test_kernel)
        else:
            qq = np.full(Xq.shape[0], model.test_kernel.outputscale)
        for w, gp, V_t in zip(model.weights.w, model.meta_gps, self._meta_factors):
            Kq, Vq = gp.cross_terms(Xq)
            mean_q += w * (gp.prior_mean(Xq) + Kq @ gp.alpha)
            cross += w**2 * (kernel_matrix(Xq, X_t, gp.kernel) - Vq.T @ V_t)
            if full_cov:
                qq += w**2 * (kernel_matrix(Xq, Xq, gp.kernel) - Vq.T @ Vq)
            else:
                qq += w**2 * (gp.kernel.outputscale - np.sum(Vq**2, axis=0))
        return mean_q, cross, qq

    def _check(self, Xq: np.ndarray) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.model.dim:
            raise InvalidArgumentError(f"Query has {Xq.shape[1]} columns, model expects {self.model.dim}")
        return Xq

    def predict(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xq = self._check(Xq)
        mean_q, cross, qq = self._prior_blocks(Xq, full_cov=True)
        if self.test_data.n == 0:
            V = np.zeros((0, Xq.shape[0]))
        else:
            V = linalg.solve_triangular(self.chol, cross.T, lower=True)
        cov = symmetrize(qq - V.T @ V)
        np.fill_diagonal(cov, clamp_variances(np.diag(cov).copy()))
        return mean_q + cross @ self.alpha, cov

    def mean_and_variance(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xq = self._check(Xq)
        mean_q, cross, qq = self._prior_blocks(Xq, full_cov=False)
        if self.test_data.n == 0:
            return mean_q, clamp_variances(qq)
        V = linalg.solve_triangular(self.chol, cross.T, lower=True)
        return mean_q + cross @ self.alpha, clamp_variances(qq - np.sum(V**2, axis=0))


def test_posterior(
    model: MetaModel,
    cache: PosteriorCache | None,
    theta: TestHypers,
    test_data: DataSet,
    Xq: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    model = model.with_test_hypers(theta)
    if test_data.n == 0:
        return test_prior(model, None, Xq)
    cache = _resolve_cache(model, cache, test_data.inputs)
    return ScaMLPosterior(model, cache, test_data).predict(Xq)
