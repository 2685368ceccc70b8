from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from scaml_gp.core.kernels import kernel_matrix, kernel_matrix_grads, se_ard
from scaml_gp.core.linalg import LOG_2PI, clamp_variances, cholesky_with_jitter
from scaml_gp.core.optimize import multistart_maximize
from scaml_gp.core.priors import HyperPrior, default_priors, residual_kernel_priors
from scaml_gp.core.regression import (
    FittedGP,
    fit_map,
    gp_posterior,
    lml_gradient,
    log_map_objective,
    log_marginal_likelihood,
    posterior_mean_variance,
    prior_median_hypers,
)
from scaml_gp.core.schemas import DataSet, KernelParams, NoiseParams
from scaml_gp.errors import InvalidArgumentError, NotPositiveDefiniteError, OptimizationError


def _kernel(lengthscales, outputscale: float = 1.0) -> KernelParams:
    return KernelParams(lengthscales=lengthscales, outputscale=outputscale)


def _noise(variance: float = 1e-4) -> NoiseParams:
    return NoiseParams(noise_variance=variance)


def _sine_data(n: int = 12, seed: int = 0) -> DataSet:
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 1))
    return DataSet(inputs=X, outputs=np.sin(6.0 * X[:, 0]))


def test_se_ard_known_values():
    assert se_ard(np.array([0.0]), np.array([1.0]), _kernel([1.0])) == pytest.approx(np.exp(-0.5))
    assert se_ard(np.zeros(2), np.ones(2), _kernel([1.0, 1.0])) == pytest.approx(np.exp(-1.0))
    assert se_ard(np.ones(2), np.ones(2), _kernel([0.3, 2.0], 2.5)) == pytest.approx(2.5)


def test_se_ard_rejects_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        se_ard(np.zeros(3), np.zeros(3), _kernel([1.0, 1.0]))


def test_kernel_matrix_matches_pointwise_kernel():
    rng = np.random.default_rng(1)
    X, X2 = rng.uniform(size=(5, 3)), rng.uniform(size=(4, 3))
    params = _kernel([0.3, 0.7, 1.5], 1.7)
    expected = np.array([[se_ard(a, b, params) for b in X2] for a in X])
    assert_allclose(kernel_matrix(X, X2, params), expected, rtol=1e-12)
    assert kernel_matrix(np.zeros((0, 3)), X2, params).shape == (0, 4)


def test_kernel_matrix_grads_match_finite_differences():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(6, 2))
    params = _kernel([0.4, 0.9], 1.3)
    _, grads = kernel_matrix_grads(X, params)
    step = 1e-6
    for i in range(3):
        up, down = params.to_log(), params.to_log()
        up[i] += step
        down[i] -= step
        numeric = (
            kernel_matrix(X, X, KernelParams.from_log(up)) - kernel_matrix(X, X, KernelParams.from_log(down))
        ) / (2 * step)
        assert_allclose(grads[i], numeric, atol=1e-7)


def test_hyperparameters_outside_their_boxes_are_rejected():
    with pytest.raises(ValidationError):
        _kernel([1e-5])
    with pytest.raises(ValidationError):
        _kernel([1.0], 1e3)
    with pytest.raises(ValidationError):
        _noise(0.1)


def test_dataset_requires_matching_lengths():
    with pytest.raises(ValidationError):
        DataSet(inputs=np.zeros((3, 2)), outputs=np.zeros(2))
    data = DataSet.empty(2).append(np.array([0.1, 0.2]), 1.5)
    assert data.n == 1 and data.dim == 2
    assert data.outputs[0] == 1.5


def test_cholesky_of_a_known_matrix():
    L, jitter = cholesky_with_jitter(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert_allclose(L, [[2.0, 0.0], [1.0, 1.0]])
    assert jitter == 0.0


def test_cholesky_escalates_jitter_on_singular_matrix():
    L, jitter = cholesky_with_jitter(np.ones((2, 2)))
    assert jitter == 1e-10
    assert_allclose(L @ L.T, np.ones((2, 2)) + 1e-10 * np.eye(2), atol=1e-12)


def test_cholesky_of_indefinite_matrix_fails():
    with pytest.raises(NotPositiveDefiniteError) as excinfo:
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert excinfo.value.jitter == 1e-4


def test_cholesky_of_empty_matrix():
    L, jitter = cholesky_with_jitter(np.zeros((0, 0)))
    assert L.shape == (0, 0) and jitter == 0.0


def test_clamp_variances():
    assert_allclose(clamp_variances(np.array([1.0, -1e-12, 0.0])), [1.0, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        clamp_variances(np.array([1.0, -1e-3]))


def test_lml_single_point_unit_variance():
    data = DataSet(inputs=[[0.0]], outputs=[0.0])
    value = log_marginal_likelihood(_kernel([1.0], 0.99), _noise(0.01), data)
    assert value == pytest.approx(-0.5 * LOG_2PI, abs=1e-10)
    assert value == pytest.approx(-0.918939, abs=1e-6)


def test_lml_single_point_variance_four():
    data = DataSet(inputs=[[0.0]], outputs=[2.0])
    value = log_marginal_likelihood(_kernel([1.0], 3.99), _noise(0.01), data)
    assert value == pytest.approx(-0.5 - 0.5 * np.log(4.0) - 0.5 * LOG_2PI, abs=1e-10)
    assert value == pytest.approx(-2.11209, abs=1e-5)


def test_lml_needs_data():
    with pytest.raises(InvalidArgumentError):
        log_marginal_likelihood(_kernel([1.0]), _noise(), DataSet.empty(1))


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    data = DataSet(inputs=rng.uniform(size=(8, 2)), outputs=rng.standard_normal(8))
    params, noise = _kernel([0.3, 0.6], 1.2), _noise(1e-3)
    theta = np.append(params.to_log(), np.log(noise.noise_variance))

    def lml(v):
        return log_marginal_likelihood(KernelParams.from_log(v[:-1]), NoiseParams.from_log(v[-1]), data)

    step = 1e-5
    numeric = np.array(
        [(lml(theta + step * e) - lml(theta - step * e)) / (2 * step) for e in np.eye(theta.size)]
    )
    assert_allclose(lml_gradient(params, noise, data), numeric, rtol=1e-5, atol=1e-6)


def test_gamma_log_density():
    prior = HyperPrior.gamma(3.0, 6.0, 1e-4, 1e2)
    expected = 3 * np.log(6.0) - np.log(2.0) + 2 * np.log(0.5) - 3.0
    assert prior.log_density(0.5) == pytest.approx(expected)
    assert prior.log_density(0.5) == pytest.approx(0.29584, abs=1e-4)


@pytest.mark.parametrize(
    "prior",
    [
        HyperPrior.gamma(3.0, 6.0, 1e-4, 1e2),
        HyperPrior.lognormal(-2.0, 3.0, 1e-4, 1e2),
    ],
)
def test_log_density_grad_is_derivative_in_log_space(prior):
    log_value, step = np.log(0.7), 1e-6
    numeric = (
        prior.log_density(np.exp(log_value + step)) - prior.log_density(np.exp(log_value - step))
    ) / (2 * step)
    assert float(prior.log_density_grad(0.7)) == pytest.approx(numeric, abs=1e-6)


def test_default_prior_quantiles():
    lengthscale = default_priors().lengthscale.distribution
    assert lengthscale.ppf(0.05) == pytest.approx(0.14, abs=0.01)
    assert lengthscale.ppf(0.95) == pytest.approx(1.05, abs=0.01)
    residual = residual_kernel_priors().lengthscale.distribution
    assert residual.ppf(0.05) == pytest.approx(0.14, abs=0.01)
    assert residual.ppf(0.95) == pytest.approx(19.4, abs=0.2)


def test_prior_samples_stay_in_the_box():
    prior = HyperPrior.lognormal(-8.0, 2.0, 1e-8, 1e-2)
    draws = prior.sample(np.random.default_rng(4), size=10_000)
    assert prior.contains(draws)


def test_posterior_mean_variance_is_diagonal_of_full_posterior():
    data = _sine_data()
    gp = FittedGP.condition(data, _kernel([0.2], 1.0), _noise(1e-3))
    Xq = np.linspace(0, 1, 7)[:, None]
    mean, cov = gp_posterior(gp, Xq)
    mean2, var = posterior_mean_variance(gp, Xq)
    assert_allclose(mean, mean2, atol=1e-12)
    assert_allclose(np.diag(cov), var, atol=1e-10)
    assert np.all(var >= 0.0)
    assert_allclose(cov, cov.T)


def test_posterior_interpolates_nearly_noiseless_data():
    X = np.linspace(0.0, 1.0, 5)[:, None]
    data = DataSet(inputs=X, outputs=np.sin(6.0 * X[:, 0]))
    gp = FittedGP.condition(data, _kernel([0.1], 1.0), _noise(1e-6))
    mean, var = posterior_mean_variance(gp, data.inputs)
    assert_allclose(mean, data.outputs, atol=1e-4)
    assert np.all(var < 1e-4)


def test_empty_posterior_is_the_prior():
    params = _kernel([0.5], 2.0)
    gp = FittedGP.condition(DataSet.empty(1), params, _noise())
    Xq = np.array([[0.1], [0.4]])
    mean, cov = gp_posterior(gp, Xq)
    assert_allclose(mean, 0.0)
    assert_allclose(cov, kernel_matrix(Xq, Xq, params))


def test_prior_mean_is_used_away_from_data():
    data = DataSet(inputs=[[0.0]], outputs=[5.0])
    gp = FittedGP.condition(data, _kernel([0.01]), _noise(), prior_mean=lambda X: np.full(len(X), 5.0))
    mean, _ = posterior_mean_variance(gp, np.array([[0.9]]))
    assert mean[0] == pytest.approx(5.0)


def test_query_dimension_is_checked():
    gp = FittedGP.condition(_sine_data(), _kernel([0.2]), _noise())
    with pytest.raises(InvalidArgumentError):
        gp_posterior(gp, np.zeros((2, 3)))


def test_fit_map_with_no_data_uses_prior_medians():
    priors = default_priors()
    gp = fit_map(DataSet.empty(2), priors, rng=np.random.default_rng(0))
    kernel, noise = prior_median_hypers(priors, 2)
    assert_allclose(gp.kernel.lengthscales, kernel.lengthscales)
    assert gp.noise.noise_variance == noise.noise_variance


def test_fit_map_is_deterministic_and_in_bounds():
    data = _sine_data(15)
    first = fit_map(data, restarts=3, rng=np.random.default_rng(7))
    second = fit_map(data, restarts=3, rng=np.random.default_rng(7))
    assert_allclose(first.kernel.to_log(), second.kernel.to_log())
    assert first.noise == second.noise
    priors = default_priors()
    assert priors.lengthscale.contains(first.kernel.lengthscales)
    assert priors.noise.contains(first.noise.noise_variance)
    assert len(first.diagnostics) == 3


def test_fit_map_beats_its_initial_points():
    data = _sine_data(15)
    gp = fit_map(data, restarts=4, rng=np.random.default_rng(8))
    fitted = log_map_objective(gp.kernel, gp.noise, data, default_priors())
    for diagnostic in gp.diagnostics:
        assert diagnostic.initial_value is not None
        assert fitted >= diagnostic.initial_value - 1e-9


def test_fit_map_rejects_zero_restarts():
    with pytest.raises(InvalidArgumentError):
        fit_map(_sine_data(), restarts=0)


def test_multistart_maximize_finds_quadratic_optimum():
    def objective(x):
        return -float(np.sum((x - 0.3) ** 2)), -2.0 * (x - 0.3)

    result = multistart_maximize(objective, np.array([[1.0, -1.0], [0.0, 2.0]]), [(-3.0, 3.0)] * 2)
    assert_allclose(result.x, [0.3, 0.3], atol=1e-5)
    assert result.value == pytest.approx(0.0, abs=1e-9)
    assert len(result.diagnostics) == 2


def test_multistart_maximize_raises_when_every_restart_fails():
    def objective(x):
        raise NotPositiveDefiniteError("never", 1e-4)

    with pytest.raises(OptimizationError) as excinfo:
        multistart_maximize(objective, np.zeros((2, 1)), [(-1.0, 1.0)])
    assert len(excinfo.value.diagnostics) == 2
    assert not any(d.success for d in excinfo.value.diagnostics)


def _dense_posterior(data: DataSet, params: KernelParams, noise: float, Xq: np.ndarray):
    C_inv = np.linalg.inv(kernel_matrix(data.inputs, data.inputs, params) + noise * np.eye(data.n))
    Kq = kernel_matrix(Xq, data.inputs, params)
    mean = Kq @ C_inv @ data.outputs
    cov = kernel_matrix(Xq, Xq, params) - Kq @ C_inv @ Kq.T
    return mean, cov


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def test_posterior_and_lml_match_dense_inverse_formulas():
    rng = np.random.default_rng(30)
    data = DataSet(inputs=rng.uniform(size=(3, 2)), outputs=rng.standard_normal(3))
    params = _kernel([0.4, 0.9], 1.3)
    gp = FittedGP.condition(data, params, _noise(5e-3))
    Xq = rng.uniform(size=(4, 2))
    mean, cov = gp_posterior(gp, Xq)
    dense_mean, dense_cov = _dense_posterior(data, params, 5e-3, Xq)
    assert _relative_error(mean, dense_mean) <= 1e-10
    assert _relative_error(cov, dense_cov) <= 1e-10

    C = kernel_matrix(data.inputs, data.inputs, params) + 5e-3 * np.eye(3)
    dense_lml = (
        -0.5 * data.outputs @ np.linalg.inv(C) @ data.outputs
        - 0.5 * np.linalg.slogdet(C)[1]
        - 1.5 * LOG_2PI
    )
    assert log_marginal_likelihood(params, _noise(5e-3), data) == pytest.approx(dense_lml, abs=1e-10)


@pytest.mark.parametrize("n", [1, 7, 20])
def test_posterior_is_consistent_with_dense_conditioning(n):
    rng = np.random.default_rng(31 + n)
    data = DataSet(inputs=rng.uniform(size=(n, 2)), outputs=rng.standard_normal(n))
    params = _kernel([0.3, 0.6], 0.8)
    gp = FittedGP.condition(data, params, _noise(1e-2))
    Xq = rng.uniform(size=(6, 2))
    mean, cov = gp_posterior(gp, Xq)
    dense_mean, dense_cov = _dense_posterior(data, params, 1e-2, Xq)
    assert _relative_error(mean, dense_mean) <= 1e-10
    assert _relative_error(cov, dense_cov) <= 1e-10


def test_adding_a_point_never_increases_posterior_variance():
    rng = np.random.default_rng(40)
    X, y = rng.uniform(size=(8, 2)), rng.standard_normal(8)
    params = _kernel([0.25, 0.5], 1.5)
    Xq = rng.uniform(size=(30, 2))
    previous = posterior_mean_variance(FittedGP.condition(DataSet.empty(2), params, _noise()), Xq)[1]
    for n in range(1, 9):
        gp = FittedGP.condition(DataSet(inputs=X[:n], outputs=y[:n]), params, _noise())
        variance = posterior_mean_variance(gp, Xq)[1]
        assert np.all(variance <= previous + 1e-10)
        previous = variance


def test_kernel_matrix_is_positive_semidefinite():
    rng = np.random.default_rng(41)
    for _ in range(50):
        n, dim = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        X = rng.uniform(size=(n, dim))
        params = _kernel(rng.uniform(0.05, 2.0, size=dim), rng.uniform(0.1, 5.0))
        assert np.min(np.linalg.eigvalsh(kernel_matrix(X, X, params))) >= -1e-10


def test_fit_map_recovers_the_generating_lengthscale():
    rng = np.random.default_rng(42)
    X = rng.uniform(size=(40, 1))
    K = kernel_matrix(X, X, _kernel([0.3])) + 1e-8 * np.eye(40)
    y = np.linalg.cholesky(K) @ rng.standard_normal(40)
    gp = fit_map(DataSet(inputs=X, outputs=y), rng=np.random.default_rng(43))
    assert 0.15 <= gp.kernel.lengthscales[0] <= 0.6


def test_fit_map_on_zero_outputs_shrinks_the_outputscale():
    X = np.random.default_rng(44).uniform(size=(10, 2))
    gp = fit_map(DataSet(inputs=X, outputs=np.zeros(10)), rng=np.random.default_rng(45))
    assert gp.kernel.outputscale <= 1e-2


def test_map_gradient_vanishes_unless_a_box_is_active():
    rng = np.random.default_rng(46)
    X = rng.uniform(size=(15, 1))
    data = DataSet(inputs=X, outputs=np.sin(6.0 * X[:, 0]) + 0.05 * rng.standard_normal(15))
    priors = default_priors()
    gp = fit_map(data, priors, rng=np.random.default_rng(47))
    grad = lml_gradient(gp.kernel, gp.noise, data) + np.concatenate(
        [
            priors.lengthscale.log_density_grad(gp.kernel.lengthscales),
            [priors.outputscale.log_density_grad(gp.kernel.outputscale)],
            [priors.noise.log_density_grad(gp.noise.noise_variance)],
        ]
    )
    theta = np.concatenate([gp.kernel.to_log(), [np.log(gp.noise.noise_variance)]])
    bounds = [priors.lengthscale.log_bounds, priors.outputscale.log_bounds, priors.noise.log_bounds]
    for g, value, (lower, upper) in zip(grad, theta, bounds):
        at_bound = min(abs(value - lower), abs(value - upper)) <= 1e-6
        assert at_bound or abs(g) <= 1e-3


def test_lml_gradient_follows_a_dimension_swap():
    rng = np.random.default_rng(48)
    data = DataSet(inputs=rng.uniform(size=(6, 2)), outputs=rng.standard_normal(6))
    swapped = DataSet(inputs=data.inputs[:, ::-1], outputs=data.outputs)
    grad = lml_gradient(_kernel([0.3, 0.7], 1.2), _noise(1e-3), data)
    grad_swapped = lml_gradient(_kernel([0.7, 0.3], 1.2), _noise(1e-3), swapped)
    assert_allclose(grad_swapped, grad[[1, 0, 2, 3]], rtol=1e-10, atol=1e-12)


def test_lml_gradient_is_equal_for_symmetric_data():
    points = np.array([[0.1, 0.8], [0.4, 0.3], [0.6, 0.9]])
    X = np.vstack([points, points[:, ::-1]])
    data = DataSet(inputs=X, outputs=np.tile([0.5, -1.0, 0.2], 2))
    grad = lml_gradient(_kernel([0.4, 0.4]), _noise(1e-3), data)
    assert grad[0] == pytest.approx(grad[1], rel=1e-10)
