import numpy as np
from loguru import logger

from scaml_gp.core.priors import GPPriors, HyperPrior
from scaml_gp.core.regression import FittedGP, fit_map
from scaml_gp.core.schemas import DataSet
from scaml_gp.harness.normalization import normalize_outputs
from scaml_gp.harness.schemas import NormalizationState
from scaml_gp.optimization.schemas import PosteriorEvaluator
from scaml_gp.scaml import model as scaml_model
from scaml_gp.scaml.schemas import PosteriorCache, TestHypers
from scaml_gp.settings import SETTINGS


def _unit_scale_if_degenerate(
    outputs: np.ndarray, state: NormalizationState
) -> tuple[np.ndarray, NormalizationState]:
    # a floored std would shrink reported variances to ~std_floor**2
    if not state.floored:
        return outputs, state
    state = state.model_copy(update={"std": 1.0})
    return state.normalize(outputs), state


class DenormalizedPosterior:
    """Reports a normalised-unit posterior in the raw output units."""

    def __init__(self, posterior: PosteriorEvaluator, state: NormalizationState):
        self.posterior = posterior
        self.state = state

    def mean_and_variance(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean, variance = self.posterior.mean_and_variance(Xq)
        return self.state.denormalize(mean), self.state.denormalize_variance(variance)


class PlainGPBackend:
    """Single-task GP-UCB baseline; ignores meta-data entirely."""

    name = "gpbo"

    def __init__(self, priors: GPPriors | None = None, restarts: int | None = None):
        self.priors = priors
        self.restarts = restarts

    def fit(self, test_data: DataSet, rng: np.random.Generator) -> PosteriorEvaluator:
        if test_data.n == 0:
            state = NormalizationState(mode="per-task")
            normalized = test_data
        else:
            outputs, state = normalize_outputs(test_data.outputs, "per-task")
            outputs, state = _unit_scale_if_degenerate(test_data.outputs, state)
            normalized = test_data.with_outputs(outputs)
        gp: FittedGP = fit_map(normalized, self.priors, restarts=self.restarts, rng=rng)
        return DenormalizedPosterior(gp, state)


class ScaMLBackend:
    """ScaML-GP: meta-task GPs fitted once, test hyperparameters re-fitted every call.

    ``meta_outputs`` are the raw meta-task outputs; the test task is normalised
    jointly against them while the meta GPs stay in their per-task units.
    """

    name = "scaml"

    def __init__(
        self,
        meta_gps: list[FittedGP],
        meta_outputs: list[np.ndarray],
        dim: int,
        priors: GPPriors | None = None,
        weight_prior: HyperPrior | None = None,
        restarts: int | None = None,
        warm_start: bool | None = None,
    ):
        self.model = scaml_model.build_meta_model(meta_gps, dim, priors=priors)
        self.meta_outputs = meta_outputs
        self.priors = priors
        self.weight_prior = weight_prior
        self.restarts = restarts
        self.warm_start = SETTINGS.scaml.warm_start_weights if warm_start is None else warm_start
        self.theta: TestHypers | None = None

    def fit(self, test_data: DataSet, rng: np.random.Generator) -> PosteriorEvaluator:
        if test_data.n == 0 and not self.meta_outputs:
            state = NormalizationState(mode="joint-test")
            normalized = test_data
        else:
            outputs, state = normalize_outputs(test_data.outputs, "joint-test", self.meta_outputs)
            outputs, state = _unit_scale_if_degenerate(test_data.outputs, state)
            normalized = test_data.with_outputs(outputs)

        cache = PosteriorCache.build(self.model, normalized.inputs)
        self.theta = scaml_model.fit_test_hypers(
            self.model,
            cache,
            normalized,
            priors=self.priors,
            restarts=self.restarts,
            rng=rng,
            weight_prior=self.weight_prior,
            warm_start=self.theta if self.warm_start else None,
        )
        logger.debug(f"ScaML weights after {test_data.n} test points: {np.round(self.theta.weights.w, 4)}")
        posterior = scaml_model.ScaMLPosterior(
            self.model.with_test_hypers(self.theta), cache, normalized
        )
        return DenormalizedPosterior(posterior, state)
