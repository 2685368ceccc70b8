from collections.abc import Iterable

import numpy as np
from loguru import logger
from scipy.optimize import minimize

from scaml_gp.core.linalg import clamp_variances
from scaml_gp.errors import ExhaustedDomainError
from scaml_gp.optimization.schemas import (
    AcquisitionConfig,
    ContinuousBox,
    DiscreteTable,
    PosteriorEvaluator,
)


def ucb(mean, variance, cfg: AcquisitionConfig):
    """Upper confidence bound ``mean + beta_sqrt * sqrt(variance)``; works elementwise."""
    variance = clamp_variances(np.asarray(variance, dtype=float))
    value = np.asarray(mean, dtype=float) + cfg.beta_sqrt * np.sqrt(variance)
    return float(value) if value.ndim == 0 else value


def _ucb_batch(evaluator: PosteriorEvaluator, X: np.ndarray, cfg: AcquisitionConfig) -> np.ndarray:
    mean, variance = evaluator.mean_and_variance(X)
    return ucb(mean, variance, cfg)


def maximize_acq_discrete(
    evaluator: PosteriorEvaluator,
    table: DiscreteTable,
    visited: Iterable[int],
    cfg: AcquisitionConfig,
) -> int:
    """Index of the unvisited row with the largest UCB; ties go to the lowest index."""
    visited = set(visited)
    unvisited = np.array([i for i in range(len(table)) if i not in visited], dtype=int)
    if unvisited.size == 0:
        raise ExhaustedDomainError(f"All {len(table)} candidate rows have been queried")
    scores = np.atleast_1d(_ucb_batch(evaluator, table.candidates[unvisited], cfg))
    return int(unvisited[int(np.argmax(scores))])


def maximize_acq_continuous(
    evaluator: PosteriorEvaluator,
    box: ContinuousBox,
    cfg: AcquisitionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pool-then-refine UCB maximisation inside a box.

    Scores ``candidate_pool`` uniform points, then refines the best
    ``continuous_restarts`` of them with bounded Powell search.
    """
    pool = rng.uniform(box.lower, box.upper, size=(cfg.candidate_pool, box.dim))
    scores = np.atleast_1d(_ucb_batch(evaluator, pool, cfg))
    starts = np.argsort(-scores, kind="stable")[: cfg.continuous_restarts]
    best_x, best_score = pool[starts[0]], float(scores[starts[0]])
    bounds = list(zip(box.lower, box.upper))

    def negative_ucb(x: np.ndarray) -> float:
        x = np.clip(x, box.lower, box.upper)
        return -float(_ucb_batch(evaluator, x[None, :], cfg)[0])

    for start in starts:
        result = minimize(
            negative_ucb,
            pool[start],
            method="Powell",
            bounds=bounds,
            options={
                "xtol": cfg.refine_tolerance,
                "ftol": 1e-12,
                "maxfev": cfg.refine_max_evaluations,
            },
        )
        x = np.clip(result.x, box.lower, box.upper)
        score = -negative_ucb(x)
        if score > best_score:
            best_x, best_score = x, score
    logger.debug(f"Continuous acquisition optimum {np.round(best_x, 4)} with UCB {best_score:.4f}")
    return np.array(best_x, copy=True)
