import time

import numpy as np
from loguru import logger

from scaml_gp.errors import ExhaustedDomainError, InvalidArgumentError
from scaml_gp.optimization.acquisition import maximize_acq_continuous, maximize_acq_discrete
from scaml_gp.optimization.schemas import (
    AcquisitionConfig,
    BOState,
    ContinuousBox,
    Domain,
    IterationRecord,
    ModelBackend,
    Objective,
)


def simple_regret(true_max: float, state: BOState) -> float:
    """Gap between the known optimum and the best noiseless value queried so far."""
    if not np.isfinite(state.best_noiseless):
        return float("inf")
    return max(0.0, true_max - state.best_noiseless)


def cumulative_regret(trace: list[IterationRecord]) -> float:
    return float(sum(record.simple_regret for record in trace))


def bo_step(
    state: BOState,
    backend: ModelBackend,
    objective: Objective,
    domain: Domain,
    cfg: AcquisitionConfig,
    rng: np.random.Generator,
) -> BOState:
    """Run one fit -> acquire -> evaluate iteration and return the next state.

    When a discrete domain has no unvisited rows left the state is returned
    unchanged apart from ``truncated=True``.
    """
    if state.truncated:
        return state
    if domain.dim != state.test_data.dim:
        raise InvalidArgumentError(
            f"Domain has {domain.dim} dimensions, test data has {state.test_data.dim}"
        )

    start = time.perf_counter()
    posterior = backend.fit(state.test_data, rng)
    fitted = time.perf_counter()

    visited = state.visited
    if isinstance(domain, ContinuousBox):
        x = maximize_acq_continuous(posterior, domain, cfg, rng)
    else:
        try:
            index = maximize_acq_discrete(posterior, domain, state.visited, cfg)
        except ExhaustedDomainError:
            logger.warning(f"{backend.name}: candidate table exhausted after {state.iterations} iterations")
            return state.model_copy(update={"truncated": True})
        x = np.array(domain.candidates[index])
        visited = visited | {index}
    acquired = time.perf_counter()

    observation = objective(x)
    best_noiseless = max(state.best_noiseless, observation.f)
    incumbent = max(state.incumbent_value, observation.y)
    regret = max(0.0, state.true_max - best_noiseless)
    record = IterationRecord(
        iteration=state.iterations + 1,
        x=[float(v) for v in x],
        y=observation.y,
        f=observation.f,
        simple_regret=regret,
        cumulative_regret=cumulative_regret(state.trace) + regret,
        fit_ms=1e3 * (fitted - start),
        acq_ms=1e3 * (acquired - fitted),
    )
    logger.debug(
        f"{backend.name} iteration {record.iteration}: y={observation.y:.4f}, "
        f"f={observation.f:.4f}, regret={regret:.4g}"
    )
    return state.model_copy(
        update={
            "test_data": state.test_data.append(x, observation.y),
            "incumbent_value": incumbent,
            "best_noiseless": best_noiseless,
            "trace": [*state.trace, record],
            "visited": visited,
        }
    )
