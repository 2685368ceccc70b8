from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy import linalg

from scaml_gp.errors import InvalidArgumentError, NotPositiveDefiniteError
from scaml_gp.settings import SETTINGS

LOG_2PI = float(np.log(2.0 * np.pi))


def cholesky_with_jitter(
    A: np.ndarray, jitter_ladder: list[float] | None = None
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter * I`` for the first jitter that works.

    Returns:
        The factor and the jitter that was added to the diagonal.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"Expected a square matrix, got shape {A.shape}")
    ladder = SETTINGS.gp.jitter_ladder if jitter_ladder is None else jitter_ladder
    if A.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    eye = np.eye(A.shape[0])
    for jitter in ladder:
        try:
            L = linalg.cholesky(A + jitter * eye, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if jitter > 0:
            logger.warning(f"Cholesky needed jitter {jitter:g} on a {A.shape[0]}x{A.shape[0]} matrix")
        return L, float(jitter)
    raise NotPositiveDefiniteError("Cholesky failed at every jitter level", ladder[-1])


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def clamp_variances(variances: np.ndarray, tolerance: float | None = None) -> np.ndarray:
    """Clamp round-off negatives to zero; anything below ``-tolerance`` is an error."""
    tolerance = SETTINGS.gp.variance_tolerance if tolerance is None else tolerance
    lowest = float(np.min(variances)) if variances.size else 0.0
    if lowest < -tolerance:
        raise InvalidArgumentError(f"Posterior variance {lowest:g} below -{tolerance:g}")
    return np.maximum(variances, 0.0)


@dataclass(frozen=True)
class GaussianTerms:
    """Cholesky-based pieces of ``log N(residual; 0, cov)``."""

    value: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    def trace_weights(self) -> np.ndarray:
        """``alpha alpha^T - cov^{-1}``; gradient of ``value`` is ``0.5 * sum(W * dcov)``."""
        n = self.alpha.size
        inverse = linalg.cho_solve((self.chol, True), np.eye(n))
        return np.outer(self.alpha, self.alpha) - inverse


def gaussian_log_density(residual: np.ndarray, cov: np.ndarray) -> GaussianTerms:
    chol, jitter = cholesky_with_jitter(cov)
    alpha = linalg.cho_solve((chol, True), residual)
    value = (
        -0.5 * residual @ alpha
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * residual.size * LOG_2PI
    )
    return GaussianTerms(value=float(value), chol=chol, alpha=alpha, jitter=jitter)
