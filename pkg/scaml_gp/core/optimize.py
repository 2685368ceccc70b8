from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from loguru import logger
from scipy.optimize import minimize

from scaml_gp.core.schemas import FitDiagnostics
from scaml_gp.errors import NotPositiveDefiniteError, OptimizationError

ObjectiveWithGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class MultistartResult:
    x: np.ndarray
    value: float
    diagnostics: list[FitDiagnostics] = field(default_factory=list)


class _BestTracker:
    """Wraps a maximisation objective for L-BFGS-B and remembers the best point seen."""

    def __init__(self, objective: ObjectiveWithGrad):
        self.objective = objective
        self.best_x: np.ndarray | None = None
        self.best_value = -np.inf

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            value, grad = self.objective(x)
        except (NotPositiveDefiniteError, FloatingPointError, np.linalg.LinAlgError):
            return 1e25, np.zeros_like(x)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return 1e25, np.zeros_like(x)
        if value > self.best_value:
            self.best_value = float(value)
            self.best_x = np.array(x, copy=True)
        return -value, -grad


def multistart_maximize(
    objective: ObjectiveWithGrad,
    initial_points: np.ndarray,
    bounds: list[tuple[float, float]],
    max_iterations: int = 200,
    ftol: float = 1e-12,
) -> MultistartResult:
    """Run bounded L-BFGS-B from each initial point and return the best result.

    The returned value is never worse than the objective at any initial point.
    """
    best: MultistartResult | None = None
    diagnostics = []
    for restart, x0 in enumerate(np.atleast_2d(initial_points)):
        tracker = _BestTracker(objective)
        initial_value = -tracker(x0)[0]
        if tracker.best_x is None:
            logger.warning(f"Restart {restart} failed at its initial point")
            diagnostics.append(
                FitDiagnostics(restart=restart, success=False, message="initial point not evaluable")
            )
            continue
        result = minimize(
            tracker,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iterations, "ftol": ftol},
        )
        diagnostics.append(
            FitDiagnostics(
                restart=restart,
                success=bool(result.success),
                message=str(result.message),
                initial_value=float(initial_value),
                final_value=tracker.best_value,
                iterations=int(result.nit),
            )
        )
        logger.debug(
            f"Restart {restart}: {initial_value:.4f} -> {tracker.best_value:.4f} ({result.message})"
        )
        if best is None or tracker.best_value > best.value:
            best = MultistartResult(x=tracker.best_x, value=tracker.best_value)
    if best is None:
        raise OptimizationError("All optimizer restarts failed", diagnostics)
    best.diagnostics = diagnostics
    return best
