"""Branin and Hartmann task families.

Every family member is a minimisation benchmark over its native box; the
objectives handed to the optimizer negate them so BO always maximises.
"""

import numpy as np
from loguru import logger

from scaml_gp.benchmarks.schemas import BraninTask, HartmannTask, SyntheticFamily, SyntheticTask
from scaml_gp.errors import InvalidArgumentError
from scaml_gp.optimization.schemas import Observation

BRANIN_LOWER = np.array([-5.0, 0.0])
BRANIN_UPPER = np.array([10.0, 15.0])

BRANIN_BOXES = {
    "a": (0.5, 1.5),
    "b": (0.1, 0.15),
    "c": (1.0, 2.0),
    "r": (5.0, 7.0),
    "s": (8.0, 12.0),
    "t": (0.03, 0.05),
}
HARTMANN_ALPHA_BOXES = np.array([[1.00, 1.02], [1.18, 1.20], [2.8, 3.0], [3.2, 3.4]])

HARTMANN3_A = np.array(
    [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ]
)
HARTMANN3_P = 1e-4 * np.array(
    [
        [3689.0, 1170.0, 2673.0],
        [4699.0, 4387.0, 7470.0],
        [1091.0, 8732.0, 5547.0],
        [381.0, 5743.0, 8828.0],
    ]
)
HARTMANN6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
HARTMANN6_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ]
)
HARTMANN_MATRICES = {3: (HARTMANN3_A, HARTMANN3_P), 6: (HARTMANN6_A, HARTMANN6_P)}


def _check_domain(x: np.ndarray, lower: np.ndarray, upper: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != lower.size:
        raise InvalidArgumentError(f"{name} expects {lower.size} coordinates, got {x.shape[-1]}")
    slack = 1e-12 * (upper - lower)
    if np.any(x < lower - slack) or np.any(x > upper + slack) or not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} input outside [{lower}, {upper}]")
    return x


def branin_eval(task: BraninTask, x: np.ndarray) -> float | np.ndarray:
    """Branin value at one point or at each row of a matrix (native coordinates)."""
    x = _check_domain(x, BRANIN_LOWER, BRANIN_UPPER, "Branin")
    x1, x2 = x[..., 0], x[..., 1]
    value = (
        task.a * (x2 - task.b * x1**2 + task.c * x1 - task.r) ** 2
        + task.s * (1.0 - task.t) * np.cos(x1)
        + task.s
    )
    return float(value) if value.ndim == 0 else value


def hartmann_eval(task: HartmannTask, x: np.ndarray) -> float | np.ndarray:
    A, P = HARTMANN_MATRICES[task.dim]
    x = _check_domain(x, np.zeros(task.dim), np.ones(task.dim), f"Hartmann{task.dim}")
    inner = np.sum(A * (x[..., None, :] - P) ** 2, axis=-1)
    value = -np.exp(-inner) @ task.alpha
    return float(value) if value.ndim == 0 else value


def evaluate(task: SyntheticTask, x: np.ndarray) -> float | np.ndarray:
    if isinstance(task, BraninTask):
        return branin_eval(task, x)
    return hartmann_eval(task, x)


def sample_branin_task(rng: np.random.Generator) -> BraninTask:
    return BraninTask(**{name: rng.uniform(lo, hi) for name, (lo, hi) in BRANIN_BOXES.items()})


def sample_hartmann_task(dim: int, rng: np.random.Generator) -> HartmannTask:
    if dim not in HARTMANN_MATRICES:
        raise InvalidArgumentError(f"Hartmann is defined for 3 or 6 dimensions, got {dim}")
    alpha = rng.uniform(HARTMANN_ALPHA_BOXES[:, 0], HARTMANN_ALPHA_BOXES[:, 1])
    return HartmannTask(dim=dim, alpha=alpha)


def sample_task(family: SyntheticFamily, rng: np.random.Generator) -> SyntheticTask:
    if family == "branin":
        return sample_branin_task(rng)
    if family in ("hartmann3", "hartmann6"):
        return sample_hartmann_task(int(family[-1]), rng)
    raise InvalidArgumentError(f"Unknown benchmark family {family!r}")


def family_bounds(family: SyntheticFamily) -> tuple[np.ndarray, np.ndarray]:
    """Native lower and upper bounds of a family's input box."""
    if family == "branin":
        return BRANIN_LOWER.copy(), BRANIN_UPPER.copy()
    if family in ("hartmann3", "hartmann6"):
        dim = int(family[-1])
        return np.zeros(dim), np.ones(dim)
    raise InvalidArgumentError(f"Unknown benchmark family {family!r}")


def to_native(family: SyntheticFamily, x_unit: np.ndarray) -> np.ndarray:
    lower, upper = family_bounds(family)
    return lower + np.asarray(x_unit, dtype=float) * (upper - lower)


def to_unit(family: SyntheticFamily, x_native: np.ndarray) -> np.ndarray:
    lower, upper = family_bounds(family)
    return np.clip((np.asarray(x_native, dtype=float) - lower) / (upper - lower), 0.0, 1.0)


class SyntheticObjective:
    """Negated, noisy evaluator of one sampled task over the unit cube."""

    def __init__(self, task: SyntheticTask, noise_std: float, rng: np.random.Generator):
        if noise_std < 0:
            raise InvalidArgumentError(f"noise_std must be non-negative, got {noise_std}")
        self.task = task
        self.family: SyntheticFamily = task.family
        self.noise_std = noise_std
        self.rng = rng

    def __call__(self, x: np.ndarray) -> Observation:
        f = -evaluate(self.task, to_native(self.family, x))
        y = f + self.noise_std * self.rng.standard_normal() if self.noise_std > 0 else f
        logger.debug(f"{self.family} objective at {np.round(x, 4)}: f={f:.4f}")
        return Observation(y=float(y), f=float(f))
