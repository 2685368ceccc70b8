from typing import Literal

import numpy as np
from loguru import logger

from scaml_gp.core.schemas import DataSet
from scaml_gp.errors import InvalidArgumentError
from scaml_gp.harness.schemas import NormalizationState
from scaml_gp.settings import SETTINGS


def normalize_outputs(
    values: np.ndarray,
    mode: Literal["per-task", "joint-test"] = "per-task",
    context: list[np.ndarray] | None = None,
    std_floor: float | None = None,
) -> tuple[np.ndarray, NormalizationState]:
    """Standardise outputs with the population mean and std.

    Args:
        values: Outputs to normalise.
        mode: ``per-task`` uses the statistics of ``values``; ``joint-test``
            uses those of ``values`` pooled with every array in ``context``
            (the meta-task outputs).
        context: Meta-task outputs, required for ``joint-test``.
        std_floor: Smallest standard deviation accepted.

    Returns:
        The normalised values and the state needed to invert the map.
    """
    std_floor = SETTINGS.harness.std_floor if std_floor is None else std_floor
    values = np.asarray(values, dtype=float)
    if mode == "per-task":
        pooled = values
    elif mode == "joint-test":
        pooled = np.concatenate([values, *[np.asarray(c, dtype=float) for c in context or []]])
    else:
        raise InvalidArgumentError(f"Unknown normalization mode {mode!r}")
    if pooled.size == 0:
        raise InvalidArgumentError(f"{mode} normalization needs at least one value")

    mean, std = float(np.mean(pooled)), float(np.std(pooled))
    floored = std < std_floor
    if floored:
        logger.warning(f"Output std {std:g} below {std_floor:g}; using the floor")
        std = std_floor
    state = NormalizationState(mode=mode, mean=mean, std=std, floored=floored)
    return state.normalize(values), state


def normalize_meta_data(meta_data: list[DataSet]) -> list[DataSet]:
    """Standardise each meta-task's outputs on its own statistics."""
    return [data.with_outputs(normalize_outputs(data.outputs)[0]) for data in meta_data]
