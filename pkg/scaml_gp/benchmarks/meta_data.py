import numpy as np
from loguru import logger
from scipy.optimize import minimize
from scipy.stats import qmc

from scaml_gp.benchmarks.schemas import MetaDataSpec, SyntheticFamily, SyntheticTask
from scaml_gp.benchmarks.synthetic import evaluate, sample_task, to_native
from scaml_gp.core.schemas import DataSet
from scaml_gp.settings import SETTINGS


def task_streams(seed: int, count: int, purpose: int = 0) -> list[np.random.Generator]:
    """Independent Philox streams, one per task, derived from a single seed."""
    children = np.random.SeedSequence([seed, purpose]).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def generate_meta_data(
    family: SyntheticFamily, spec: MetaDataSpec
) -> tuple[list[DataSet], list[SyntheticTask]]:
    """Draw ``M`` tasks and ``N_m`` noisy observations of each.

    Inputs are sampled uniformly over the native box and returned in unit-cube
    coordinates; outputs are the negated function values plus Gaussian noise.
    """
    datasets, tasks = [], []
    for rng in task_streams(spec.seed, spec.num_meta):
        task = sample_task(family, rng)
        dim = 2 if family == "branin" else int(family[-1])
        inputs = rng.uniform(0.0, 1.0, size=(spec.points_per_task, dim))
        f = -evaluate(task, to_native(family, inputs))
        noise = rng.standard_normal(spec.points_per_task) if spec.noise_std > 0 else 0.0
        datasets.append(DataSet(inputs=inputs, outputs=f + spec.noise_std * noise))
        tasks.append(task)
    logger.debug(
        f"Generated {spec.num_meta} {family} meta-tasks with {spec.points_per_task} points each"
    )
    return datasets, tasks


def _scan_points(dim: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    if dim <= 3:
        per_axis = int(np.ceil(budget ** (1.0 / dim) - 1e-9)) + 1
        axis = np.linspace(0.0, 1.0, per_axis)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    sobol = qmc.Sobol(d=dim, scramble=True, seed=rng)
    return sobol.random_base2(int(np.ceil(np.log2(budget))))


def true_maximum(
    task: SyntheticTask,
    grid_points: int | None = None,
    refine_starts: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    """Maximiser (native coordinates) and maximum of the negated task function.

    A dense grid (d <= 3) or a scrambled Sobol scan (d = 6) is followed by
    bounded Powell refinement of the best scan points.
    """
    grid_points = SETTINGS.benchmarks.grid_points if grid_points is None else grid_points
    refine_starts = SETTINGS.benchmarks.refine_starts if refine_starts is None else refine_starts
    rng = np.random.default_rng(0) if rng is None else rng
    family = task.family

    def negated(unit: np.ndarray) -> np.ndarray:
        return -evaluate(task, to_native(family, unit))

    points = _scan_points(task.dim, grid_points, rng)
    chunk = SETTINGS.benchmarks.chunk_size
    values = np.concatenate(
        [np.atleast_1d(negated(points[i : i + chunk])) for i in range(0, len(points), chunk)]
    )
    order = np.argsort(-values, kind="stable")[:refine_starts]
    best_unit, best_value = points[order[0]], float(values[order[0]])

    for start in order:
        result = minimize(
            lambda u: -float(negated(np.clip(u, 0.0, 1.0))),
            points[start],
            method="Powell",
            bounds=[(0.0, 1.0)] * task.dim,
            options={"xtol": 1e-10, "ftol": 1e-14, "maxfev": 20_000},
        )
        unit = np.clip(result.x, 0.0, 1.0)
        value = float(negated(unit))
        if value > best_value:
            best_unit, best_value = unit, value
    logger.debug(f"True maximum of {family}: {best_value:.8f} at {np.round(to_native(family, best_unit), 6)}")
    return to_native(family, best_unit), best_value
