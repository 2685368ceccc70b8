import asyncio
from collections.abc import Callable
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from loguru import logger

from scaml_gp.benchmarks.meta_data import generate_meta_data, task_streams, true_maximum
from scaml_gp.benchmarks.schemas import MetaDataSpec
from scaml_gp.benchmarks.synthetic import SyntheticObjective, family_bounds, sample_task
from scaml_gp.benchmarks.tabular import (
    TabularObjective,
    load_tabular_suite,
    subsample_meta_tabular,
)
from scaml_gp.core.schemas import DataSet
from scaml_gp.errors import InvalidArgumentError, ScamlError
from scaml_gp.harness.backends import PlainGPBackend, ScaMLBackend
from scaml_gp.harness.normalization import normalize_meta_data
from scaml_gp.harness.schemas import ExperimentConfig, InputScaling, RunResult
from scaml_gp.optimization.loop import bo_step
from scaml_gp.optimization.schemas import BOState, ContinuousBox, Domain, ModelBackend, Objective
from scaml_gp.scaml.model import fit_meta_tasks
from scaml_gp.settings import SETTINGS

# Purposes keep the random streams of one seed independent of each other.
TEST_TASK_STREAM = 1
NOISE_STREAM = 2
BO_STREAM = 3
ORACLE_STREAM = 4
META_FIT_STREAM = 5

SWEEP_FIELDS = {"meta-tasks": "meta_tasks", "points-per-task": "points_per_task"}


@dataclass
class SeedProblem:
    """Everything one seed needs, identical for every method."""

    meta_data: list[DataSet]
    objective: Objective
    domain: Domain
    true_max: float
    native: Callable[[np.ndarray], np.ndarray]


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return task_streams(seed, 1, purpose)[0]


def prepare_problem(cfg: ExperimentConfig, seed: int) -> SeedProblem:
    if cfg.is_tabular:
        return _prepare_tabular(cfg, seed)
    spec = MetaDataSpec(
        num_meta=cfg.meta_tasks,
        points_per_task=cfg.points_per_task,
        noise_std=cfg.resolved_noise_std,
        seed=seed,
    )
    meta_data, _ = generate_meta_data(cfg.family, spec)
    task = sample_task(cfg.family, _stream(seed, TEST_TASK_STREAM))
    _, true_max = true_maximum(task, rng=_stream(seed, ORACLE_STREAM))
    lower, upper = family_bounds(cfg.family)
    return SeedProblem(
        meta_data=meta_data,
        objective=SyntheticObjective(task, cfg.resolved_noise_std, _stream(seed, NOISE_STREAM)),
        domain=ContinuousBox.unit(task.dim),
        true_max=true_max,
        native=InputScaling(lower=lower, upper=upper).to_native,
    )


def _prepare_tabular(cfg: ExperimentConfig, seed: int) -> SeedProblem:
    suite = load_tabular_suite(cfg.tabular_directory)
    if len(suite) < cfg.meta_tasks + 1:
        raise InvalidArgumentError(
            f"{len(suite)} tables cannot supply {cfg.meta_tasks} meta-tasks plus a test task"
        )
    rng = _stream(seed, TEST_TASK_STREAM)
    order = rng.permutation(len(suite))
    test = suite[order[0]]
    meta_tables = [suite[i] for i in order[1 : cfg.meta_tasks + 1]]
    objective = TabularObjective(test)
    logger.debug(f"Seed {seed}: test table {test.name}, meta tables {[t.name for t in meta_tables]}")
    return SeedProblem(
        meta_data=subsample_meta_tabular(meta_tables, cfg.points_per_task, rng),
        objective=objective,
        domain=objective.candidates,
        true_max=test.true_max,
        native=objective.native,
    )


def dump_meta_data(seed: int, meta_data: list[DataSet], directory: Path) -> Path:
    """Write one seed's meta-data (unit-cube inputs, raw outputs) as ``seed_<n>.csv``."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / SETTINGS.harness.output_files["meta_data"].format(seed=seed)
    dim = meta_data[0].dim if meta_data else 0
    frames = [
        pd.DataFrame(
            {
                "task": np.full(data.n, m),
                **{f"x{j}": data.inputs[:, j] for j in range(dim)},
                "y": data.outputs,
            }
        )
        for m, data in enumerate(meta_data, start=1)
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["task", "y"])
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(f"Cannot write meta-data to {path}: {e}") from e
    return path


def build_backend(cfg: ExperimentConfig, problem: SeedProblem, seed: int) -> ModelBackend:
    if cfg.method == "gpbo":
        return PlainGPBackend()
    meta_gps = fit_meta_tasks(
        normalize_meta_data(problem.meta_data), rng=_stream(seed, META_FIT_STREAM)
    )
    return ScaMLBackend(
        meta_gps,
        [data.outputs for data in problem.meta_data],
        problem.domain.dim,
    )


def run_seed(cfg: ExperimentConfig, seed: int) -> RunResult:
    """Run one seed end to end; failures are returned in the result, not raised."""
    try:
        problem = prepare_problem(cfg, seed)
        if cfg.meta_data_dir is not None:
            dump_meta_data(seed, problem.meta_data, cfg.meta_data_dir)
        backend = build_backend(cfg, problem, seed)
        rng = _stream(seed, BO_STREAM)
        state = BOState.start(problem.domain.dim, problem.true_max)
        for _ in range(cfg.iterations):
            state = bo_step(state, backend, problem.objective, problem.domain, cfg.acquisition, rng)
            if state.truncated:
                break
    except (ScamlError, ValueError, OSError, np.linalg.LinAlgError) as e:
        logger.error(f"Seed {seed} failed: {type(e).__name__}: {e}")
        return RunResult(seed=seed, method=cfg.method, benchmark=cfg.benchmark, error=f"{type(e).__name__}: {e}")

    timings = {} if cfg.record_timings else {"fit_ms": None, "acq_ms": None}
    records = [
        record.model_copy(update={"x": [float(v) for v in problem.native(np.array(record.x))], **timings})
        for record in state.trace
    ]
    return RunResult(
        seed=seed,
        method=cfg.method,
        benchmark=cfg.benchmark,
        true_max=problem.true_max,
        records=records,
        truncated=state.truncated,
    )


def _executor(max_workers: int) -> Executor:
    if max_workers > 1:
        return ProcessPoolExecutor(max_workers=max_workers)
    return ThreadPoolExecutor(max_workers=1)


async def run_experiment_async(cfg: ExperimentConfig) -> list[RunResult]:
    semaphore = asyncio.Semaphore(cfg.max_workers)
    loop = asyncio.get_running_loop()

    with _executor(cfg.max_workers) as executor:

        async def run_one(seed: int) -> RunResult:
            async with semaphore:
                logger.info(f"Seed {seed}: {cfg.method} on {cfg.benchmark} started")
                result = await loop.run_in_executor(executor, run_seed, cfg, seed)
                if result.records:
                    logger.info(
                        f"Seed {seed}: finished {len(result.records)} iterations, "
                        f"simple regret {result.final_simple_regret:.4g}"
                    )
                return result

        results = await asyncio.gather(*[run_one(seed) for seed in cfg.seeds])

    failures = [result.seed for result in results if result.failed]
    if failures:
        logger.warning(f"{len(failures)} of {len(results)} seeds failed: {failures}")
    return list(results)


def run_experiment(cfg: ExperimentConfig) -> list[RunResult]:
    """Run every seed of ``cfg``; results come back in seed-list order."""
    return asyncio.run(run_experiment_async(cfg))


def _mean_and_stderr(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    stderr = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else float("nan")
    return float(np.mean(values)), stderr


def sweep(
    cfg: ExperimentConfig,
    vary: Literal["meta-tasks", "points-per-task"],
    values: list[int],
    methods: tuple[str, ...] = ("gpbo", "scaml"),
) -> pd.DataFrame:
    """Cumulative regret at the end of the run for every swept value and method."""
    if vary not in SWEEP_FIELDS:
        raise InvalidArgumentError(f"Cannot sweep over {vary!r}")
    rows = []
    for value in values:
        for method in methods:
            run_cfg = ExperimentConfig.model_validate(
                {**cfg.model_dump(), SWEEP_FIELDS[vary]: value, "method": method}
            )
            results = run_experiment(run_cfg)
            regrets = [r.final_cumulative_regret for r in results if not r.failed and r.records]
            mean, stderr = _mean_and_stderr(regrets)
            rows.append(
                {
                    "vary": vary,
                    "value": value,
                    "method": method,
                    "mean_cumulative_regret": mean,
                    "stderr_cumulative_regret": stderr,
                    "n_seeds": len(regrets),
                }
            )
            logger.info(f"Sweep {vary}={value} {method}: cumulative regret {mean:.4g}")
    return pd.DataFrame(rows)
