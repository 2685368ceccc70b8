from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from scaml_gp.errors import InvalidArgumentError
from scaml_gp.harness.schemas import RunResult
from scaml_gp.settings import SETTINGS

RESULT_COLUMNS = [
    "seed",
    "iteration",
    "x",
    "y_noisy",
    "f_noiseless",
    "simple_regret",
    "cumulative_regret",
    "fit_ms",
    "acq_ms",
]

SUMMARY_COLUMNS = ["iteration", "mean_simple_regret", "stderr_simple_regret", "n_seeds"]


def results_frame(results: list[RunResult]) -> pd.DataFrame:
    """One row per (seed, iteration) of every successful run."""
    rows = [
        {
            "seed": result.seed,
            "iteration": record.iteration,
            "x": ";".join(repr(float(v)) for v in record.x),
            "y_noisy": record.y,
            "f_noiseless": record.f,
            "simple_regret": record.simple_regret,
            "cumulative_regret": record.cumulative_regret,
            "fit_ms": record.fit_ms,
            "acq_ms": record.acq_ms,
        }
        for result in results
        if not result.failed
        for record in result.records
    ]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def summary_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error (sample std / sqrt(n)) of simple regret per iteration."""
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    grouped = frame.groupby("iteration", sort=True)["simple_regret"]
    summary = grouped.agg(["mean", "std", "count"]).reset_index()
    summary["stderr"] = summary["std"] / np.sqrt(summary["count"])
    return summary.rename(
        columns={
            "mean": "mean_simple_regret",
            "stderr": "stderr_simple_regret",
            "count": "n_seeds",
        }
    )[SUMMARY_COLUMNS]


def summary_path(path: Path) -> Path:
    return path.with_name(SETTINGS.harness.output_files["summary"].format(stem=path.stem))


def write_results_csv(results: list[RunResult], path: Path | str) -> tuple[Path, Path]:
    """Write the per-iteration results and the per-iteration summary next to them.

    Returns:
        Paths of the results file and the summary file.
    """
    if not results:
        raise InvalidArgumentError("No results to write")
    path = Path(path)
    frame = results_frame(results)
    summary = summary_frame(frame)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
        summary.to_csv(summary_path(path), index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(f"Cannot write results to {path}: {e}") from e
    failed = [result.seed for result in results if result.failed]
    logger.info(
        f"Wrote {len(frame)} rows to {path} and the summary to {summary_path(path)}"
        + (f"; failed seeds: {failed}" if failed else "")
    )
    return path, summary_path(path)
