import argparse
import json
import sys
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from scaml_gp.benchmarks.tabular import load_tabular
from scaml_gp.errors import ScamlError, TabularError
from scaml_gp.harness.results import write_results_csv
from scaml_gp.harness.runner import run_experiment, sweep
from scaml_gp.harness.schemas import ExperimentConfig
from scaml_gp.settings import SETTINGS
from scaml_gp.verification import SUITES, run_suite

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_RUN_FAILED = 1
EXIT_INVALID_CONFIG = 2
EXIT_IO_ERROR = 3

# CLI flag -> ExperimentConfig field
OVERRIDES = {
    "benchmark": "benchmark",
    "method": "method",
    "meta_tasks": "meta_tasks",
    "points_per_task": "points_per_task",
    "iterations": "iterations",
    "seeds": "seeds",
    "noise_std": "noise_std",
    "out": "output_path",
    "meta_data_dir": "meta_data_dir",
    "workers": "max_workers",
}


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment configuration.")
    parser.add_argument("--benchmark", type=str, help="branin, hartmann3, hartmann6 or tabular:<directory>.")
    parser.add_argument("--method", type=str, choices=["gpbo", "scaml"], help="Optimizer to run.")
    parser.add_argument("--meta-tasks", type=int, help="Number of meta-tasks M.")
    parser.add_argument("--points-per-task", type=int, help="Points per meta-task N_m.")
    parser.add_argument("--iterations", type=int, help="BO iterations per seed.")
    parser.add_argument("--seeds", type=int, nargs="+", help="Seed list, or a single seed count.")
    parser.add_argument("--noise-std", type=float, help="Observation noise standard deviation.")
    parser.add_argument("--beta-sqrt", type=float, help="UCB exploration coefficient.")
    parser.add_argument("--out", type=Path, help="Results CSV path.")
    parser.add_argument("--meta-data-dir", type=Path, help="Write per-seed meta-data CSVs here.")
    parser.add_argument("--workers", type=int, help="Seeds executed concurrently.")
    parser.add_argument("--record-timings", action="store_true", help="Fill the wall-time columns.")


def parse_arguments(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="scaml-gp", description="Meta-learned Bayesian optimization with ScaML-GP.")
    parser.add_argument("--log-level", type=str, default=SETTINGS.logging.level, help="Log level.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run an experiment and write regret CSVs.")
    _add_experiment_arguments(run)

    verify = subparsers.add_parser("verify", help="Run an oracle suite.")
    verify.add_argument("suite", choices=list(SUITES), help="Suite to run.")

    check = subparsers.add_parser("tabular-check", help="Validate a lookup-table file.")
    check.add_argument("path", type=Path, help="Lookup-table CSV.")

    ablation = subparsers.add_parser("sweep", help="Sweep the meta-data size for both methods.")
    _add_experiment_arguments(ablation)
    ablation.add_argument("--vary", choices=["meta-tasks", "points-per-task"], required=True)
    ablation.add_argument("--values", type=int, nargs="+", required=True, help="Values to sweep.")
    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """JSON configuration (if any) with the CLI flags layered on top."""
    data = json.loads(args.config.read_text(encoding="utf-8")) if args.config else {}
    for flag, field in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[field] = value
    if args.seeds is not None and len(args.seeds) == 1:
        data["seeds"] = args.seeds[0]
    if args.beta_sqrt is not None:
        data["acquisition"] = {**data.get("acquisition", {}), "beta_sqrt": args.beta_sqrt}
    if args.record_timings:
        data["record_timings"] = True
    if args.command == "sweep":
        data.setdefault("method", "scaml")
    return ExperimentConfig.model_validate(data)


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    results = run_experiment(cfg)
    write_results_csv(results, cfg.output_path)
    failed = [result.seed for result in results if result.failed]
    if failed:
        print(f"{len(failed)} seed(s) failed: {failed}")
    if results and len(failed) == len(results):
        return EXIT_RUN_FAILED
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    report = run_suite(args.suite)
    for line in report.details:
        print(line)
    print(f"{report.name}: max error {report.max_error:.3e} (tolerance {report.tolerance:g})")
    if report.passed:
        return EXIT_OK
    print(f"first failing configuration: {json.dumps(report.failing_config, default=str)}")
    return EXIT_CHECK_FAILED


def _tabular_check(args: argparse.Namespace) -> int:
    try:
        task = load_tabular(args.path)
    except TabularError as e:
        print(f"invalid lookup table: {e}")
        return EXIT_CHECK_FAILED
    print(
        f"{args.path}: {len(task.values)} configurations, columns {task.columns}, "
        f"best value {task.true_max} at row {task.best_index}"
    )
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    table = sweep(cfg, args.vary, args.values)
    path = cfg.output_path
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(f"Cannot write sweep results to {path}: {e}") from e
    print(table.to_string(index=False))
    return EXIT_OK


COMMANDS = {"run": _run, "verify": _verify, "tabular-check": _tabular_check, "sweep": _sweep}


def main(argv: list[str] | None = None) -> int:
    args = parse_arguments(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, json.JSONDecodeError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INVALID_CONFIG
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO_ERROR
    except (ScamlError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
