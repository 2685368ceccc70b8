from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from scaml_gp.benchmarks.schemas import TabularTask
from scaml_gp.benchmarks.tabular import write_tabular
from scaml_gp.cli import EXIT_CHECK_FAILED, EXIT_INVALID_CONFIG, EXIT_IO_ERROR, EXIT_OK, EXIT_RUN_FAILED, main
from scaml_gp.core.regression import FittedGP, fit_map, posterior_mean_variance
from scaml_gp.core.schemas import DataSet, KernelParams, NoiseParams
from scaml_gp.errors import InvalidArgumentError
from scaml_gp.harness.backends import PlainGPBackend, ScaMLBackend
from scaml_gp.harness.normalization import normalize_meta_data, normalize_outputs
from scaml_gp.harness.results import summary_path, write_results_csv
from scaml_gp.harness.runner import run_experiment, run_seed, sweep
from scaml_gp.harness.schemas import ExperimentConfig, InputScaling, RunResult
from scaml_gp.optimization.schemas import AcquisitionConfig, IterationRecord

SMALL_ACQUISITION = {"candidate_pool": 64, "continuous_restarts": 2}


def _config(**overrides) -> ExperimentConfig:
    fields = {
        "benchmark": "branin",
        "method": "scaml",
        "meta_tasks": 2,
        "points_per_task": 5,
        "iterations": 3,
        "seeds": [0],
        "acquisition": SMALL_ACQUISITION,
        "max_workers": 1,
    }
    fields.update(overrides)
    return ExperimentConfig.model_validate(fields)


def _record(iteration: int, regret: float) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        x=[0.1, 0.2],
        y=-regret,
        f=-regret,
        simple_regret=regret,
        cumulative_regret=regret * iteration,
    )


def _tables(directory, count: int = 4) -> None:
    rows = np.array([[a, b] for a in (1.0, 2.0, 3.0) for b in (0.0, 1.0)])
    for i in range(count):
        values = -np.sum((rows - [2.0, 0.5 + 0.1 * i]) ** 2, axis=1)
        task = TabularTask(name=f"t{i}", columns=["a", "b"], levels=[[1.0, 2.0, 3.0], [0.0, 1.0]], rows=rows, values=values)
        write_tabular(task, directory / f"t{i}.csv")


def test_normalize_outputs_per_task():
    normalized, state = normalize_outputs(np.array([1.0, 3.0]))
    assert_allclose(normalized, [-1.0, 1.0])
    assert state.mean == 2.0 and state.std == 1.0
    assert_allclose(state.denormalize(normalized), [1.0, 3.0])


def test_normalize_constant_outputs_uses_the_floor():
    normalized, state = normalize_outputs(np.full(4, 7.0))
    assert_allclose(normalized, 0.0)
    assert state.floored and state.std == 1e-12


def test_joint_test_normalization_pools_meta_outputs():
    normalized, state = normalize_outputs(np.zeros(0), "joint-test", [np.array([0.0, 4.0]), np.array([2.0])])
    assert normalized.size == 0
    assert state.mean == pytest.approx(2.0)
    assert state.std == pytest.approx(np.std([0.0, 4.0, 2.0]))
    values, _ = normalize_outputs(np.array([2.0]), "joint-test", [np.array([0.0, 4.0])])
    assert_allclose(values, [0.0])


def test_normalize_outputs_rejects_empty_input():
    with pytest.raises(InvalidArgumentError):
        normalize_outputs(np.zeros(0))


def test_normalize_meta_data_is_per_task():
    meta = [DataSet(inputs=[[0.0], [1.0]], outputs=[1.0, 3.0]), DataSet(inputs=[[0.5], [0.7]], outputs=[10.0, 30.0])]
    for data in normalize_meta_data(meta):
        assert_allclose(data.outputs, [-1.0, 1.0])


def test_input_scaling_round_trip():
    scaling = InputScaling(lower=np.array([-5.0, 0.0]), upper=np.array([10.0, 15.0]))
    x = np.array([2.5, 7.5])
    assert_allclose(scaling.to_unit(x), [0.5, 0.5])
    assert_allclose(scaling.to_native(scaling.to_unit(x)), x)


def test_experiment_config_defaults_and_seed_count():
    cfg = ExperimentConfig(benchmark="branin", method="gpbo", seeds=3)
    assert cfg.seeds == [0, 1, 2]
    assert cfg.resolved_noise_std == 1.0
    assert cfg.acquisition.beta_sqrt == 3.0
    assert ExperimentConfig(benchmark="hartmann6", method="scaml").resolved_noise_std == 0.1
    tabular = ExperimentConfig(benchmark="tabular:tables", method="scaml")
    assert tabular.is_tabular and tabular.resolved_noise_std == 0.0
    assert str(tabular.tabular_directory) == "tables"


@pytest.mark.parametrize(
    "fields",
    [
        {"benchmark": "rosenbrock", "method": "gpbo"},
        {"benchmark": "branin", "method": "random"},
        {"benchmark": "branin", "method": "gpbo", "iterations": 0},
        {"benchmark": "branin", "method": "gpbo", "seeds": [1, 1]},
        {"benchmark": "branin", "method": "gpbo", "noise_std": -1.0},
        {"benchmark": "tabular:tables", "method": "gpbo", "noise_std": 0.5},
        {"benchmark": "branin", "method": "gpbo", "unknown": 1},
        {"benchmark": "branin", "method": "gpbo", "acquisition": {"beta_sqrt": -1.0}},
    ],
)
def test_experiment_config_rejects_invalid_fields(fields):
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(fields)


def test_write_results_csv_and_summary(tmp_path):
    results = [
        RunResult(seed=0, method="scaml", benchmark="branin", true_max=0.0, records=[_record(1, 1.0), _record(2, 0.5)]),
        RunResult(seed=1, method="scaml", benchmark="branin", true_max=0.0, records=[_record(1, 3.0), _record(2, 0.5)]),
        RunResult(seed=2, method="scaml", benchmark="branin", error="InvalidArgumentError: boom"),
    ]
    path, summary = write_results_csv(results, tmp_path / "out" / "run.csv")
    assert summary == summary_path(path) == tmp_path / "out" / "run.summary.csv"
    frame = pd.read_csv(path)
    assert len(frame) == 4
    assert list(frame["seed"]) == [0, 0, 1, 1]
    assert frame["x"][0] == "0.1;0.2"
    table = pd.read_csv(summary)
    assert list(table["iteration"]) == [1, 2]
    assert table["mean_simple_regret"][0] == pytest.approx(2.0)
    assert table["stderr_simple_regret"][0] == pytest.approx(1.0)
    assert table["stderr_simple_regret"][1] == pytest.approx(0.0)
    assert list(table["n_seeds"]) == [2, 2]


def test_write_results_csv_needs_results(tmp_path):
    with pytest.raises(InvalidArgumentError):
        write_results_csv([], tmp_path / "run.csv")


def test_plain_backend_without_data_reports_the_prior():
    posterior = PlainGPBackend().fit(DataSet.empty(2), np.random.default_rng(0))
    mean, variance = posterior.mean_and_variance(np.array([[0.2, 0.3], [0.9, 0.1]]))
    assert_allclose(mean, 0.0)
    assert np.all(variance > 0.0)


def test_plain_backend_reports_raw_units():
    X = np.linspace(0.0, 1.0, 6)[:, None]
    data = DataSet(inputs=X, outputs=100.0 + 10.0 * np.sin(4.0 * X[:, 0]))
    posterior = PlainGPBackend(restarts=2).fit(data, np.random.default_rng(1))
    mean, _ = posterior.mean_and_variance(X)
    assert_allclose(mean, data.outputs, atol=1.0)


def test_scaml_backend_without_test_data_uses_weighted_meta_means():
    rng = np.random.default_rng(2)
    meta_outputs = [rng.standard_normal(5) * 3.0 + 1.0, rng.standard_normal(5) * 3.0 + 1.0]
    normalized = [normalize_outputs(y)[0] for y in meta_outputs]
    meta_gps = [
        FittedGP.condition(
            DataSet(inputs=rng.uniform(size=(5, 2)), outputs=y),
            KernelParams(lengthscales=[0.3, 0.3], outputscale=1.0),
            NoiseParams(noise_variance=1e-3),
        )
        for y in normalized
    ]
    backend = ScaMLBackend(meta_gps, meta_outputs, 2)
    Xq = rng.uniform(size=(3, 2))
    mean, variance = backend.fit(DataSet.empty(2), rng).mean_and_variance(Xq)
    _, state = normalize_outputs(np.zeros(0), "joint-test", meta_outputs)
    expected = sum(posterior_mean_variance(gp, Xq)[0] for gp in meta_gps)
    assert_allclose(mean, state.denormalize(expected), atol=1e-10)
    assert np.all(variance > 0.0)
    assert_allclose(backend.theta.weights.w, 1.0)


def test_run_seed_produces_records_in_native_units():
    result = run_seed(_config(), 0)
    assert not result.failed
    assert len(result.records) == 3
    regrets = [r.simple_regret for r in result.records]
    assert all(a >= b for a, b in zip(regrets, regrets[1:]))
    for record in result.records:
        assert -5.0 <= record.x[0] <= 10.0 and 0.0 <= record.x[1] <= 15.0
        assert record.fit_ms is None and record.acq_ms is None
    assert result.final_cumulative_regret == pytest.approx(sum(regrets))


def test_run_seed_records_timings_when_asked():
    result = run_seed(_config(method="gpbo", iterations=1, record_timings=True), 0)
    assert result.records[0].fit_ms is not None and result.records[0].fit_ms >= 0.0


def test_run_experiment_is_reproducible(tmp_path):
    cfg = _config(seeds=[0, 1])
    first, _ = write_results_csv(run_experiment(cfg), tmp_path / "a.csv")
    second, _ = write_results_csv(run_experiment(cfg), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    frame = pd.read_csv(first)
    assert frame[frame["seed"] == 0]["x"].tolist() != frame[frame["seed"] == 1]["x"].tolist()


def test_plain_gp_ignores_meta_data():
    few = run_seed(_config(method="gpbo", meta_tasks=0), 3)
    many = run_seed(_config(method="gpbo", meta_tasks=4, points_per_task=8), 3)
    assert [r.x for r in few.records] == [r.x for r in many.records]
    assert [r.y for r in few.records] == [r.y for r in many.records]


def test_meta_data_dump_is_identical_across_methods(tmp_path):
    for method in ("gpbo", "scaml"):
        run_seed(_config(method=method, iterations=1, meta_data_dir=tmp_path / method), 4)
    gpbo, scaml = tmp_path / "gpbo" / "seed_4.csv", tmp_path / "scaml" / "seed_4.csv"
    assert gpbo.read_bytes() == scaml.read_bytes()
    frame = pd.read_csv(gpbo)
    assert list(frame.columns) == ["task", "x0", "x1", "y"]
    assert len(frame) == 10


def test_tabular_run_truncates_when_table_is_exhausted(tmp_path):
    _tables(tmp_path)
    cfg = _config(benchmark=f"tabular:{tmp_path}", points_per_task=3, iterations=8)
    result = run_seed(cfg, 0)
    assert not result.failed
    assert result.truncated
    assert len(result.records) == 6
    assert result.final_simple_regret == 0.0
    assert len({tuple(r.x) for r in result.records}) == 6


def test_failed_seed_is_reported_not_raised(tmp_path):
    _tables(tmp_path, count=2)
    results = run_experiment(_config(benchmark=f"tabular:{tmp_path}", points_per_task=3, seeds=[0, 1]))
    assert [r.seed for r in results] == [0, 1]
    assert all(r.failed and "InvalidArgumentError" in r.error for r in results)


def test_sweep_over_meta_tasks():
    table = sweep(_config(iterations=1), "meta-tasks", [1, 2])
    assert len(table) == 4
    assert list(table["method"]) == ["gpbo", "scaml", "gpbo", "scaml"]
    assert list(table["value"]) == [1, 1, 2, 2]
    assert (table["n_seeds"] == 1).all()
    with pytest.raises(InvalidArgumentError):
        sweep(_config(), "iterations", [1])


def test_cli_run_writes_results(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"acquisition": SMALL_ACQUISITION, "max_workers": 1}), encoding="utf-8")
    out = tmp_path / "run.csv"
    code = main(
        ["run", "--config", str(config), "--benchmark", "branin", "--method", "gpbo", "--iterations", "2", "--seeds", "1", "--out", str(out)]
    )
    assert code == EXIT_OK
    assert len(pd.read_csv(out)) == 2
    assert summary_path(out).exists()


def test_cli_exit_codes(tmp_path):
    assert main(["run", "--benchmark", "rosenbrock", "--method", "gpbo"]) == EXIT_INVALID_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--benchmark", "branin"]) == EXIT_IO_ERROR
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(bad)]) == EXIT_INVALID_CONFIG


def test_cli_tabular_check(tmp_path):
    _tables(tmp_path, count=1)
    assert main(["tabular-check", str(tmp_path / "t0.csv")]) == EXIT_OK
    broken = tmp_path / "broken.csv"
    broken.write_text("param:a,value\n1,0.5\n1,0.7\n", encoding="utf-8")
    assert main(["tabular-check", str(broken)]) == EXIT_CHECK_FAILED


def test_acquisition_config_accepts_overrides():
    cfg = _config(acquisition={"beta_sqrt": 2.0})
    assert cfg.acquisition == AcquisitionConfig(beta_sqrt=2.0)


@pytest.mark.parametrize("mode", ["per-task", "joint-test"])
def test_normalization_round_trip(mode):
    rng = np.random.default_rng(50)
    values = 250.0 + 40.0 * rng.standard_normal(12)
    context = [rng.standard_normal(7) * 3.0 - 20.0] if mode == "joint-test" else None
    normalized, state = normalize_outputs(values, mode, context)
    assert_allclose(state.denormalize(normalized), values, rtol=0.0, atol=1e-9)


def test_plain_backend_mean_matches_raw_scale_recomputation():
    X = np.linspace(0.0, 1.0, 6)[:, None]
    data = DataSet(inputs=X, outputs=100.0 + 10.0 * np.sin(4.0 * X[:, 0]))
    Xq = np.array([[0.05], [0.55], [0.95]])
    mean, variance = PlainGPBackend(restarts=2).fit(data, np.random.default_rng(1)).mean_and_variance(Xq)
    normalized, state = normalize_outputs(data.outputs)
    gp = fit_map(data.with_outputs(normalized), restarts=2, rng=np.random.default_rng(1))
    expected_mean, expected_variance = posterior_mean_variance(gp, Xq)
    assert_allclose(mean, expected_mean * state.std + state.mean, rtol=0.0, atol=1e-9)
    assert_allclose(variance, expected_variance * state.std**2, rtol=1e-12)


def test_plain_backend_with_one_observation_keeps_a_unit_scale():
    data = DataSet(inputs=np.array([[0.3, 0.6]]), outputs=np.array([4.2]))
    posterior = PlainGPBackend(restarts=2).fit(data, np.random.default_rng(3))
    mean, variance = posterior.mean_and_variance(np.array([[0.3, 0.6], [0.95, 0.05]]))
    assert mean[0] == pytest.approx(4.2)
    assert variance[1] > 1e-6


def test_cli_run_fails_when_every_seed_fails(tmp_path):
    tables = tmp_path / "tables"
    tables.mkdir()
    _tables(tables, count=2)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"acquisition": SMALL_ACQUISITION, "max_workers": 1}), encoding="utf-8")
    out = tmp_path / "run.csv"
    code = main(
        ["run", "--config", str(config), "--benchmark", f"tabular:{tables}", "--method", "scaml", "--meta-tasks", "2",
         "--points-per-task", "3", "--seeds", "1", "--out", str(out)]
    )
    assert code == EXIT_RUN_FAILED
    assert pd.read_csv(out).empty
