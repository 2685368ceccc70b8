from pydantic import BaseModel
from pydantic_settings import BaseSettings, SettingsConfigDict

from scaml_gp.core.priors import (
    GPPriors,
    HyperPrior,
    default_priors,
    residual_kernel_priors,
    weight_prior,
)


class GPSettings(BaseModel):
    jitter_ladder: list[float] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4]
    variance_tolerance: float = 1e-10  # Negative variances below this are errors
    restarts: int = 5  # Initial guesses per MAP fit
    max_iterations: int = 200  # L-BFGS-B iterations per restart
    ftol: float = 1e-12  # L-BFGS-B relative objective-change stop
    priors: GPPriors = default_priors()


class ScamlSettings(BaseModel):
    residual_priors: GPPriors = residual_kernel_priors()
    weight_prior: HyperPrior = weight_prior()
    restarts: int = 5
    warm_start_weights: bool = False
    meta_fit_workers: int = 1
    oracle_max_points: int = 500


class AcquisitionSettings(BaseModel):
    beta_sqrt: float = 3.0
    candidate_pool: int = 1024
    continuous_restarts: int = 8
    refine_tolerance: float = 1e-6
    refine_max_evaluations: int = 200


class BenchmarkSettings(BaseModel):
    noise_std: dict[str, float] = {
        "branin": 1.0,
        "hartmann3": 0.1,
        "hartmann6": 0.1,
        "tabular": 0.0,
    }
    grid_points: int = 1_000_000  # Scan budget of the true-maximum oracle
    refine_starts: int = 5
    chunk_size: int = 100_000


class HarnessSettings(BaseModel):
    max_workers: int = 4  # Seeds executing concurrently
    std_floor: float = 1e-12
    output_files: dict[str, str] = {
        "summary": "{stem}.summary.csv",
        "meta_data": "seed_{seed}.csv",
    }


class LoggingSettings(BaseModel):
    level: str = "INFO"


class Settings(BaseSettings):
    gp: GPSettings = GPSettings()
    scaml: ScamlSettings = ScamlSettings()
    acquisition: AcquisitionSettings = AcquisitionSettings()
    benchmarks: BenchmarkSettings = BenchmarkSettings()
    harness: HarnessSettings = HarnessSettings()
    logging: LoggingSettings = LoggingSettings()

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter=".",
        extra="ignore",  # Ignore additional env variables in .env
    )


SETTINGS = Settings()
