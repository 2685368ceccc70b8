import numpy as np
from loguru import logger
from scipy import linalg

from scaml_gp.core.linalg import clamp_variances, gaussian_log_density, symmetrize
from scaml_gp.core.schemas import DataSet
from scaml_gp.errors import InvalidArgumentError, ResourceLimitError
from scaml_gp.scaml.coregionalization import joint_gram
from scaml_gp.scaml.schemas import MetaModel
from scaml_gp.settings import SETTINGS


def joint_mtgp_oracle(
    meta_data: list[DataSet],
    test_data: DataSet,
    model: MetaModel,
    Xq: np.ndarray,
    max_points: int | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Brute-force conditioning of the full multi-task GP on all observations at once.

    Builds the dense joint covariance over every meta and test observation
    (per-task noise on the diagonal) and conditions the test task on it.

    Returns:
        Test-task posterior mean and covariance at ``Xq`` and the joint log
        marginal likelihood of all observations.
    """
    max_points = SETTINGS.scaml.oracle_max_points if max_points is None else max_points
    if len(meta_data) != model.num_meta:
        raise InvalidArgumentError(f"{len(meta_data)} meta datasets for {model.num_meta} meta-tasks")
    total = sum(d.n for d in meta_data) + test_data.n
    if total > max_points:
        raise ResourceLimitError(f"Joint oracle limited to {max_points} points, got {total}")

    test = model.num_meta + 1
    datasets = list(meta_data) + [test_data]
    X = np.vstack([d.inputs for d in datasets]) if total else np.zeros((0, model.dim))
    y = np.concatenate([d.outputs for d in datasets])
    tasks = np.concatenate([np.full(d.n, m) for m, d in enumerate(datasets, start=1)]).astype(int)
    noise = np.concatenate(
        [np.full(d.n, gp.noise.noise_variance) for d, gp in zip(meta_data, model.meta_gps)]
        + [np.full(test_data.n, model.test_noise.noise_variance)]
    )

    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    q_tasks = np.full(Xq.shape[0], test)
    prior_qq = joint_gram(Xq, q_tasks, model)
    if total == 0:
        return np.zeros(Xq.shape[0]), prior_qq, 0.0

    K = joint_gram(X, tasks, model) + np.diag(noise)
    terms = gaussian_log_density(y, K)
    cross = joint_gram(Xq, q_tasks, model, X, tasks)
    mean = cross @ terms.alpha
    V = linalg.solve_triangular(terms.chol, cross.T, lower=True)
    cov = symmetrize(prior_qq - V.T @ V)
    np.fill_diagonal(cov, clamp_variances(np.diag(cov).copy()))
    logger.debug(f"Joint oracle conditioned on {total} points, log-likelihood {terms.value:.6f}")
    return mean, cov, terms.value
