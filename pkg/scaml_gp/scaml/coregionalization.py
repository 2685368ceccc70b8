import numpy as np

from scaml_gp.core.kernels import kernel_matrix, se_ard
from scaml_gp.scaml.schemas import MetaModel, TaskIndex, as_task_index
from scaml_gp.errors import InvalidArgumentError


def coreg_matrix(m: TaskIndex | int, w_m: float, num_meta: int) -> np.ndarray:
    """Coregionalization matrix of task ``m`` in an (M+1)x(M+1) task space.

    A meta-task couples only to itself (unit self-covariance) and to the test
    task through ``w_m``; the test task's own matrix selects the residual kernel.
    """
    if num_meta < 0:
        raise InvalidArgumentError(f"M must be non-negative, got {num_meta}")
    task = as_task_index(m, num_meta)
    t = num_meta
    W = np.zeros((num_meta + 1, num_meta + 1))
    if task.is_test:
        W[t, t] = 1.0
        return W
    i = task.value - 1
    W[i, i] = 1.0
    W[i, t] = W[t, i] = w_m
    W[t, t] = w_m**2
    return W


def task_loadings(tasks: np.ndarray, model: MetaModel) -> np.ndarray:
    """``g_m(nu)`` for every point: rows are meta-tasks, columns are points."""
    tasks = np.asarray(tasks, dtype=int)
    test = model.num_meta + 1
    if np.any((tasks < 1) | (tasks > test)):
        raise InvalidArgumentError(f"Task indices must lie in [1, {test}]")
    G = np.zeros((model.num_meta, tasks.size))
    for m in range(model.num_meta):
        G[m, tasks == m + 1] = 1.0
        G[m, tasks == test] = model.weights.w[m]
    return G


def joint_kernel(
    x: np.ndarray,
    nu: TaskIndex | int,
    x2: np.ndarray,
    nu2: TaskIndex | int,
    model: MetaModel,
) -> float:
    nu = as_task_index(nu, model.num_meta)
    nu2 = as_task_index(nu2, model.num_meta)
    value = 0.0
    if nu.is_test and nu2.is_test:
        value += se_ard(x, x2, model.test_kernel)
    G = task_loadings(np.array([nu.value, nu2.value]), model)
    for m, gp in enumerate(model.meta_gps):
        if G[m, 0] != 0.0 and G[m, 1] != 0.0:
            value += G[m, 0] * G[m, 1] * se_ard(x, x2, gp.kernel)
    return value


def joint_gram(
    X: np.ndarray,
    tasks: np.ndarray,
    model: MetaModel,
    X2: np.ndarray | None = None,
    tasks2: np.ndarray | None = None,
) -> np.ndarray:
    """Joint-kernel matrix between (input, task) pairs, without observation noise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    symmetric = X2 is None
    X2 = X if symmetric else np.atleast_2d(np.asarray(X2, dtype=float))
    tasks2 = tasks if tasks2 is None else tasks2
    G = task_loadings(tasks, model)
    G2 = G if symmetric else task_loadings(tasks2, model)
    test = model.num_meta + 1
    both_test = np.outer(np.asarray(tasks) == test, np.asarray(tasks2) == test)
    K = both_test * kernel_matrix(X, X2, model.test_kernel)
    for m, gp in enumerate(model.meta_gps):
        K += np.outer(G[m], G2[m]) * kernel_matrix(X, X2, gp.kernel)
    return K
