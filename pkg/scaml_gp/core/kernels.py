import numpy as np
from scipy.spatial.distance import cdist

from scaml_gp.core.schemas import KernelParams
from scaml_gp.errors import InvalidArgumentError


def _check_dim(array: np.ndarray, params: KernelParams, name: str) -> None:
    if array.shape[-1] != params.dim:
        raise InvalidArgumentError(
            f"{name} has {array.shape[-1]} columns but the kernel has {params.dim} lengthscales"
        )


def se_ard(x: np.ndarray, x2: np.ndarray, params: KernelParams) -> float:
    """Squared-exponential kernel with one lengthscale per dimension."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.ndim != 1 or x2.ndim != 1:
        raise InvalidArgumentError("se_ard expects two vectors")
    _check_dim(x, params, "x")
    _check_dim(x2, params, "x2")
    scaled = (x - x2) / params.lengthscales
    return float(params.outputscale * np.exp(-0.5 * scaled @ scaled))


def kernel_matrix(X: np.ndarray, X2: np.ndarray, params: KernelParams) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    _check_dim(X, params, "X")
    _check_dim(X2, params, "X2")
    if X.shape[0] == 0 or X2.shape[0] == 0:
        return np.zeros((X.shape[0], X2.shape[0]))
    sq = cdist(X / params.lengthscales, X2 / params.lengthscales, "sqeuclidean")
    return params.outputscale * np.exp(-0.5 * sq)


def kernel_matrix_grads(X: np.ndarray, params: KernelParams) -> tuple[np.ndarray, list[np.ndarray]]:
    """Gram matrix and its derivatives w.r.t. log(lengthscale_i) and log(outputscale)."""
    K = kernel_matrix(X, X, params)
    grads = []
    for i, ell in enumerate(params.lengthscales):
        diff = X[:, i][:, None] - X[:, i][None, :]
        grads.append(K * diff**2 / ell**2)
    grads.append(K)
    return K, grads
