"""Distribution distances between embedding sets.

Two metrics are supported:

* ``fad`` -- Fréchet distance between Gaussian fits of the two sets:
  ||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca Cb)^(1/2)).
* ``mmd`` -- squared maximum mean discrepancy with a degree-3 polynomial
  kernel k(x, y) = (gamma <x, y> + coef0)^3, gamma = 1/d, coef0 = 1,
  estimated with the biased (V-statistic) estimator so the result is
  always non-negative.
"""

from dataclasses import dataclass, field

import numpy as np

from .aemb import EmbeddingMatrix
from .errors import DataError, MathDomainError

METRIC_NAMES = ("fad", "mmd")


def _as_array(X) -> np.ndarray:
    data = X.data if isinstance(X, EmbeddingMatrix) else X
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError(f"expected 2-D embedding data, got shape {data.shape}")
    return data


@dataclass
class GaussianStats:
    """Mean and unbiased covariance summarizing an embedding set."""

    mean: np.ndarray
    covariance: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class KernelParams:
    degree: int = 3
    gamma: float | None = None  # None -> 1/d at call time
    coef0: float = 1.0


def gaussian_stats(X) -> GaussianStats:
    """Fit mean and covariance (divide by N-1); requires at least 2 rows."""
    data = _as_array(X)
    n = data.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 rows for covariance, got {n}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = (centered.T @ centered) / (n - 1)
    cov = 0.5 * (cov + cov.T)  # symmetric by construction
    return GaussianStats(mean=mean, covariance=cov, n=n)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix, eigenvalues clamped at 0."""
    try:
        eigvals, eigvecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise MathDomainError(f"matrix square root failed: {exc}") from exc
    eigvals = np.maximum(eigvals, 0.0)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def _regularize(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Add eps*I when the smallest eigenvalue dips below -tol*scale."""
    dim = cov.shape[0]
    smallest = float(np.linalg.eigvalsh(cov)[0])
    trace = float(np.trace(cov))
    if smallest < -tol * max(trace, 1.0):
        cov = cov + (1e-10 * trace / dim) * np.eye(dim)
    return cov


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussian fits; >= 0, 0 iff identical."""
    if a.dim != b.dim:
        raise DataError(f"dimension mismatch: {a.dim} vs {b.dim}")
    cov_a = _regularize(a.covariance)
    cov_b = _regularize(b.covariance)
    sqrt_a = _psd_sqrt(cov_a)
    product = sqrt_a @ cov_b @ sqrt_a
    product = 0.5 * (product + product.T)
    try:
        cross_eigvals = np.linalg.eigvalsh(product)
    except np.linalg.LinAlgError as exc:
        raise MathDomainError(f"matrix square root failed: {exc}") from exc
    trace_sqrt = float(np.sum(np.sqrt(np.maximum(cross_eigvals, 0.0))))
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def polynomial_kernel(X: np.ndarray, Y: np.ndarray, params: KernelParams, gamma: float) -> np.ndarray:
    return (gamma * (X @ Y.T) + params.coef0) ** params.degree


def mmd2(X, Y, params: KernelParams = KernelParams()) -> float:
    """Biased (V-statistic) squared MMD between two embedding sets.

    mean(Kxx) + mean(Kyy) - 2 mean(Kxy), accumulated in double precision,
    clamped at zero. X = Y gives exactly 0.
    """
    data_x = _as_array(X)
    data_y = _as_array(Y)
    if data_x.shape[1] != data_y.shape[1]:
        raise DataError(
            f"dimension mismatch: {data_x.shape[1]} vs {data_y.shape[1]}"
        )
    if data_x.shape[0] < 1 or data_y.shape[0] < 1:
        raise DataError("each set needs at least one row")
    gamma = params.gamma if params.gamma is not None else 1.0 / data_x.shape[1]
    if gamma <= 0:
        raise DataError(f"kernel gamma must be positive, got {gamma}")
    k_xx = polynomial_kernel(data_x, data_x, params, gamma)
    k_yy = polynomial_kernel(data_y, data_y, params, gamma)
    k_xy = polynomial_kernel(data_x, data_y, params, gamma)
    value = float(k_xx.mean() + k_yy.mean() - 2.0 * k_xy.mean())
    return max(value, 0.0)


def distance(metric: str, reference, candidate) -> float:
    """Distance of a candidate embedding set to a reference embedding set."""
    if metric == "fad":
        return frechet_distance(gaussian_stats(reference), gaussian_stats(candidate))
    if metric == "mmd":
        return mmd2(reference, candidate)
    raise DataError(f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")
