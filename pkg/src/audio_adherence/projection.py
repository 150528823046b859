"""Whitening PCA projection of embedding sets.

A projection is fitted once on a reference embedding set and then applied
to every other set compared against it. "NP" is the identity projection.
"""

from dataclasses import dataclass

import numpy as np

from .aemb import EmbeddingMatrix, backend_tags
from .errors import ConfigError, DataError, MathDomainError

PROJECTION_CONTAINER_ID = "projection-v1"
_RANK_TOL = 1e-10


def _as_array(X) -> np.ndarray:
    data = X.data if isinstance(X, EmbeddingMatrix) else X
    return np.asarray(data, dtype=np.float64)


@dataclass
class Projection:
    """Fitted whitening transform: y = ((x - mean) @ basis.T) * scale."""

    kind: str
    input_dim: int
    mean: np.ndarray
    basis: np.ndarray  # (k, input_dim), orthonormal rows
    scale: np.ndarray  # (k,), positive
    explained_variance_ratio: float

    @property
    def k(self) -> int:
        return self.input_dim if self.kind == "NP" else self.basis.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.kind == "NP"


def identity_projection(input_dim: int) -> Projection:
    return Projection(
        kind="NP",
        input_dim=input_dim,
        mean=np.zeros(input_dim),
        basis=np.empty((0, input_dim)),
        scale=np.empty(0),
        explained_variance_ratio=1.0,
    )


def fit_projection(X, k: int) -> Projection:
    """Fit a k-component whitening PCA on an embedding set.

    Uses the SVD of the mean-centered data; the whitening scale is
    sqrt(N-1) / singular_value so the transformed fit data has unit sample
    variance per component.
    """
    data = _as_array(X)
    n, dim = data.shape
    if k < 1:
        raise ConfigError(f"component count must be >= 1, got {k}")
    if k > min(n - 1, dim):
        raise ConfigError(
            f"cannot fit {k} components from {n} rows of dimension {dim} "
            f"(max {min(n - 1, dim)})"
        )
    mean = data.mean(axis=0)
    centered = data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    total_variance = float(np.sum(singular**2))
    if total_variance <= 0.0:
        raise MathDomainError("zero-variance input: all rows identical")
    if singular[k - 1] < _RANK_TOL * singular[0]:
        raise MathDomainError(
            f"requested {k} components but effective rank is lower "
            f"(singular value ratio {singular[k - 1] / singular[0]:.3e})"
        )
    return Projection(
        kind=f"PCA{k}",
        input_dim=dim,
        mean=mean,
        basis=vt[:k].copy(),
        scale=np.sqrt(n - 1) / singular[:k],
        explained_variance_ratio=float(np.sum(singular[:k] ** 2) / total_variance),
    )


def apply_projection(projection: Projection, X):
    """Project an embedding set; NP returns the input unchanged."""
    if projection.is_identity:
        dim = X.cols if isinstance(X, EmbeddingMatrix) else np.asarray(X).shape[1]
        if dim != projection.input_dim:
            raise DataError(
                f"dimension mismatch: data has {dim} cols, projection expects "
                f"{projection.input_dim}"
            )
        return X
    data = _as_array(X)
    if data.shape[1] != projection.input_dim:
        raise DataError(
            f"dimension mismatch: data has {data.shape[1]} cols, projection "
            f"expects {projection.input_dim}"
        )
    out = ((data - projection.mean) @ projection.basis.T) * projection.scale
    if isinstance(X, EmbeddingMatrix):
        return EmbeddingMatrix(
            data=out.astype(np.float32),
            backend_id=f"{X.backend_id};proj={projection.kind}",
        )
    return out


def projection_to_matrix(projection: Projection) -> EmbeddingMatrix:
    """Pack a projection into the AEMB container (sidecar serialization).

    Row 0 is the mean, rows 1..k the basis, the last row the scale vector
    zero-padded to the input dimension. NP stores a single zero row.
    """
    meta = (
        f"{PROJECTION_CONTAINER_ID};kind={projection.kind}"
        f";input_dim={projection.input_dim};k={projection.k}"
        f";evr={projection.explained_variance_ratio!r}"
    )
    if projection.is_identity:
        rows = np.zeros((1, projection.input_dim), dtype=np.float32)
    else:
        padded_scale = np.zeros(projection.input_dim)
        padded_scale[: projection.k] = projection.scale
        rows = np.vstack([projection.mean, projection.basis, padded_scale])
    return EmbeddingMatrix(data=rows.astype(np.float32), backend_id=meta)


def projection_from_matrix(matrix: EmbeddingMatrix) -> Projection:
    if not matrix.backend_id.startswith(PROJECTION_CONTAINER_ID):
        raise DataError(
            f"not a projection container: backend_id {matrix.backend_id!r}"
        )
    tags = backend_tags(matrix.backend_id)
    kind = tags["kind"]
    input_dim = int(tags["input_dim"])
    k = int(tags["k"])
    evr = float(tags["evr"])
    if kind == "NP":
        proj = identity_projection(input_dim)
        proj.explained_variance_ratio = evr
        return proj
    data = matrix.data.astype(np.float64)
    if data.shape != (k + 2, input_dim):
        raise DataError(
            f"projection container shape {data.shape} inconsistent with "
            f"k={k}, input_dim={input_dim}"
        )
    return Projection(
        kind=kind,
        input_dim=input_dim,
        mean=data[0],
        basis=data[1 : k + 1],
        scale=data[k + 1, :k],
        explained_variance_ratio=evr,
    )
