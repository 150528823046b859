"""AEMB v1: binary interchange format for embedding matrices.

Layout (little-endian throughout):

    bytes 0-3   magic ``AEMB``
    u32         version (1)
    u32         rows
    u32         cols
    rows*cols   float32 payload, row-major
    u32         backend_id byte length
    ...         backend_id, UTF-8

The format is deliberately trivial so that extractors written in any
language can produce files the reader accepts bit-exactly.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"AEMB"
VERSION = 1
_U32_MAX = 2**32 - 1


@dataclass
class EmbeddingMatrix:
    """N x D matrix of per-window embedding vectors.

    ``data`` is float32 (the on-disk precision); rows are index-aligned with
    the pair set the matrix was computed from. ``backend_id`` names the
    embedder (and, via suffix tags, any processing such as derangement).
    """

    data: np.ndarray
    backend_id: str = "unknown"

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"expected 2-D data, got shape {self.data.shape}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"empty embedding matrix: shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("embedding matrix contains non-finite values")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Serialize ``matrix`` to ``path`` in AEMB v1 format."""
    if matrix.rows > _U32_MAX or matrix.cols > _U32_MAX:
        raise DimensionOverflowError(
            f"matrix shape {matrix.data.shape} exceeds u32 header fields"
        )
    ident = matrix.backend_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, matrix.rows, matrix.cols))
        fh.write(matrix.data.astype("<f4", copy=False).tobytes(order="C"))
        fh.write(struct.pack("<I", len(ident)))
        fh.write(ident)


def read_embeddings(path) -> EmbeddingMatrix:
    """Read an AEMB v1 file; the inverse of :func:`write_embeddings`."""
    with open(path, "rb") as fh:
        blob = fh.read()

    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic (expected {MAGIC!r})")
    if len(blob) < 16:
        raise TruncatedPayloadError(f"{path}: header truncated")
    version, rows, cols = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if rows < 1 or cols < 1:
        raise DimensionOverflowError(f"{path}: invalid dimensions {rows}x{cols}")

    n_payload = rows * cols * 4
    if n_payload > len(blob) - 16:
        raise TruncatedPayloadError(
            f"{path}: payload needs {n_payload} bytes, {len(blob) - 16} present"
        )
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=16)
    data = data.reshape(rows, cols).copy()

    tail = blob[16 + n_payload :]
    if len(tail) < 4:
        raise TruncatedPayloadError(f"{path}: backend_id length field missing")
    (ident_len,) = struct.unpack_from("<I", tail, 0)
    if len(tail) < 4 + ident_len:
        raise TruncatedPayloadError(f"{path}: backend_id truncated")
    backend_id = tail[4 : 4 + ident_len].decode("utf-8")
    return EmbeddingMatrix(data=data, backend_id=backend_id)


def backend_tags(backend_id: str) -> dict:
    """Parse ``;key=value`` suffix tags from a backend_id string."""
    parts = backend_id.split(";")
    tags = {}
    for part in parts[1:]:
        if "=" in part:
            key, value = part.split("=", 1)
            tags[key] = value
    return tags
