"""Standalone AEMB v1 writer/reader.

Deliberately re-implemented here (rather than imported) so this package
depends on the scoring pipeline only through the on-disk format:

    magic ``AEMB`` | u32 version=1 | u32 rows | u32 cols |
    rows*cols float32 row-major | u32 id length | UTF-8 backend id

All integers and floats little-endian.
"""

import struct

import numpy as np

MAGIC = b"AEMB"
VERSION = 1


def write_aemb(path, data: np.ndarray, backend_id: str) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"need a non-empty 2-D matrix, got shape {data.shape}")
    ident = backend_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, data.shape[0], data.shape[1]))
        fh.write(data.tobytes(order="C"))
        fh.write(struct.pack("<I", len(ident)))
        fh.write(ident)


def read_aemb(path) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, rows, cols = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    data = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=16)
    (id_len,) = struct.unpack_from("<I", blob, 16 + rows * cols * 4)
    ident = blob[20 + rows * cols * 4 : 20 + rows * cols * 4 + id_len].decode("utf-8")
    return data.reshape(rows, cols).copy(), ident
