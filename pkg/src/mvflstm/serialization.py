"""Binary file formats.

Parameter blob (``.mvf``), all integers little-endian uint32::

    b"MVF1" | n_arrays | for each array: ndim, dim_0 .. dim_{ndim-1}
           | payload: every array's values as little-endian float32, row-major,
             in header order

Feature file (``.fea``)::

    b"FEA1" | T | N | T*N little-endian float32, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

PARAM_MAGIC = b"MVF1"
FEATURE_MAGIC = b"FEA1"
_F32 = np.dtype("<f4")


def encode_params(arrays) -> bytes:
    header = [PARAM_MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        header.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
    payload = [np.ascontiguousarray(a, dtype=_F32).tobytes() for a in arrays]
    return b"".join(header + payload)


def decode_params(blob: bytes) -> list[np.ndarray]:
    if blob[:4] != PARAM_MAGIC:
        raise FormatError(f"bad parameter magic {blob[:4]!r}")
    pos = 4
    try:
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shapes = []
        for _ in range(n):
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}I", blob, pos))
            pos += 4 * ndim
    except struct.error as exc:
        raise FormatError("truncated parameter header") from exc
    out = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        if pos + 4 * count > len(blob):
            raise FormatError("truncated parameter payload")
        out.append(np.frombuffer(blob, dtype=_F32, count=count, offset=pos).reshape(shape).copy())
        pos += 4 * count
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after parameter payload")
    return out


def save_params(path, arrays):
    Path(path).write_bytes(encode_params(arrays))


def load_params(path) -> list[np.ndarray]:
    return decode_params(Path(path).read_bytes())


def encode_features(x) -> bytes:
    x = np.asarray(x)
    if x.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {x.shape}")
    T, N = x.shape
    return FEATURE_MAGIC + struct.pack("<II", T, N) + np.ascontiguousarray(x, dtype=_F32).tobytes()


def decode_features(blob: bytes) -> np.ndarray:
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"bad feature magic {blob[:4]!r}")
    if len(blob) < 12:
        raise FormatError("truncated feature header")
    T, N = struct.unpack_from("<II", blob, 4)
    if len(blob) != 12 + 4 * T * N:
        raise FormatError(f"feature payload has {len(blob) - 12} bytes, expected {4 * T * N}")
    return np.frombuffer(blob, dtype=_F32, offset=12).reshape(T, N).copy()


def save_features(path, x):
    Path(path).write_bytes(encode_features(x))


def load_features(path) -> np.ndarray:
    return decode_features(Path(path).read_bytes())
