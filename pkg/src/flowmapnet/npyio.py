"""Minimal NPY v1.0 writer/reader for little-endian float32 arrays.

Interoperates with numpy's own save/load but validates the header strictly
on the way in: magic, version (1, 0), dtype '<f4', C order, and that the
payload byte count matches the advertised shape.
"""

from __future__ import annotations

import ast
import io
import os
import struct

import numpy as np

from .errors import DataFormatError
from .util import atomic_open

MAGIC = b"\x93NUMPY"


def npy_bytes(arr: np.ndarray) -> bytes:
    """Serialize a float32 array as NPY v1.0 (C order, header padded to 64)."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': %s, }" % (
        repr(arr.shape if arr.ndim != 1 else (arr.shape[0],)),
    )
    # total header section (magic+version+len+text+\n) must be a multiple of 64
    base = len(MAGIC) + 2 + 2
    pad = 64 - (base + len(header) + 1) % 64
    header = header + " " * (pad % 64) + "\n"
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(bytes([1, 0]))
    out.write(struct.pack("<H", len(header)))
    out.write(header.encode("latin1"))
    out.write(arr.tobytes())
    return out.getvalue()


def write_npy(path: str | os.PathLike, arr: np.ndarray) -> None:
    with atomic_open(path, "wb") as fh:
        fh.write(npy_bytes(arr))


def read_npy(path: str | os.PathLike) -> np.ndarray:
    """Read an NPY file, validating format and element count."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != MAGIC:
            raise DataFormatError(f"{path}: not an NPY file (bad magic {magic!r})")
        version = fh.read(2)
        if len(version) != 2 or version[0] != 1:
            raise DataFormatError(f"{path}: unsupported NPY version {tuple(version)}")
        (hlen,) = struct.unpack("<H", fh.read(2))
        header = fh.read(hlen).decode("latin1")
        try:
            meta = ast.literal_eval(header)
        except (SyntaxError, ValueError):
            raise DataFormatError(f"{path}: malformed NPY header") from None
        descr, fortran, shape = (
            meta.get("descr"),
            meta.get("fortran_order"),
            meta.get("shape"),
        )
        if descr not in ("<f4", "|f4", "f4"):
            raise DataFormatError(f"{path}: expected little-endian float32, got descr={descr!r}")
        if fortran:
            raise DataFormatError(f"{path}: fortran-order arrays not supported")
        if not isinstance(shape, tuple) or not all(isinstance(s, int) for s in shape):
            raise DataFormatError(f"{path}: bad shape {shape!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read()
    if len(payload) != 4 * count:
        raise DataFormatError(
            f"{path}: header advertises {count} float32 elements "
            f"({4 * count} bytes) but payload holds {len(payload)} bytes"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
