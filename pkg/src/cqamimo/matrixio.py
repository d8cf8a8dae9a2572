"""Complex matrix files for exchanging channels and precoders.

Binary layout (``.cmat``/``.bin``), all little-endian::

    4 bytes   magic b"CMAT"
    uint32    rows
    uint32    cols
    float64   rows * cols * 2 values, row-major, re/im interleaved

CSV layout: one line per matrix row holding ``re,im`` pairs, so a row of
``cols`` entries has ``2 * cols`` fields.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["save_matrix", "load_matrix", "MAGIC"]

MAGIC = b"CMAT"
_HEADER = struct.Struct("<4sII")


def _fmt(path: Path, fmt: str | None) -> str:
    fmt = (fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")).lower()
    if fmt not in ("csv", "bin"):
        raise ValueError(f"unknown matrix format {fmt!r}")
    return fmt


def save_matrix(path, m: np.ndarray, fmt: str | None = None) -> None:
    path = Path(path)
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.ndim != 2:
        raise ValueError("only 2-D matrices can be saved")
    inter = np.empty((m.shape[0], 2 * m.shape[1]), dtype="<f8")
    inter[:, 0::2] = m.real
    inter[:, 1::2] = m.imag
    if _fmt(path, fmt) == "csv":
        np.savetxt(path, inter, delimiter=",", fmt="%.17g")
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, *m.shape))
            fh.write(inter.tobytes())


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    path = Path(path)
    if _fmt(path, fmt) == "csv":
        inter = np.loadtxt(path, delimiter=",", ndmin=2)
        if inter.shape[1] % 2:
            raise ValueError(f"{path}: odd number of columns in an interleaved CSV")
    else:
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if body.size != rows * cols * 2:
            raise ValueError(f"{path}: expected {rows * cols * 2} values, found {body.size}")
        inter = body.reshape(rows, 2 * cols)
    return inter[:, 0::2] + 1j * inter[:, 1::2]
