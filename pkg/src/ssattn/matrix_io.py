"""Matrix files: comma-separated text and the MAT1 binary layout.

MAT1 is ``b"MAT1"``, then rows and cols as little-endian uint32, then
``rows * cols`` little-endian float64 values in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MAT1"
_HEADER = struct.Struct("<4sII")


class MatrixIOError(OSError):
    pass


def _check_shape(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix must be 2-D with rows, cols >= 1, got shape {a.shape}")
    return a


def encode_mat1(a) -> bytes:
    a = _check_shape(a)
    return _HEADER.pack(MAGIC, a.shape[0], a.shape[1]) + np.ascontiguousarray(a, dtype="<f8").tobytes()


def decode_mat1(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise MatrixIOError(f"{source}: truncated header at byte offset {len(buf)} (need {_HEADER.size} bytes)")
    magic, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise MatrixIOError(f"{source}: bad magic {magic!r} at byte offset 0, expected {MAGIC!r}")
    if rows < 1 or cols < 1:
        raise MatrixIOError(f"{source}: invalid shape {rows}x{cols} at byte offset 4")
    need = _HEADER.size + 8 * rows * cols
    if len(buf) < need:
        raise MatrixIOError(f"{source}: truncated payload at byte offset {len(buf)}; {rows}x{cols} needs {need} bytes")
    if len(buf) > need:
        raise MatrixIOError(f"{source}: {len(buf) - need} trailing bytes after byte offset {need}")
    data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return data.astype(np.float64).reshape(rows, cols)


def write_mat1(path, a) -> None:
    Path(path).write_bytes(encode_mat1(a))


def read_mat1(path) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise MatrixIOError(f"{path}: {exc.strerror or exc}") from exc
    return decode_mat1(buf, str(path))


def write_csv(path, a, header: str | None = None) -> None:
    a = _check_shape(a)
    with open(path, "w", encoding="ascii") as fh:
        if header:
            fh.write(f"# {header}\n")
        for row in a:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise MatrixIOError(f"{path}: {exc}") from exc
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or (line.startswith("#") and not rows):
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise MatrixIOError(f"{path}: line {lineno}: ragged row with {len(fields)} fields, expected {width}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise MatrixIOError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise MatrixIOError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    fmt = fmt or _guess_format(path)
    return read_csv(path) if fmt == "csv" else read_mat1(path)


def write_matrix(path, a, fmt: str | None = None) -> None:
    fmt = fmt or _guess_format(path)
    if fmt == "csv":
        write_csv(path, a)
    else:
        write_mat1(path, a)


def _guess_format(path) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "mat1"
