"""Plain-text and binary file formats for matrices, points and run descriptors.

Matrix text: a header line ``l m`` followed by l rows of m reals.
Matrix binary: ``LRGM``, little-endian u64 l and m, then l*m little-endian
float64 values in row-major order.  Point text: header ``l m r``, then the
rows of U and then the rows of Z.  Reals are written with 17 significant
digits so text files round-trip exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .manifold import FixedRankPoint
from .trajectory import format_real

MAGIC = b"LRGM"
_HEADER = struct.Struct("<4sQQ")


def _rows(A: np.ndarray) -> list[str]:
    return [" ".join(format_real(v) for v in row) for row in A]


def write_matrix(path, A, fmt: str = "text") -> None:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("expected a 2-D array")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "binary":
        l, m = A.shape
        path.write_bytes(_HEADER.pack(MAGIC, l, m) + A.astype("<f8").tobytes(order="C"))
    elif fmt == "text":
        path.write_text("\n".join([f"{A.shape[0]} {A.shape[1]}"] + _rows(A)) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _ints(path, line: str, n: int, lineno: int) -> list[int]:
    parts = line.split()
    try:
        vals = [int(x) for x in parts]
    except ValueError:
        raise FormatError(path, f"expected {n} integers in header, got {line.strip()!r}", lineno) from None
    if len(vals) != n or min(vals) < 1:
        raise FormatError(path, f"expected {n} positive integers in header, got {line.strip()!r}", lineno)
    return vals


def _real_rows(path, lines: list[str], start: int, count: int, width: int) -> np.ndarray:
    if len(lines) < start + count:
        raise FormatError(path, f"expected {count} rows starting at line {start + 1}, file ends early")
    out = np.empty((count, width))
    for i in range(count):
        lineno = start + i + 1
        parts = lines[start + i].split()
        if len(parts) != width:
            raise FormatError(path, f"expected {width} values, found {len(parts)}", lineno)
        try:
            out[i] = [float(x) for x in parts]
        except ValueError:
            raise FormatError(path, "non-numeric entry", lineno) from None
    if not np.all(np.isfinite(out)):
        raise FormatError(path, "non-finite entry")
    return out


def _text_lines(path) -> list[str]:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise FormatError(path, "not a text file and no binary magic") from None
    return [ln for ln in text.splitlines() if ln.strip()]


def read_matrix(path) -> np.ndarray:
    """Read a matrix in either format (binary detected by its magic)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        if len(raw) < _HEADER.size:
            raise FormatError(path, "truncated binary header")
        _, l, m = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size:]
        if len(body) != 8 * l * m:
            raise FormatError(path, f"binary payload has {len(body)} bytes, expected {8 * l * m}")
        A = np.frombuffer(body, dtype="<f8").reshape(l, m).astype(np.float64)
        if not np.all(np.isfinite(A)):
            raise FormatError(path, "non-finite entry")
        return A
    lines = _text_lines(path)
    if not lines:
        raise FormatError(path, "empty file")
    l, m = _ints(path, lines[0], 2, 1)
    A = _real_rows(path, lines, 1, l, m)
    if len(lines) > 1 + l:
        raise FormatError(path, "trailing content after matrix rows", l + 2)
    return A


def write_point(path, p: FixedRankPoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([f"{p.l} {p.m} {p.r}"] + _rows(p.U) + _rows(p.Z)) + "\n")


def read_point(path) -> FixedRankPoint:
    lines = _text_lines(path)
    if not lines:
        raise FormatError(path, "empty file")
    l, m, r = _ints(path, lines[0], 3, 1)
    U = _real_rows(path, lines, 1, l, r)
    Z = _real_rows(path, lines, 1 + l, m, r)
    return FixedRankPoint(U, Z)


def read_descriptor(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Duplicate keys are an error."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(path, "empty key", lineno)
        if key in out:
            raise FormatError(path, f"duplicate key {key!r}", lineno)
        out[key] = value
    return out


def write_descriptor(path, values: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
