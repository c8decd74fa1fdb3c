"""Dense real linear algebra shared by the problem oracles, engine, and certifiers.

Everything works on float64 numpy arrays at desk scale. The constructors
validate shape and finiteness once, at the boundary; the operations are pure,
so repeated evaluation on identical inputs is bit-identical and values can be
shared freely across threads.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "FileFormatError",
    "as_vector",
    "as_matrix",
    "l1_norm",
    "frobenius_norm",
    "max_abs",
    "sign_matrix",
    "matmul",
    "transpose",
    "axpy",
    "dot",
    "read_matrix_csv",
    "write_matrix_csv",
    "format_float",
]


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class FileFormatError(ValueError):
    """A data file does not conform to its expected format."""


def as_vector(entries) -> np.ndarray:
    """Validate and copy `entries` into a 1-d float64 vector.

    Requires positive length and finite entries.
    """
    v = np.array(entries, dtype=np.float64, copy=True)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got ndim={v.ndim}")
    if v.size == 0:
        raise ShapeError("vector must have positive length")
    if not np.isfinite(v).all():
        raise ValueError("vector entries must be finite")
    return v


def as_matrix(entries) -> np.ndarray:
    """Validate and copy `entries` into a 2-d float64 matrix.

    Requires at least one row and one column and finite entries.
    """
    a = np.array(entries, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"matrix must be at least 1x1, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return a


def l1_norm(a: np.ndarray) -> float:
    """Entrywise l1 norm: sum of absolute values."""
    return float(np.abs(a).sum())


def frobenius_norm(a: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    return float(np.sqrt((a * a).sum()))


def max_abs(a: np.ndarray) -> float:
    """Entrywise max-absolute-value (the dual norm of the entrywise l1)."""
    return float(np.abs(a).max())


def sign_matrix(a: np.ndarray, tie: float = 0.0) -> np.ndarray:
    """Entrywise sign with a chosen value at exact zeros.

    Returns +1 where a > 0, -1 where a < 0, and `tie` where a == 0. The tie
    value must lie in [-1, 1], the valid selection range for the sign of zero.
    """
    if not -1.0 <= tie <= 1.0:
        raise ValueError(f"tie value must lie in [-1, 1], got {tie}")
    s = np.sign(a)
    if tie != 0.0:
        s = np.where(a == 0.0, tie, s)
    return s


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with shape checking."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul requires 2-d operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"incompatible shapes for matmul: {a.shape} @ {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    """Matrix transpose, returned as a fresh array."""
    if a.ndim != 2:
        raise ShapeError("transpose requires a 2-d operand")
    return a.T.copy()


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y for same-shape arrays."""
    if x.shape != y.shape:
        raise ShapeError(f"axpy operands must share a shape: {x.shape} vs {y.shape}")
    return alpha * x + y


def dot(x: np.ndarray, y: np.ndarray) -> float:
    """Inner product of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"dot requires equal-length vectors: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def format_float(v: float) -> str:
    """Shortest decimal representation that round-trips to the same float64."""
    return repr(float(v))


def read_matrix_csv(path) -> np.ndarray:
    """Read a matrix from CSV: one row per line, comma-separated, no header.

    Rejects ragged rows, empty files, and non-finite entries.
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                if rows:
                    continue  # tolerate trailing blank lines only
                raise FileFormatError(f"{path}: blank line {lineno} before any data")
            try:
                row = [float(cell) for cell in line.split(",")]
            except ValueError as exc:
                raise FileFormatError(f"{path}: bad number on line {lineno}: {exc}") from None
            if rows and len(row) != len(rows[0]):
                raise FileFormatError(
                    f"{path}: ragged row on line {lineno}: "
                    f"expected {len(rows[0])} entries, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    try:
        return as_matrix(rows)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def write_matrix_csv(path, a: np.ndarray) -> None:
    """Write a matrix as CSV with round-trip float formatting."""
    a = as_matrix(a)
    with open(path, "w", encoding="utf-8") as fh:
        for row in a:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")
