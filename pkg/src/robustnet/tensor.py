"""Dense 2-D float64 matrices and the few operations the network needs.

A ``Matrix`` is a C-contiguous, read-only ``numpy.ndarray`` of dtype float64
with exactly two dimensions. Rows are instances, columns are attributes or
neurons.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes are not conformable."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Build a frozen float64 matrix from nested sequences or a flat list.

    With ``rows`` and ``cols`` given, ``values`` is read as a flat row-major
    sequence of length ``rows * cols``.
    """
    arr = np.array(values, dtype=np.float64)
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise ShapeError("rows and cols must be given together")
        if arr.size != rows * cols:
            raise ShapeError(f"{arr.size} values cannot fill a {rows}x{cols} matrix")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"expected 2-D data, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"matrix must be at least 1x1, got {arr.shape[0]}x{arr.shape[1]}")
    return _freeze(arr)


def _freeze(arr: np.ndarray) -> Matrix:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _check2d(a: Matrix, name: str) -> None:
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    _check2d(a, "a")
    _check2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return _freeze(a @ b)


def add_row_broadcast(a: Matrix, bias: Matrix) -> Matrix:
    """Add the single row ``bias`` to every row of ``a``."""
    _check2d(a, "a")
    _check2d(bias, "bias")
    if bias.shape[0] != 1 or bias.shape[1] != a.shape[1]:
        raise ShapeError(
            f"bias must be 1x{a.shape[1]}, got {bias.shape[0]}x{bias.shape[1]}"
        )
    return _freeze(a + bias)


def transpose(a: Matrix) -> Matrix:
    _check2d(a, "a")
    return _freeze(a.T)


def argmax_rows(a: Matrix) -> list[int]:
    """Column index of each row's maximum; ties go to the lowest index."""
    _check2d(a, "a")
    # np.argmax returns the first occurrence, which is the lowest index
    return np.argmax(a, axis=1).tolist()
