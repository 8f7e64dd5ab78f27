"""Minimal dense linear algebra on row-major numpy arrays.

Production paths run in float32; oracles and internal reductions use
float64. Matrices are plain 2-D C-contiguous ``np.ndarray``; there is no
wrapper class. ``matmul`` is backed by numpy (BLAS), which is run-to-run
deterministic for a fixed build and thread count.

All functions are pure and safe to call concurrently.
"""

import numpy as np

from .errors import BudgetError, ShapeError

F32 = np.float32
F64 = np.float64


def as_matrix(data, dtype=F32, name="matrix") -> np.ndarray:
    """Coerce to a 2-D C-contiguous array of the given dtype."""
    a = np.ascontiguousarray(data, dtype=dtype)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def as_vector(data, dtype=F32, name="vector") -> np.ndarray:
    """Coerce to a 1-D contiguous array, accepting 1xN / Nx1 inputs."""
    a = np.ascontiguousarray(data, dtype=dtype)
    if a.ndim == 2 and 1 in a.shape:
        a = a.reshape(-1)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape={a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit inner-dimension checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D operand, got ndim={a.ndim}")
    return np.ascontiguousarray(a.T)


def slice_cols(a, d) -> np.ndarray:
    """Leading-column view a[:, :d] (no copy)."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError("slice_cols expects a 2-D operand")
    if not 1 <= d <= a.shape[1]:
        raise BudgetError(f"column count {d} outside [1, {a.shape[1]}]")
    return a[:, :d]


def take_rows(a, indices) -> np.ndarray:
    """Gathered copy of the selected rows."""
    a = np.asarray(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.ndim != 2:
        raise ShapeError("take_rows expects a 2-D operand")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"row index outside [0, {a.shape[0]})")
    return a[idx]


def softmax_row(scores) -> np.ndarray:
    """Numerically stable softmax of a single score vector.

    Max-subtraction plus float64 accumulation keeps the output sum within
    1e-6 of 1 regardless of input scale; the result is cast back to the
    input's float width.
    """
    s = np.asarray(scores)
    if s.ndim == 2 and 1 in s.shape:
        s = s.reshape(-1)
    if s.ndim != 1 or s.size == 0:
        raise ShapeError(f"softmax_row expects a nonempty vector, got shape={np.shape(scores)}")
    z = s.astype(F64)  # private copy; transformed in place below
    z -= z.max()
    np.exp(z, out=z)
    z /= z.sum()
    return z.astype(s.dtype if s.dtype in (F32, F64) else F32)


def topk_indices(scores, k) -> np.ndarray:
    """Indices of the k largest scores, ascending.

    Ties at the selection boundary are broken toward the lower index, so
    the result is a deterministic function of the input.
    """
    s = as_vector(scores, dtype=np.asarray(scores).dtype, name="scores")
    n = s.size
    if not 1 <= k <= n:
        raise BudgetError(f"k={k} outside [1, {n}]")
    if k == n:
        return np.arange(n, dtype=np.int64)
    # value partition finds the k-th largest score (the selection
    # threshold); indices strictly above it are all in, and ties exactly at
    # the threshold are filled lowest-index-first
    thresh = np.partition(s, n - k)[n - k]
    greater = np.flatnonzero(s > thresh)
    need = k - greater.size
    equal = np.flatnonzero(s == thresh)[:need]
    if greater.size == 0:
        return equal.astype(np.int64, copy=False)
    sel = np.concatenate([greater, equal])
    sel.sort()
    return sel.astype(np.int64, copy=False)


def canonicalize_indices(indices, n) -> np.ndarray:
    """Validate an index list against row count n; return it ascending.

    Rejects duplicates and out-of-range entries. Already-ascending input
    (the common case: topk_indices output) is verified in one pass and
    returned without copying.
    """
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        return idx
    ascending = not np.any(idx[1:] <= idx[:-1])
    if not ascending:
        idx = np.sort(idx)
        if np.any(idx[1:] == idx[:-1]):
            raise ShapeError("duplicate indices")
    if idx[0] < 0 or idx[-1] >= n:
        raise IndexError(f"index outside [0, {n})")
    return idx
