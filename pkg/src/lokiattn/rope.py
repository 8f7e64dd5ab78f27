"""Rotary position embeddings.

Uses the half-split pairing of the Llama family: element i rotates with
element i + D/2 by the angle position * base**(-2i/D). Rotations are
isometries, so per-pair and whole-vector norms are preserved.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

DEFAULT_BASE = 10000.0


@dataclass(frozen=True)
class RopeParams:
    head_dim: int
    base: float = DEFAULT_BASE

    def __post_init__(self):
        if self.head_dim <= 0 or self.head_dim % 2 != 0:
            raise ShapeError(f"head_dim must be a positive even number, got {self.head_dim}")
        if not self.base > 1.0:
            raise DomainError(f"base must exceed 1, got {self.base}")


def rope_angles(position: int, params: RopeParams) -> np.ndarray:
    """Per-pair rotation angles at one position (float64, length D/2)."""
    if position < 0:
        raise DomainError(f"position must be nonnegative, got {position}")
    half = params.head_dim // 2
    inv_freq = params.base ** (-np.arange(half, dtype=np.float64) * 2.0 / params.head_dim)
    return position * inv_freq


def rope_apply(v, position: int, params: RopeParams) -> np.ndarray:
    """Rotate one head vector to its position.

    Pair (v[i], v[i + D/2]) turns by theta_i = position * base**(-2i/D).
    Output dtype matches the input; the rotation itself runs in float64.
    """
    a = np.ascontiguousarray(v)
    if a.ndim != 1 or a.size != params.head_dim:
        raise ShapeError(f"vector length {a.shape} does not match head_dim {params.head_dim}")
    theta = rope_angles(position, params)
    cos, sin = np.cos(theta), np.sin(theta)
    half = params.head_dim // 2
    x = a.astype(np.float64, copy=False)
    lo, hi = x[:half], x[half:]
    out = np.empty_like(x)
    out[:half] = lo * cos - hi * sin
    out[half:] = lo * sin + hi * cos
    return out.astype(a.dtype if a.dtype.kind == "f" else np.float64)


def rope_apply_rows(mat, params: RopeParams, start_position: int = 0) -> np.ndarray:
    """Rotate every row of an SxD matrix, row i at position start_position + i."""
    m = np.ascontiguousarray(mat)
    if m.ndim != 2 or m.shape[1] != params.head_dim:
        raise ShapeError(f"matrix shape {m.shape} does not match head_dim {params.head_dim}")
    if start_position < 0:
        raise DomainError("start_position must be nonnegative")
    half = params.head_dim // 2
    inv_freq = params.base ** (-np.arange(half, dtype=np.float64) * 2.0 / params.head_dim)
    pos = np.arange(start_position, start_position + m.shape[0], dtype=np.float64)
    theta = np.outer(pos, inv_freq)
    cos, sin = np.cos(theta), np.sin(theta)
    x = m.astype(np.float64, copy=False)
    lo, hi = x[:, :half], x[:, half:]
    out = np.empty_like(x)
    out[:, :half] = lo * cos - hi * sin
    out[:, half:] = lo * sin + hi * cos
    return out.astype(m.dtype if m.dtype.kind == "f" else np.float64)
