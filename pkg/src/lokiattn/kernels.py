"""Gather-aware CPU matmul kernels.

These are the CPU analogs of fused GPU gather kernels: they read leading
column slices and selected rows of the KV-cache in place, never
materializing a dense copy of the touched submatrix. Work is tiled over
both output dimensions (queries x sequence), so a single-query call still
parallelizes across sequence tiles; edge tiles make any sequence length
legal, powers of two or not.

Determinism: every output element is owned by exactly one tile worker and
accumulated sequentially, so results are bit-identical across runs for a
fixed tile spec regardless of pool size or threading layer. Problems below
a work threshold skip the pool dispatch entirely; the accumulation order
per element is identical either way, and single-token decode steps are
dominated by dispatch latency otherwise.

The worker-pool size honors LOKI_THREADS (default: logical cores).
"""

import warnings
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from . import config
from .errors import BudgetError, ShapeError
from .linalg import canonicalize_indices

# numba probes TBB first and warns when the system TBB is too old before
# falling back to OpenMP; the fallback is fine, the noise is not
warnings.filterwarnings("ignore", message=".*TBB.*", category=numba.NumbaWarning)

_PARALLEL_WORK_THRESHOLD = 1 << 21  # multiply-adds below this skip the pool

_threads_applied = False


def _ensure_threads():
    global _threads_applied
    if not _threads_applied:
        limit = min(config.worker_threads(), numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(max(1, limit))
        _threads_applied = True


@njit(cache=True)
def _index_status(idx, n):
    """0 = strictly ascending and in range, 1 = not ascending, 2 = out of range."""
    if idx.shape[0] == 0:
        return 0
    if idx[0] < 0 or idx[idx.shape[0] - 1] >= n:
        return 2
    for j in range(1, idx.shape[0]):
        if idx[j] <= idx[j - 1]:
            return 1
        if idx[j] >= n:
            return 2
    return 0


def _canonical_indices(indices, n) -> np.ndarray:
    """Single-pass validation for the common already-sorted case."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        idx = idx.reshape(-1)
    status = _index_status(idx, n)
    if status == 0:
        return idx
    if status == 2:
        raise IndexError(f"index outside [0, {n})")
    return canonicalize_indices(idx, n)


@dataclass(frozen=True)
class TileSpec:
    """Tile sizes for the two output dimensions (queries m, sequence n)."""

    tile_m: int = 8
    tile_n: int = 256

    def __post_init__(self):
        if self.tile_m < 1 or self.tile_n < 1:
            raise ShapeError(f"tile sizes must be >= 1, got {self}")


DEFAULT_TILES = TileSpec()


@njit(cache=True, fastmath=True)
def _sliced_serial(Q, K, d, out):
    for i in range(Q.shape[0]):
        for j in range(K.shape[0]):
            acc = np.float32(0.0)
            for t in range(d):
                acc += Q[i, t] * K[j, t]
            out[i, j] = acc


@njit(parallel=True, cache=True, fastmath=True)
def _sliced_parallel(Q, K, d, tile_m, tile_n, out):
    m, n = Q.shape[0], K.shape[0]
    ntm = (m + tile_m - 1) // tile_m
    ntn = (n + tile_n - 1) // tile_n
    for tile in prange(ntm * ntn):
        i0 = (tile // ntn) * tile_m
        j0 = (tile % ntn) * tile_n
        i1 = min(i0 + tile_m, m)
        j1 = min(j0 + tile_n, n)
        for i in range(i0, i1):
            for j in range(j0, j1):
                acc = np.float32(0.0)
                for t in range(d):
                    acc += Q[i, t] * K[j, t]
                out[i, j] = acc


@njit(cache=True, fastmath=True)
def _gathered_serial(Q, K, idx, out):
    D = Q.shape[1]
    for i in range(Q.shape[0]):
        for j in range(idx.shape[0]):
            r = idx[j]
            acc = np.float32(0.0)
            for t in range(D):
                acc += Q[i, t] * K[r, t]
            out[i, j] = acc


@njit(parallel=True, cache=True, fastmath=True)
def _gathered_parallel(Q, K, idx, tile_m, tile_n, out):
    m, n = Q.shape[0], idx.shape[0]
    D = Q.shape[1]
    ntm = (m + tile_m - 1) // tile_m
    ntn = (n + tile_n - 1) // tile_n
    for tile in prange(ntm * ntn):
        i0 = (tile // ntn) * tile_m
        j0 = (tile % ntn) * tile_n
        i1 = min(i0 + tile_m, m)
        j1 = min(j0 + tile_n, n)
        for i in range(i0, i1):
            for j in range(j0, j1):
                r = idx[j]
                acc = np.float32(0.0)
                for t in range(D):
                    acc += Q[i, t] * K[r, t]
                out[i, j] = acc


@njit(cache=True, fastmath=True)
def _wsum_gathered_serial(w, V, idx, out):
    D = V.shape[1]
    for t in range(D):
        out[t] = np.float32(0.0)
    for j in range(idx.shape[0]):
        r = idx[j]
        wj = w[j]
        for t in range(D):
            out[t] += wj * V[r, t]


@njit(parallel=True, cache=True, fastmath=True)
def _wsum_gathered_parallel(w, V, idx, tile_n, out):
    n, D = idx.shape[0], V.shape[1]
    ntn = (n + tile_n - 1) // tile_n
    partial = np.zeros((ntn, D), dtype=np.float32)
    for tile in prange(ntn):
        j0 = tile * tile_n
        j1 = min(j0 + tile_n, n)
        for j in range(j0, j1):
            r = idx[j]
            wj = w[j]
            for t in range(D):
                partial[tile, t] += wj * V[r, t]
    # fixed tile order keeps the reduction deterministic for any pool size
    for t in range(D):
        acc = np.float32(0.0)
        for tile in range(ntn):
            acc += partial[tile, t]
        out[t] = acc


@njit(cache=True, fastmath=True)
def _wsum_dense_serial(w, V, out):
    D = V.shape[1]
    for t in range(D):
        out[t] = np.float32(0.0)
    for j in range(V.shape[0]):
        wj = w[j]
        for t in range(D):
            out[t] += wj * V[j, t]


@njit(parallel=True, cache=True, fastmath=True)
def _wsum_dense_parallel(w, V, tile_n, out):
    n, D = V.shape[0], V.shape[1]
    ntn = (n + tile_n - 1) // tile_n
    partial = np.zeros((ntn, D), dtype=np.float32)
    for tile in prange(ntn):
        j0 = tile * tile_n
        j1 = min(j0 + tile_n, n)
        for j in range(j0, j1):
            wj = w[j]
            for t in range(D):
                partial[tile, t] += wj * V[j, t]
    for t in range(D):
        acc = np.float32(0.0)
        for tile in range(ntn):
            acc += partial[tile, t]
        out[t] = acc


def _as_query_block(q_hat):
    q = np.ascontiguousarray(q_hat, dtype=np.float32)
    if q.ndim == 1:
        return q.reshape(1, -1), True
    if q.ndim == 2:
        return q, False
    raise ShapeError(f"query must be 1-D or 2-D, got ndim={q.ndim}")


def sliced_score_kernel(q_hat, K_hat, d, tiles: TileSpec = DEFAULT_TILES) -> np.ndarray:
    """Scores over the leading d feature columns: out[j] = sum_t<d q[t] K[j,t].

    Reads K in place; the only allocation is the output. A 2-D query block
    (m x D) yields an m x S score block.
    """
    _ensure_threads()
    q, squeeze = _as_query_block(q_hat)
    K = np.ascontiguousarray(K_hat, dtype=np.float32)
    if K.ndim != 2 or K.shape[1] != q.shape[1]:
        raise ShapeError(f"key shape {K.shape} does not match query dim {q.shape[1]}")
    if not 1 <= d <= K.shape[1]:
        raise BudgetError(f"d={d} outside [1, {K.shape[1]}]")
    out = np.empty((q.shape[0], K.shape[0]), dtype=np.float32)
    if q.shape[0] * K.shape[0] * d >= _PARALLEL_WORK_THRESHOLD:
        _sliced_parallel(q, K, d, tiles.tile_m, tiles.tile_n, out)
    else:
        _sliced_serial(q, K, d, out)
    return out[0] if squeeze else out


def gathered_score_kernel(q_hat, K_hat, indices, tiles: TileSpec = DEFAULT_TILES) -> np.ndarray:
    """Full-width scores against the selected key rows only.

    out[j] = q . K[indices[j]]; rows are read in ascending index order and
    never copied out of the cache.
    """
    _ensure_threads()
    q, squeeze = _as_query_block(q_hat)
    K = np.ascontiguousarray(K_hat, dtype=np.float32)
    if K.ndim != 2 or K.shape[1] != q.shape[1]:
        raise ShapeError(f"key shape {K.shape} does not match query dim {q.shape[1]}")
    idx = _canonical_indices(indices, K.shape[0])
    out = np.empty((q.shape[0], idx.shape[0]), dtype=np.float32)
    if q.shape[0] * idx.shape[0] * K.shape[1] >= _PARALLEL_WORK_THRESHOLD:
        _gathered_parallel(q, K, idx, tiles.tile_m, tiles.tile_n, out)
    else:
        _gathered_serial(q, K, idx, out)
    return out[0] if squeeze else out


def gathered_weighted_sum_kernel(weights, V, indices, tiles: TileSpec = DEFAULT_TILES) -> np.ndarray:
    """out = sum_j weights[j] * V[indices[j]], without a gathered copy of V."""
    _ensure_threads()
    w = np.ascontiguousarray(weights, dtype=np.float32).reshape(-1)
    Vm = np.ascontiguousarray(V, dtype=np.float32)
    if Vm.ndim != 2:
        raise ShapeError("values must be 2-D")
    idx = _canonical_indices(indices, Vm.shape[0])
    if w.shape[0] != idx.shape[0]:
        raise ShapeError(f"{w.shape[0]} weights for {idx.shape[0]} indices")
    out = np.empty(Vm.shape[1], dtype=np.float32)
    if idx.shape[0] * Vm.shape[1] >= _PARALLEL_WORK_THRESHOLD:
        _wsum_gathered_parallel(w, Vm, idx, tiles.tile_n, out)
    else:
        _wsum_gathered_serial(w, Vm, idx, out)
    return out


def dense_weighted_sum_kernel(weights, V, tiles: TileSpec = DEFAULT_TILES) -> np.ndarray:
    """out = sum_j weights[j] * V[j] over every row (the vanilla path)."""
    _ensure_threads()
    w = np.ascontiguousarray(weights, dtype=np.float32).reshape(-1)
    Vm = np.ascontiguousarray(V, dtype=np.float32)
    if Vm.ndim != 2 or w.shape[0] != Vm.shape[0]:
        raise ShapeError(f"{w.shape[0]} weights for {Vm.shape} values")
    out = np.empty(Vm.shape[1], dtype=np.float32)
    if Vm.shape[0] * Vm.shape[1] >= _PARALLEL_WORK_THRESHOLD:
        _wsum_dense_parallel(w, Vm, tiles.tile_n, out)
    else:
        _wsum_dense_serial(w, Vm, out)
    return out


def gather_copy_scores_reference(q_hat, K_hat, indices) -> np.ndarray:
    """Copy-then-dense baseline: materializes K[indices] before the matvec.

    Exists for benchmarking against the fused kernel; numerically it is the
    same dot product up to summation order.
    """
    q, squeeze = _as_query_block(q_hat)
    K = np.ascontiguousarray(K_hat, dtype=np.float32)
    idx = _canonical_indices(indices, K.shape[0])
    dense = K[idx]  # the allocation the fused kernel avoids
    out = q @ dense.T
    return out[0] if squeeze else out
