"""Attention variants over a single head.

All functions take the query as a length-D vector and keys/values as SxD
float32 matrices, returning the output as a length-D vector:

  vanilla_attention     softmax(q K' / sqrt(D)) V over every token
  exact_topk_attention  rank by exact logits, attend to the top k only
  loki                  rank by leading-d logits in the PCA basis, then
                        attend exactly (full width) to the selected tokens
  pca_attn              attend to every token using only leading-d logits
  h2o_step              streaming eviction baseline with a recency +
                        heavy-hitter budget

The top-k paths renormalize softmax over the selected logits only, so for
a given selection their weights match exact attention restricted to that
set: token choice is the only approximation.

KvCache is append-only and single-writer; readers may hold the row views
between appends. Distinct heads share nothing and run in parallel freely.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .calibration import ProjectionSet
from .errors import BudgetError, DomainError, ShapeError
from .kernels import (
    dense_weighted_sum_kernel,
    gathered_score_kernel,
    gathered_weighted_sum_kernel,
    sliced_score_kernel,
)
from .linalg import softmax_row, topk_indices
from .rope import RopeParams, rope_apply


def resolve_fraction(fraction: float, total: int) -> int:
    """Turn a budget fraction into a count: clamp(round(f * total), 1, total)."""
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"budget fraction must lie in (0, 1], got {fraction}")
    if total < 1:
        raise BudgetError(f"total must be >= 1, got {total}")
    return int(np.clip(math.floor(fraction * total + 0.5), 1, total))


@dataclass(frozen=True)
class LokiConfig:
    """Budget fractions: k_f of cached tokens, d_f of the head dimension."""

    k_f: float
    d_f: float

    def __post_init__(self):
        for name in ("k_f", "d_f"):
            f = getattr(self, name)
            if not 0.0 < f <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {f}")

    def resolve(self, head_dim: int, seq_len: int):
        """Integer (d, k) for a concrete head dim and cache length."""
        return resolve_fraction(self.d_f, head_dim), resolve_fraction(self.k_f, seq_len)


class KvCache:
    """Append-only per-head cache of transformed keys and values.

    Rows are never reordered or dropped; ``keys``/``values`` expose
    read-only views of the first ``len(cache)`` rows.
    """

    def __init__(self, head_dim: int, capacity: int = 64):
        if head_dim < 1:
            raise ShapeError("head_dim must be >= 1")
        self.head_dim = head_dim
        self._keys = np.empty((max(capacity, 1), head_dim), dtype=np.float32)
        self._values = np.empty((max(capacity, 1), head_dim), dtype=np.float32)
        self._len = 0

    def __len__(self) -> int:
        return self._len

    @property
    def keys(self) -> np.ndarray:
        view = self._keys[: self._len]
        view.flags.writeable = False
        return view

    @property
    def values(self) -> np.ndarray:
        view = self._values[: self._len]
        view.flags.writeable = False
        return view

    def append(self, k_hat, v) -> None:
        k_hat = np.asarray(k_hat, dtype=np.float32).reshape(-1)
        v = np.asarray(v, dtype=np.float32).reshape(-1)
        if k_hat.shape != (self.head_dim,) or v.shape != (self.head_dim,):
            raise ShapeError(
                f"appended rows must have length {self.head_dim}, "
                f"got {k_hat.shape} and {v.shape}"
            )
        if self._len == self._keys.shape[0]:
            grown_k = np.empty((2 * self._len, self.head_dim), dtype=np.float32)
            grown_v = np.empty_like(grown_k)
            grown_k[: self._len] = self._keys[: self._len]
            grown_v[: self._len] = self._values[: self._len]
            self._keys, self._values = grown_k, grown_v
        self._keys[self._len] = k_hat
        self._values[self._len] = v
        self._len += 1


def cache_append(cache: KvCache, k_hat, v) -> KvCache:
    """Functional spelling of KvCache.append; returns the same cache."""
    cache.append(k_hat, v)
    return cache


def _check_qkv(q, K, V):
    q = np.ascontiguousarray(q, dtype=np.float32).reshape(-1)
    K = np.ascontiguousarray(K, dtype=np.float32)
    V = np.ascontiguousarray(V, dtype=np.float32)
    if K.ndim != 2 or V.ndim != 2:
        raise ShapeError("keys and values must be 2-D")
    if K.shape != V.shape:
        raise ShapeError(f"keys {K.shape} and values {V.shape} disagree")
    if K.shape[0] < 1:
        raise ShapeError("attention needs at least one cached token")
    if K.shape[1] != q.shape[0]:
        raise ShapeError(f"query dim {q.shape[0]} does not match key dim {K.shape[1]}")
    return q, K, V


def vanilla_attention(q, K, V):
    """Full attention: returns (output, softmax weights over all S tokens)."""
    q, K, V = _check_qkv(q, K, V)
    logits = (K @ q) / np.float32(math.sqrt(K.shape[1]))
    weights = softmax_row(logits)
    return weights @ V, weights


def exact_topk_attention(q, K, V, k: int):
    """Rank by exact logits, then attend to the chosen k tokens only.

    Softmax runs over the selected logits (scaled by sqrt(D)), so weights
    are the exact weights renormalized to the selection.
    """
    q, K, V = _check_qkv(q, K, V)
    logits = K @ q
    indices = topk_indices(logits, k)
    scaled = logits[indices] / np.float32(math.sqrt(K.shape[1]))
    weights = softmax_row(scaled)
    return weights @ V[indices], indices


@dataclass(frozen=True)
class LokiDiagnostics:
    indices: np.ndarray
    approx_scores: np.ndarray
    weights: np.ndarray


def loki_rank_and_attend(q_hat, K_hat, V, d: int, k: int):
    """Core of the reduced-dimension top-k step, over an existing cache.

    Ranking uses raw leading-d dot products (ranking is scale invariant, so
    no sqrt scaling is applied); the final softmax uses full-width
    transformed logits scaled by sqrt(D), evaluated only on the selected
    rows via the gather kernels.
    """
    q_hat, K_hat, V = _check_qkv(q_hat, K_hat, V)
    S, D = K_hat.shape
    if not 1 <= d <= D:
        raise BudgetError(f"d={d} outside [1, {D}]")
    if not 1 <= k <= S:
        raise BudgetError(f"k={k} outside [1, {S}]")
    approx = sliced_score_kernel(q_hat, K_hat, d)
    indices = topk_indices(approx, k)
    exact = gathered_score_kernel(q_hat, K_hat, indices) / np.float32(math.sqrt(D))
    weights = softmax_row(exact)
    out = gathered_weighted_sum_kernel(weights, V, indices)
    return out, LokiDiagnostics(indices=indices, approx_scores=approx, weights=weights)


def loki_attention(q, k_new, v_new, cache: KvCache, proj: ProjectionSet, cfg: LokiConfig):
    """One generation step: project, append, rank in leading-d, attend.

    ``q`` and ``k_new`` are this token's query/key in the same rotary stage
    the projection was built against; both are rotated into the PCA basis
    before the key enters the cache.
    """
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    k_new = np.asarray(k_new, dtype=np.float32).reshape(-1)
    if proj.head_dim != cache.head_dim:
        raise ShapeError(
            f"projection dim {proj.head_dim} does not match cache dim {cache.head_dim}"
        )
    q_hat = q @ proj.P
    k_hat = k_new @ proj.P
    cache.append(k_hat, v_new)
    d, k = cfg.resolve(cache.head_dim, len(cache))
    y, diag = loki_rank_and_attend(q_hat, cache.keys, cache.values, d, k)
    return y, diag


def pca_attn(q, K_hat_d, V, P_d):
    """Attend to every token using only leading-d coordinates.

    The cache stores just K_hat[:, :d]; logits are q_hat[:d] . K_hat[j,:d]
    scaled by sqrt(D) (the full head dimension, not d), and no selection
    happens. Kept as a baseline; truncation loses whatever key variance
    lives beyond d.
    """
    q = np.ascontiguousarray(q, dtype=np.float32).reshape(-1)
    K_hat_d = np.ascontiguousarray(K_hat_d, dtype=np.float32)
    V = np.ascontiguousarray(V, dtype=np.float32)
    P_d = np.ascontiguousarray(P_d, dtype=np.float32)
    if P_d.ndim != 2 or P_d.shape[0] != q.shape[0]:
        raise ShapeError(f"P_d shape {P_d.shape} does not match query dim {q.shape[0]}")
    d = P_d.shape[1]
    if K_hat_d.ndim != 2 or K_hat_d.shape[1] != d:
        raise ShapeError(f"reduced keys {K_hat_d.shape} do not match P_d width {d}")
    if V.ndim != 2 or V.shape[0] != K_hat_d.shape[0] or V.shape[0] < 1:
        raise ShapeError(f"values {V.shape} do not match keys {K_hat_d.shape}")
    D = P_d.shape[0]
    q_hat_d = q @ P_d
    logits = (K_hat_d @ q_hat_d) / np.float32(math.sqrt(D))
    weights = softmax_row(logits)
    return weights @ V


@dataclass
class H2oState:
    """Retained tokens of the eviction baseline, in original-position order.

    ``cumulative`` accrues each retained token's softmax mass across steps;
    evicted tokens are gone for good.
    """

    budget: int
    keys: np.ndarray
    values: np.ndarray
    positions: np.ndarray
    cumulative: np.ndarray
    next_position: int = 0

    @classmethod
    def new(cls, budget: int, head_dim: int) -> "H2oState":
        if budget < 2:
            raise BudgetError(f"h2o budget must be >= 2, got {budget}")
        return cls(
            budget=budget,
            keys=np.empty((0, head_dim), dtype=np.float32),
            values=np.empty((0, head_dim), dtype=np.float32),
            positions=np.empty(0, dtype=np.int64),
            cumulative=np.empty(0, dtype=np.float64),
        )

    @property
    def retained(self) -> np.ndarray:
        return self.positions.copy()


def h2o_step(state: H2oState, q, new_k, new_v):
    """Attend over retained tokens plus the newcomer, then enforce the budget.

    The budget splits into ceil(budget/2) unconditionally-kept recent tokens
    and heavy-hitter slots filled by highest cumulative attention mass (ties
    to the lower position). Returns (output, state); the state is updated in
    place.
    """
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    new_k = np.asarray(new_k, dtype=np.float32).reshape(-1)
    new_v = np.asarray(new_v, dtype=np.float32).reshape(-1)
    D = q.shape[0]
    if new_k.shape != (D,) or new_v.shape != (D,):
        raise ShapeError("query, key, and value must share one head dim")

    keys = np.vstack([state.keys, new_k[None, :]])
    values = np.vstack([state.values, new_v[None, :]])
    positions = np.append(state.positions, state.next_position)
    state.next_position += 1

    logits = (keys @ q) / np.float32(math.sqrt(D))
    weights = softmax_row(logits)
    out = weights @ values
    cumulative = np.append(state.cumulative, 0.0) + weights.astype(np.float64)

    n = positions.shape[0]
    if n > state.budget:
        recent_slots = (state.budget + 1) // 2
        heavy_slots = state.budget - recent_slots
        # positions are ascending by construction, so recency = the tail
        older = np.arange(n - recent_slots)
        order = np.argsort(-cumulative[older], kind="stable")  # ties: lower position
        keep = np.concatenate([older[order[:heavy_slots]], np.arange(n - recent_slots, n)])
        keep.sort()
        keys, values = keys[keep], values[keep]
        positions, cumulative = positions[keep], cumulative[keep]

    state.keys, state.values = keys, values
    state.positions, state.cumulative = positions, cumulative
    return out, state


class RotaryComposition(str, Enum):
    """How a calibrated P composes with rotary application at inference."""

    ROTATE_THEN_PROJECT = "rotate-then-project"
    PROJECT_THEN_ROTATE = "project-then-rotate"


def transform_step(
    q_raw,
    k_raw,
    position: int,
    proj: ProjectionSet,
    rope_params: RopeParams,
    mode: RotaryComposition = RotaryComposition.ROTATE_THEN_PROJECT,
):
    """Produce (q_hat, k_hat) for one raw (pre-rotary) query/key pair.

    The default applies rotary embeddings first and then the calibrated
    rotation P, which is valid for P calibrated on either rotary stage. The
    alternative order exists behind the flag for comparison.
    """
    q_raw = np.asarray(q_raw, dtype=np.float32).reshape(-1)
    k_raw = np.asarray(k_raw, dtype=np.float32).reshape(-1)
    if mode == RotaryComposition.ROTATE_THEN_PROJECT:
        q_t = rope_apply(q_raw, position, rope_params)
        k_t = rope_apply(k_raw, position, rope_params)
        return q_t @ proj.P, k_t @ proj.P
    q_p = np.asarray(q_raw @ proj.P, dtype=np.float32)
    k_p = np.asarray(k_raw @ proj.P, dtype=np.float32)
    return (
        rope_apply(q_p, position, rope_params),
        rope_apply(k_p, position, rope_params),
    )
