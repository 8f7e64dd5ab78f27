"""Quantitative comparisons between attention variants.

Covers top-k set agreement (Jaccard), score/output error norms, the
analytic speedup model, and the agreement sweep over budget grids.
"""

from dataclasses import dataclass

import numpy as np

from .attention import LokiConfig
from .errors import DomainError, ShapeError
from .kernels import sliced_score_kernel
from .linalg import topk_indices


def jaccard_topk(a, b) -> float:
    """|a & b| / |a | b| between two selected index sets.

    Two empty sets agree vacuously (1.0); that case never arises for valid
    budgets but pins the edge.
    """
    sa, sb = set(np.asarray(a, dtype=np.int64).tolist()), set(np.asarray(b, dtype=np.int64).tolist())
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def theoretical_speedup(d_f: float, k_f: float) -> float:
    """Large-S speedup model 1 / (d_f/2 + k_f)."""
    for name, f in (("d_f", d_f), ("k_f", k_f)):
        if not 0.0 < f <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1], got {f}")
    return 1.0 / (d_f / 2.0 + k_f)


def exact_speedup(D: int, S: int, d: int, k: int) -> float:
    """Exact operation-count ratio 2DS / (dS + 2Dk + 2D^2)."""
    if min(D, S, d, k) < 1:
        raise DomainError("all sizes must be positive")
    if d > D or k > S:
        raise DomainError(f"need d <= D and k <= S, got d={d}, D={D}, k={k}, S={S}")
    return (2.0 * D * S) / (d * S + 2.0 * D * k + 2.0 * D * D)


def score_error(exact, approx):
    """(max absolute error, relative L2 error) between two score vectors."""
    e = np.asarray(exact, dtype=np.float64).reshape(-1)
    a = np.asarray(approx, dtype=np.float64).reshape(-1)
    if e.shape != a.shape:
        raise ShapeError(f"length mismatch: {e.shape} vs {a.shape}")
    diff = e - a
    max_abs = float(np.abs(diff).max()) if diff.size else 0.0
    denom = float(np.linalg.norm(e))
    if denom == 0.0:
        rel = 0.0 if max_abs == 0.0 else float("inf")
    else:
        rel = float(np.linalg.norm(diff)) / denom
    return max_abs, rel


@dataclass(frozen=True)
class AgreementCell:
    k_f: float
    d_f: float
    mean_jaccard: float
    min_jaccard: float


@dataclass
class AgreementStats:
    """Mean/min Jaccard per (k_f, d_f) cell, averaged across queries."""

    cells: list

    def cell(self, k_f: float, d_f: float) -> AgreementCell:
        for c in self.cells:
            if c.k_f == k_f and c.d_f == d_f:
                return c
        raise KeyError((k_f, d_f))

    def to_tsv(self) -> str:
        lines = ["k_f\td_f\tmean_jaccard\tmin_jaccard"]
        for c in self.cells:
            lines.append(f"{c.k_f:g}\t{c.d_f:g}\t{c.mean_jaccard:.6f}\t{c.min_jaccard:.6f}")
        return "\n".join(lines) + "\n"


def agreement_sweep(keys, values, queries, proj, kf_grid, df_grid) -> AgreementStats:
    """Top-k set agreement between reduced-dimension and exact ranking.

    For every (k_f, d_f) cell: select with leading-d transformed scores and
    with exact full logits, then average the Jaccard similarity of the two
    index sets over all query rows.
    """
    K = np.ascontiguousarray(keys, dtype=np.float32)
    V = np.ascontiguousarray(values, dtype=np.float32)
    Q = np.ascontiguousarray(queries, dtype=np.float32)
    if K.ndim != 2 or Q.ndim != 2 or K.shape[1] != Q.shape[1]:
        raise ShapeError(f"keys {K.shape} and queries {Q.shape} disagree")
    if V.shape != K.shape:
        raise ShapeError(f"values {V.shape} do not match keys {K.shape}")
    if Q.shape[0] < 1:
        raise ShapeError("need at least one query")
    kf_grid = [float(f) for f in kf_grid]
    df_grid = [float(f) for f in df_grid]
    if not kf_grid or not df_grid:
        raise DomainError("empty budget grid")

    S, D = K.shape
    K_hat = np.ascontiguousarray(K @ proj.P, dtype=np.float32)
    Q_hat = np.ascontiguousarray(Q @ proj.P, dtype=np.float32)
    exact_logits = Q @ K.T  # m x S

    cells = []
    for k_f in kf_grid:
        for d_f in df_grid:
            d, k = LokiConfig(k_f=k_f, d_f=d_f).resolve(D, S)
            approx_logits = sliced_score_kernel(Q_hat, K_hat, d)
            vals = [
                jaccard_topk(topk_indices(approx_logits[i], k), topk_indices(exact_logits[i], k))
                for i in range(Q.shape[0])
            ]
            cells.append(
                AgreementCell(
                    k_f=k_f,
                    d_f=d_f,
                    mean_jaccard=float(np.mean(vals)),
                    min_jaccard=float(np.min(vals)),
                )
            )
    return AgreementStats(cells=cells)
