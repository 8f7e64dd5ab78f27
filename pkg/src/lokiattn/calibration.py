"""Offline PCA over collected keys.

Calibration computes a centered covariance per (layer, head), solves the
symmetric eigenproblem, and packages the full orthogonal eigenbasis P with
its normalized spectrum. At inference P is applied as a pure rotation (no
mean shift): an orthogonal transform leaves q K' unchanged, which is the
identity the whole method rests on, while centering only influences which
directions get ranked first.

The explained-variance metric rank_at_v(lambda, v) is the smallest d whose
leading eigenvalues sum to at least v percent; reports aggregate it per
head, per layer, and model-wide.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateCalibrationError,
    DomainError,
    InsufficientDataError,
    ShapeError,
)

logger = logging.getLogger(__name__)

ROTARY_STAGES = ("pre", "post")


@dataclass(frozen=True)
class ProjectionSet:
    """Per-(layer, head) orthogonal projection and normalized spectrum.

    P's columns are principal directions in descending eigenvalue order;
    eigenvalues are normalized to sum 1.
    """

    layer: int
    head: int
    P: np.ndarray
    eigenvalues: np.ndarray
    rotary_stage: str

    @property
    def head_dim(self) -> int:
        return self.P.shape[0]


def compute_covariance(keys, center: bool = True) -> np.ndarray:
    """Sample covariance (1/(S-1)) K'K of an SxD key matrix, float64.

    With ``center`` the mean key is subtracted first (standard PCA);
    without it the second-moment matrix is returned.
    """
    k = np.asarray(keys, dtype=np.float64)
    if k.ndim != 2:
        raise ShapeError(f"keys must be 2-D, got ndim={k.ndim}")
    s = k.shape[0]
    if s < 2:
        raise InsufficientDataError(f"need at least 2 key rows, got {s}")
    if center:
        k = k - k.mean(axis=0)
    cov = (k.T @ k) / (s - 1)
    # exact symmetry; BLAS rounding can leave ~1e-17 asymmetry
    return (cov + cov.T) * 0.5


def eigh_symmetric(c):
    """Eigen-pairs of a symmetric matrix, descending, with canonical signs.

    Returns (eigenvalues, eigenvectors-as-columns), both float64. Backed by
    LAPACK via numpy; ties keep LAPACK's original order (stable sort) and
    each eigenvector is sign-fixed so its largest-magnitude entry is
    positive, making calibration bit-reproducible.
    """
    a = np.asarray(c, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    asym = float(np.abs(a - a.T).max())
    if asym > 1e-5 * scale:
        raise DomainError(f"matrix is not symmetric: max asymmetry {asym:.3e}")
    vals, vecs = np.linalg.eigh((a + a.T) * 0.5)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    picks = np.abs(vecs).argmax(axis=0)
    signs = np.where(vecs[picks, np.arange(vecs.shape[1])] < 0.0, -1.0, 1.0)
    return vals, vecs * signs


def build_projection(keys, rotary_stage: str, layer: int = 0, head: int = 0) -> ProjectionSet:
    """Calibrate a ProjectionSet from an SxD key matrix.

    Covariance is centered; the stored eigenvalues are clipped at zero and
    normalized to sum 1. Zero-variance directions simply come back with
    eigenvalue 0 and an arbitrary orthonormal completion, keeping P square.
    """
    if rotary_stage not in ROTARY_STAGES:
        raise DomainError(f"rotary_stage must be one of {ROTARY_STAGES}, got {rotary_stage!r}")
    k = np.asarray(keys, dtype=np.float64)
    if k.ndim != 2:
        raise ShapeError(f"keys must be 2-D, got ndim={k.ndim}")
    if not np.isfinite(k).all():
        raise DomainError("keys contain NaN or Inf")
    s, d = k.shape
    if s < d:
        logger.warning("calibrating with S=%d < D=%d rows; spectrum will be rank-deficient", s, d)
    cov = compute_covariance(k, center=True)
    vals, vecs = eigh_symmetric(cov)
    vals = np.clip(vals, 0.0, None)
    total = float(vals.sum())
    if total <= 0.0:
        raise DegenerateCalibrationError("keys carry no variance in any direction")
    return ProjectionSet(
        layer=layer,
        head=head,
        P=np.ascontiguousarray(vecs, dtype=np.float32),
        eigenvalues=(vals / total).astype(np.float32),
        rotary_stage=rotary_stage,
    )


def rank_at_v(eigenvalues, v) -> int:
    """Smallest d whose leading normalized eigenvalues sum to >= v/100.

    ``eigenvalues`` must be descending and normalized (sum 1 within 1e-6).
    At v=100 the answer is the last index at which the cumulative sum still
    grows, i.e. trailing exact zeros do not inflate the rank.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64).reshape(-1)
    if lam.size == 0:
        raise DomainError("empty spectrum")
    if not 0.0 < v <= 100.0:
        raise DomainError(f"v must lie in (0, 100], got {v}")
    if np.any(lam < -1e-9) or np.any(np.diff(lam) > 1e-9):
        raise DomainError("eigenvalues must be nonnegative and descending")
    total = float(lam.sum())
    if abs(total - 1.0) > 1e-6:
        raise DomainError(f"eigenvalues must sum to 1 (+-1e-6), got {total}")
    cum = np.cumsum(lam)
    if v >= 100.0:
        target = total * (1.0 - 1e-12)
    else:
        target = v / 100.0 - 1e-9
    return int(np.searchsorted(cum, target) + 1)


@dataclass(frozen=True)
class RankEntry:
    layer: int
    head: int
    stage: str
    v: float
    rank: int


@dataclass
class RankReport:
    """Rank@v values per (layer, head, stage) plus aggregates."""

    head_dim: int
    v_list: tuple
    entries: list = field(default_factory=list)

    def layer_averages(self):
        """Mean rank across heads, keyed by (layer, stage, v)."""
        buckets = {}
        for e in self.entries:
            buckets.setdefault((e.layer, e.stage, e.v), []).append(e.rank)
        return {key: float(np.mean(ranks)) for key, ranks in sorted(buckets.items())}

    def model_averages(self):
        """Mean rank across all heads of all layers, keyed by (stage, v)."""
        buckets = {}
        for e in self.entries:
            buckets.setdefault((e.stage, e.v), []).append(e.rank)
        return {key: float(np.mean(ranks)) for key, ranks in sorted(buckets.items())}

    def to_tsv(self) -> str:
        lines = ["layer\thead\tstage\tv\trank"]
        for e in sorted(self.entries, key=lambda e: (e.layer, e.head, e.stage, e.v)):
            lines.append(f"{e.layer}\t{e.head}\t{e.stage}\t{_fmt_v(e.v)}\t{e.rank}")
        for (layer, stage, v), mean in self.layer_averages().items():
            lines.append(f"#layer-avg\t{layer}\t{stage}\t{_fmt_v(v)}\t{mean:.4f}")
        for (stage, v), mean in self.model_averages().items():
            lines.append(f"#model-avg\t{stage}\t{_fmt_v(v)}\t{mean:.4f}")
        return "\n".join(lines) + "\n"


def _fmt_v(v) -> str:
    return f"{v:g}"


def rank_report(key_sets, v_list) -> RankReport:
    """Build a RankReport from (layer, head, stage, keys) tuples.

    Calibration errors propagate with the offending (layer, head) attached
    to the message.
    """
    key_sets = list(key_sets)
    if not key_sets:
        raise DomainError("rank_report needs at least one (layer, head) key set")
    v_list = tuple(float(v) for v in v_list)
    if not v_list:
        raise DomainError("rank_report needs at least one v value")
    head_dim = int(np.asarray(key_sets[0][3]).shape[1])
    report = RankReport(head_dim=head_dim, v_list=v_list)
    for layer, head, stage, keys in key_sets:
        try:
            proj = build_projection(keys, stage, layer=layer, head=head)
            for v in v_list:
                report.entries.append(
                    RankEntry(layer, head, stage, v, rank_at_v(proj.eigenvalues, v))
                )
        except Exception as exc:
            raise type(exc)(f"layer {layer} head {head}: {exc}") from exc
    return report


def select_d_per_layer(report: RankReport, variance_threshold, stage: str = None):
    """Per-layer reduced dimensionality from head-averaged Rank@threshold.

    d_l = clamp(round(mean_head Rank@threshold), 1, D). Returns
    ({layer: d_l}, compression_ratio) with compression ratio
    sum(d_l) / (L * D).
    """
    if not 0.0 < variance_threshold <= 100.0:
        raise DomainError(f"variance_threshold must lie in (0, 100], got {variance_threshold}")
    if not report.entries:
        raise DomainError("empty rank report")
    stages = sorted({e.stage for e in report.entries})
    if stage is None:
        if len(stages) > 1:
            raise DomainError(f"report holds stages {stages}; pass stage= explicitly")
        stage = stages[0]
    v = float(variance_threshold)
    averages = {
        (layer, st, vv): mean
        for (layer, st, vv), mean in report.layer_averages().items()
        if st == stage and vv == v
    }
    if not averages:
        raise DomainError(f"report has no entries for stage={stage!r}, v={v:g}")
    d_per_layer = {
        layer: int(np.clip(np.floor(mean + 0.5), 1, report.head_dim))
        for (layer, _, _), mean in averages.items()
    }
    ratio = float(sum(d_per_layer.values())) / (len(d_per_layer) * report.head_dim)
    return d_per_layer, ratio


def key_reconstruction_error(keys, P, d) -> float:
    """Frobenius error of reconstructing keys from their leading-d projection."""
    k = np.asarray(keys, dtype=np.float64)
    p = np.asarray(P, dtype=np.float64)
    if not 1 <= d <= p.shape[1]:
        raise DomainError(f"d={d} outside [1, {p.shape[1]}]")
    lead = p[:, :d]
    return float(np.linalg.norm(k - (k @ lead) @ lead.T))
