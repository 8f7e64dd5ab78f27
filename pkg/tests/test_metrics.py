import numpy as np
import pytest

from lokiattn.calibration import build_projection
from lokiattn.dataio import SyntheticSpec, gen_synthetic_keys
from lokiattn.errors import DomainError, ShapeError
from lokiattn.metrics import (
    agreement_sweep,
    exact_speedup,
    jaccard_topk,
    score_error,
    theoretical_speedup,
)


def test_jaccard_examples():
    assert jaccard_topk([1, 2, 3], [1, 2, 3]) == 1.0
    assert jaccard_topk([0, 1], [2, 3]) == 0.0
    assert jaccard_topk([1, 2, 3], [2, 3, 4]) == 0.5


def test_jaccard_empty_convention_and_symmetry():
    assert jaccard_topk([], []) == 1.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.choice(30, size=rng.integers(0, 10), replace=False)
        b = rng.choice(30, size=rng.integers(0, 10), replace=False)
        assert jaccard_topk(a, b) == jaccard_topk(b, a)


def test_theoretical_speedup_values():
    assert theoretical_speedup(0.25, 0.25) == pytest.approx(8.0 / 3.0, abs=1e-12)
    assert theoretical_speedup(1.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-12)
    with pytest.raises(DomainError):
        theoretical_speedup(0.0, 0.5)
    with pytest.raises(DomainError):
        theoretical_speedup(0.5, -1.0)


def test_exact_speedup_value():
    # 2*128*4096 / (32*4096 + 2*128*1024 + 2*128^2) = 1048576/425984
    assert exact_speedup(128, 4096, 32, 1024) == pytest.approx(1048576 / 425984, abs=1e-12)
    with pytest.raises(DomainError):
        exact_speedup(128, 4096, 129, 1024)
    with pytest.raises(DomainError):
        exact_speedup(0, 4096, 1, 1)


def test_speedup_models_converge_as_s_grows():
    d_f, k_f = 0.25, 0.25
    approx = theoretical_speedup(d_f, k_f)
    gaps = []
    for S in (512, 1024, 2048, 4096, 8192, 16384):
        D = 128
        gaps.append(abs(approx - exact_speedup(D, S, int(d_f * D), int(k_f * S))))
    assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))


def test_score_error_examples():
    assert score_error([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)
    max_abs, rel = score_error([1.0, 0.0], [0.0, 0.0])
    assert max_abs == 1.0 and rel == 1.0
    with pytest.raises(ShapeError):
        score_error([1.0], [1.0, 2.0])


def test_score_error_planted_truncation():
    # rank-r keys scored with d >= r leave only noise behind
    keys = gen_synthetic_keys(
        SyntheticSpec(seq_len=512, head_dim=32, intrinsic_rank=4, noise_sigma=1e-4, seed=1)
    )
    proj = build_projection(keys, "post")
    rng = np.random.default_rng(2)
    q = rng.standard_normal(32).astype(np.float32)
    q_hat = np.asarray(q @ proj.P, np.float64)
    K_hat = (keys @ proj.P).astype(np.float64)
    exact = K_hat @ q_hat
    approx = K_hat[:, :8] @ q_hat[:8]
    _, rel = score_error(exact, approx)
    assert rel <= 1e-3


def sweep_setup(seed=3, S=256, D=32, rank=8, sigma=1e-3, n_queries=40):
    keys = gen_synthetic_keys(
        SyntheticSpec(seq_len=S, head_dim=D, intrinsic_rank=rank, noise_sigma=sigma, seed=seed)
    )
    proj = build_projection(keys, "post")
    rng = np.random.default_rng(seed + 1)
    queries = rng.standard_normal((n_queries, D)).astype(np.float32)
    values = rng.standard_normal((S, D)).astype(np.float32)
    return keys, values, queries, proj


def test_agreement_full_dim_column_is_one():
    keys, values, queries, proj = sweep_setup()
    stats = agreement_sweep(keys, values, queries, proj, [0.125, 0.5], [1.0])
    for cell in stats.cells:
        assert cell.mean_jaccard == 1.0
        assert cell.min_jaccard == 1.0


def test_agreement_full_budget_row_is_one():
    keys, values, queries, proj = sweep_setup(seed=4)
    stats = agreement_sweep(keys, values, queries, proj, [1.0], [0.125, 0.5])
    for cell in stats.cells:
        assert cell.mean_jaccard == 1.0


def test_agreement_planted_rank_high_fidelity():
    keys, values, queries, proj = sweep_setup(seed=5, S=512, D=64, rank=8, n_queries=60)
    stats = agreement_sweep(keys, values, queries, proj, [0.25], [0.25])
    assert stats.cell(0.25, 0.25).mean_jaccard >= 0.99


def test_agreement_monotone_in_d():
    keys, values, queries, proj = sweep_setup(seed=6, S=512, D=64, rank=16, n_queries=200)
    stats = agreement_sweep(keys, values, queries, proj, [0.25], [0.125, 0.25, 0.5, 1.0])
    means = [stats.cell(0.25, df).mean_jaccard for df in (0.125, 0.25, 0.5, 1.0)]
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def test_agreement_tsv_format():
    keys, values, queries, proj = sweep_setup(seed=7, n_queries=5)
    stats = agreement_sweep(keys, values, queries, proj, [0.5], [0.5])
    lines = stats.to_tsv().strip().split("\n")
    assert lines[0] == "k_f\td_f\tmean_jaccard\tmin_jaccard"
    assert len(lines) == 2


def test_agreement_validation():
    keys, values, queries, proj = sweep_setup(seed=8, n_queries=2)
    with pytest.raises(DomainError):
        agreement_sweep(keys, values, queries, proj, [], [0.5])
    with pytest.raises(ShapeError):
        agreement_sweep(keys, values, np.empty((0, keys.shape[1]), np.float32), proj, [0.5], [0.5])
