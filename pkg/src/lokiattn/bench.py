"""Micro-benchmark harness for the attention step.

Times each phase of one generation step separately, per method:

  vanilla: scores (full matvec + softmax), weighted_sum
  loki:    projection (q P), approx_scores (leading-d matvec), topk,
           exact_scores (gathered matvec + softmax), weighted_sum (gathered)

Both methods run on the same gather-aware kernel infrastructure, so the
measured difference reflects the algorithm (fewer columns and rows
touched), not a library swap. Warmup iterations run first so JIT
compilation never lands inside a measurement; outputs feed a sink
accumulator so no phase can be optimized away.

Each trial repeats the step many times and records the per-phase MEDIAN
across those repetitions: shared machines intermittently freeze a core
for milliseconds, and a median per trial rejects those stalls while the
mean/std across trials still reflect genuine run-to-run spread. When
several configurations are measured together (run_bench_many), their
trials are interleaved round-robin so a slow patch on the machine hits
every configuration evenly instead of biasing one of them. The garbage
collector is paused during measurement (as timeit does) and restored
afterwards.
"""

import gc
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .attention import LokiConfig
from .errors import DomainError
from .kernels import gather_copy_scores_reference, gathered_score_kernel
from .linalg import softmax_row, topk_indices

LOKI_PHASES = ("projection", "approx_scores", "topk", "exact_scores", "weighted_sum")
VANILLA_PHASES = ("scores", "weighted_sum")
METHODS = ("vanilla", "loki")

_TARGET_TRIAL_NS = 8_000_000  # aim for ~8 ms of work per trial


@dataclass
class BenchRecord:
    """Per-phase wall-clock timings for one attention-step configuration.

    ``phase_ns[phase]`` holds one value per trial: that trial's median
    nanoseconds per step for the phase.
    """

    method: str
    S: int
    D: int
    k_f: float
    d_f: float
    d: int
    k: int
    trials: int
    warmup: int
    reps: int
    phase_ns: dict = field(default_factory=dict)  # phase -> per-trial ns/step
    sink: float = 0.0
    output: np.ndarray = None
    seed: int = 0

    @property
    def phases(self):
        return tuple(self.phase_ns.keys())

    def phase_mean(self, phase: str) -> float:
        return float(np.mean(self.phase_ns[phase]))

    def phase_std(self, phase: str) -> float:
        return float(np.std(self.phase_ns[phase], ddof=1))

    def total_mean(self) -> float:
        return float(sum(self.phase_mean(p) for p in self.phases))


def bench_inputs(S: int, D: int, seed: int = 0):
    """Deterministic benchmark tensors: q, K, V, and an orthogonal P."""
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(D).astype(np.float32)
    K = rng.standard_normal((S, D)).astype(np.float32)
    V = rng.standard_normal((S, D)).astype(np.float32)
    basis, r = np.linalg.qr(rng.standard_normal((D, D)))
    P = (basis * np.where(np.diag(r) < 0.0, -1.0, 1.0)).astype(np.float32)
    return q, K, V, P


# The step closures below call the compiled kernel bodies directly with
# buffers validated and allocated once at plan construction, so steady-state
# steps measure compute rather than per-call validation or the allocator.
# Serial/parallel variants are chosen by the same work threshold the public
# wrappers use; the arithmetic is identical to the production path.


def _build_loki_step(q, K_hat, V, P, d, k, tiles):
    S, D = K_hat.shape
    inv_sqrt = np.float32(1.0 / math.sqrt(D))
    out_S = np.empty((1, S), dtype=np.float32)
    out_k = np.empty((1, k), dtype=np.float32)
    out_D = np.empty(D, dtype=np.float32)
    par = kernels._PARALLEL_WORK_THRESHOLD

    if S * d >= par:
        approx = lambda Q2: kernels._sliced_parallel(Q2, K_hat, d, tiles.tile_m, tiles.tile_n, out_S)
    else:
        approx = lambda Q2: kernels._sliced_serial(Q2, K_hat, d, out_S)
    if k * D >= par:
        exact = lambda Q2, idx: kernels._gathered_parallel(Q2, K_hat, idx, tiles.tile_m, tiles.tile_n, out_k)
        wsum = lambda w, idx: kernels._wsum_gathered_parallel(w, V, idx, tiles.tile_n, out_D)
    else:
        exact = lambda Q2, idx: kernels._gathered_serial(Q2, K_hat, idx, out_k)
        wsum = lambda w, idx: kernels._wsum_gathered_serial(w, V, idx, out_D)

    def step(times):
        t0 = time.perf_counter_ns()
        q_hat = (q @ P).reshape(1, -1)
        t1 = time.perf_counter_ns()
        approx(q_hat)
        t2 = time.perf_counter_ns()
        idx = topk_indices(out_S[0], k)
        t3 = time.perf_counter_ns()
        exact(q_hat, idx)
        np.multiply(out_k, inv_sqrt, out=out_k)
        weights = softmax_row(out_k[0])
        t4 = time.perf_counter_ns()
        wsum(weights, idx)
        t5 = time.perf_counter_ns()
        times[0] = t1 - t0
        times[1] = t2 - t1
        times[2] = t3 - t2
        times[3] = t4 - t3
        times[4] = t5 - t4
        return out_D

    return step


def _build_vanilla_step(q, K, V, tiles):
    S, D = K.shape
    inv_sqrt = np.float32(1.0 / math.sqrt(D))
    q2 = np.ascontiguousarray(q.reshape(1, -1))
    out_S = np.empty((1, S), dtype=np.float32)
    out_D = np.empty(D, dtype=np.float32)
    par = kernels._PARALLEL_WORK_THRESHOLD

    if S * D >= par:
        scores = lambda: kernels._sliced_parallel(q2, K, D, tiles.tile_m, tiles.tile_n, out_S)
        wsum = lambda w: kernels._wsum_dense_parallel(w, V, tiles.tile_n, out_D)
    else:
        scores = lambda: kernels._sliced_serial(q2, K, D, out_S)
        wsum = lambda w: kernels._wsum_dense_serial(w, V, out_D)

    def step(times):
        t0 = time.perf_counter_ns()
        scores()
        np.multiply(out_S, inv_sqrt, out=out_S)
        weights = softmax_row(out_S[0])
        t1 = time.perf_counter_ns()
        wsum(weights)
        t2 = time.perf_counter_ns()
        times[0] = t1 - t0
        times[1] = t2 - t1
        return out_D

    return step


class _Plan:
    """One prepared configuration: data, step closure, and its record."""

    def __init__(self, method, S, D, k_f, d_f, trials, warmup, reps, seed):
        if method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {method!r}")
        if warmup < 1:
            raise DomainError(f"warmup must be >= 1, got {warmup}")
        if trials < 3:
            raise DomainError(f"trials must be >= 3, got {trials}")
        if S < 1 or D < 1:
            raise DomainError("S and D must be positive")
        d, k = LokiConfig(k_f=k_f, d_f=d_f).resolve(D, S)
        q, K, V, P = bench_inputs(S, D, seed)
        kernels._ensure_threads()
        tiles = kernels.DEFAULT_TILES
        if method == "loki":
            K_hat = np.ascontiguousarray(K @ P, dtype=np.float32)
            self.one_step = _build_loki_step(q, K_hat, V, P, d, k, tiles)
            phases = LOKI_PHASES
        else:
            self.one_step = _build_vanilla_step(q, K, V, tiles)
            phases = VANILLA_PHASES
        self.requested_reps = reps
        self.rep_ns = None
        self.record = BenchRecord(
            method=method, S=S, D=D, k_f=k_f, d_f=d_f, d=d, k=k,
            trials=trials, warmup=warmup, reps=0, seed=seed,
            phase_ns={p: [] for p in phases},
        )

    def warm_and_calibrate(self):
        scratch = np.empty(len(self.record.phases), dtype=np.int64)
        for _ in range(self.record.warmup):
            self.record.sink += float(self.one_step(scratch).sum())
        reps = self.requested_reps
        if reps is None:
            t0 = time.perf_counter_ns()
            self.one_step(scratch)
            self.one_step(scratch)
            step_ns = max((time.perf_counter_ns() - t0) // 2, 1)
            reps = int(np.clip(_TARGET_TRIAL_NS // step_ns, 5, 2000))
        self.record.reps = reps
        self.rep_ns = np.empty((reps, len(self.record.phases)), dtype=np.int64)

    def run_trial(self):
        y = None
        for r in range(self.record.reps):
            y = self.one_step(self.rep_ns[r])
            self.record.sink += float(y[0])
        trial = np.median(self.rep_ns, axis=0)
        for p, t in zip(self.record.phases, trial):
            self.record.phase_ns[p].append(float(t))
        self.record.output = y.copy()


def run_bench_many(specs, trials: int = 10, warmup: int = 2, reps: int = None,
                   seed: int = 0) -> list:
    """Measure several (method, S, D, k_f, d_f) configurations together.

    Trials are interleaved round-robin across the configurations so machine
    slowdowns spread evenly rather than biasing whichever configuration
    happened to be running. Returns one BenchRecord per spec, in order.
    """
    plans = [
        _Plan(sp["method"], sp["S"], sp["D"], sp.get("k_f", 1.0), sp.get("d_f", 1.0),
              trials, warmup, reps, seed)
        for sp in specs
    ]
    if not plans:
        raise DomainError("run_bench_many needs at least one configuration")
    for plan in plans:
        plan.warm_and_calibrate()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(trials):
            for plan in plans:
                plan.run_trial()
    finally:
        if gc_was_enabled:
            gc.enable()
    return [plan.record for plan in plans]


def run_bench(
    method: str,
    S: int,
    D: int,
    k_f: float = 1.0,
    d_f: float = 1.0,
    trials: int = 10,
    warmup: int = 2,
    reps: int = None,
    seed: int = 0,
) -> BenchRecord:
    """Time one attention-step configuration; see module docstring."""
    spec = {"method": method, "S": S, "D": D, "k_f": k_f, "d_f": d_f}
    return run_bench_many([spec], trials=trials, warmup=warmup, reps=reps, seed=seed)[0]


def run_gather_compare(S: int, D: int, k: int, trials: int = 10, warmup: int = 2,
                       reps: int = None, seed: int = 0):
    """Fused gathered-score kernel vs an explicit gather-copy path.

    Returns (fused_mean_ns, copy_mean_ns) per call over the same shapes and
    indices; the copy path materializes K[indices] and then multiplies.
    Trials are medians over repetitions, like run_bench.
    """
    if warmup < 1 or trials < 3:
        raise DomainError("need warmup >= 1 and trials >= 3")
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(D).astype(np.float32)
    K = rng.standard_normal((S, D)).astype(np.float32)
    idx = np.sort(rng.choice(S, size=k, replace=False)).astype(np.int64)

    for _ in range(warmup):
        gathered_score_kernel(q, K, idx)
        gather_copy_scores_reference(q, K, idx)

    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        if reps is None:
            t0 = time.perf_counter_ns()
            gather_copy_scores_reference(q, K, idx)
            gather_copy_scores_reference(q, K, idx)
            step = max((time.perf_counter_ns() - t0) // 2, 1)
            reps = int(np.clip(_TARGET_TRIAL_NS // step, 5, 5000))

        rep_ns = np.empty((reps, 2), dtype=np.int64)
        fused, copied = [], []
        for _ in range(trials):
            for r in range(reps):
                t0 = time.perf_counter_ns()
                gathered_score_kernel(q, K, idx)
                t1 = time.perf_counter_ns()
                gather_copy_scores_reference(q, K, idx)
                t2 = time.perf_counter_ns()
                rep_ns[r, 0] = t1 - t0
                rep_ns[r, 1] = t2 - t1
            trial = np.median(rep_ns, axis=0)
            fused.append(float(trial[0]))
            copied.append(float(trial[1]))
    finally:
        if gc_was_enabled:
            gc.enable()
    return float(np.mean(fused)), float(np.mean(copied))


def bench_report(records) -> str:
    """Tab-separated per-phase breakdown; percentages sum to 100 per config."""
    records = list(records)
    if not records:
        raise DomainError("bench_report needs at least one record")
    records.sort(key=lambda r: (r.method, r.S))
    lines = ["method\tS\tD\tk_f\td_f\ttrials\tphase\tmean_ns\tstd_ns\tpct"]
    for r in records:
        total = r.total_mean()
        for p in r.phases:
            mean, std = r.phase_mean(p), r.phase_std(p)
            lines.append(
                f"{r.method}\t{r.S}\t{r.D}\t{r.k_f:g}\t{r.d_f:g}\t{r.trials}\t"
                f"{p}\t{mean:.1f}\t{std:.1f}\t{100.0 * mean / total:.4f}"
            )
    return "\n".join(lines) + "\n"


def plot_data(records) -> str:
    """S vs mean total step time per method, for plotting."""
    records = sorted(records, key=lambda r: (r.method, r.S))
    lines = ["method\tS\ttotal_mean_ns"]
    for r in records:
        lines.append(f"{r.method}\t{r.S}\t{r.total_mean():.1f}")
    return "\n".join(lines) + "\n"


def write_bench_outputs(records, out_dir) -> tuple:
    """Write bench.tsv and bench_plotdata.tsv under out_dir."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    bench_path = os.path.join(out_dir, "bench.tsv")
    plot_path = os.path.join(out_dir, "bench_plotdata.tsv")
    with open(bench_path, "w", encoding="utf-8") as f:
        f.write(bench_report(records))
    with open(plot_path, "w", encoding="utf-8") as f:
        f.write(plot_data(records))
    return bench_path, plot_path
