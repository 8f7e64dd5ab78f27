"""Low-dimensional sparse attention toolkit.

Calibrates PCA projections of attention keys offline, ranks cached tokens
with reduced-dimension scores, and attends exactly over the selected
top-k. Ships baselines (exact top-k, reduced-dimension-only attention, an
eviction policy), explained-variance rank analysis, gather-aware CPU
kernels, and a phase-level micro-benchmark harness. A FastAPI service
wraps the library; the bundled CLI is a thin client of that service.
"""

__version__ = "0.1.0"

from .attention import (
    H2oState,
    KvCache,
    LokiConfig,
    RotaryComposition,
    cache_append,
    exact_topk_attention,
    h2o_step,
    loki_attention,
    loki_rank_and_attend,
    pca_attn,
    resolve_fraction,
    transform_step,
    vanilla_attention,
)
from .bench import (
    BenchRecord,
    bench_report,
    run_bench,
    run_bench_many,
    run_gather_compare,
    write_bench_outputs,
)
from .calibration import (
    ProjectionSet,
    RankReport,
    build_projection,
    compute_covariance,
    eigh_symmetric,
    rank_at_v,
    rank_report,
    select_d_per_layer,
)
from .dataio import (
    KeyDumpHeader,
    SyntheticSpec,
    gen_synthetic_keys,
    read_key_dump,
    read_projection,
    write_key_dump,
    write_projection,
)
from .metrics import (
    AgreementStats,
    agreement_sweep,
    exact_speedup,
    jaccard_topk,
    score_error,
    theoretical_speedup,
)
from .rope import RopeParams, rope_apply, rope_apply_rows

__all__ = [name for name in dir() if not name.startswith("_")]
