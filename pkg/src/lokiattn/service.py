"""FastAPI service wrapping the library.

Each endpoint mirrors one CLI subcommand: it reads the referenced files,
runs the corresponding library operation, writes outputs plus a JSON run
manifest next to them, and returns a summary. Errors map to a structured
body {"error": {"kind": ..., "message": ...}} with 400 for usage problems,
409 for bad data, and 500 for anything unexpected; the CLI translates
those to its exit codes.

Manifests deliberately carry no timestamps so a rerun with identical
arguments produces byte-identical artifacts.
"""

import json
import os

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__, config
from .attention import (
    H2oState,
    LokiConfig,
    exact_topk_attention,
    h2o_step,
    loki_rank_and_attend,
    pca_attn,
    resolve_fraction,
    vanilla_attention,
)
from .bench import run_bench_many, write_bench_outputs
from .calibration import build_projection, rank_at_v, rank_report
from .dataio import (
    KeyDumpHeader,
    SyntheticSpec,
    gen_synthetic_keys,
    read_key_dump,
    read_projection,
    write_key_dump,
    write_projection,
)
from .errors import DataError, UsageError
from .metrics import agreement_sweep
from .schemas import (
    AgreeRequest,
    AgreeResponse,
    AgreementCellModel,
    BenchRequest,
    BenchResponse,
    BenchTotal,
    CalibrateRequest,
    CalibrateResponse,
    GenRequest,
    GenResponse,
    HealthResponse,
    ProjectionSummary,
    RankRequest,
    RankResponse,
    RunRequest,
    RunResponse,
)


def _error_response(kind: str, status: int, exc: Exception) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"kind": kind, "message": f"{type(exc).__name__}: {exc}"}},
    )


def _write_manifest(path, subcommand, inputs, outputs, cfg) -> dict:
    manifest = {
        "subcommand": subcommand,
        "inputs": inputs,
        "outputs": outputs,
        "config": cfg,
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


def _write_outputs_tsv(path, outputs) -> None:
    d = outputs.shape[1]
    with open(path, "w", encoding="utf-8") as f:
        f.write("query\t" + "\t".join(f"y{i}" for i in range(d)) + "\n")
        for qi, row in enumerate(outputs):
            f.write(str(qi) + "\t" + "\t".join(_fmt(x) for x in row) + "\n")


def _write_indices_tsv(path, index_lists) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("query\tindices\n")
        for qi, idx in enumerate(index_lists):
            f.write(f"{qi}\t" + " ".join(str(int(i)) for i in idx) + "\n")


def create_app() -> FastAPI:
    app = FastAPI(title="lokiattn", version=__version__)

    @app.exception_handler(UsageError)
    async def _usage_handler(request, exc):
        return _error_response("usage", 400, exc)

    @app.exception_handler(FileNotFoundError)
    async def _missing_handler(request, exc):
        return _error_response("usage", 400, exc)

    @app.exception_handler(IsADirectoryError)
    async def _isdir_handler(request, exc):
        return _error_response("usage", 400, exc)

    @app.exception_handler(IndexError)
    async def _index_handler(request, exc):
        return _error_response("usage", 400, exc)

    @app.exception_handler(DataError)
    async def _data_handler(request, exc):
        return _error_response("data", 409, exc)

    @app.exception_handler(Exception)
    async def _internal_handler(request, exc):
        return _error_response("internal", 500, exc)

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__, threads=config.worker_threads())

    @app.post("/v1/gen", response_model=GenResponse)
    def gen(req: GenRequest):
        spec = SyntheticSpec(
            seq_len=req.seq,
            head_dim=req.dim,
            intrinsic_rank=req.rank,
            noise_sigma=req.noise,
            seed=req.seed,
        )
        keys = gen_synthetic_keys(spec)
        header = KeyDumpHeader(
            layer=req.layer, head=req.head, seq_len=req.seq,
            head_dim=req.dim, rotary_stage=req.stage,
        )
        write_key_dump(req.out, header, keys)
        manifest = _write_manifest(
            req.out + ".manifest.json", "gen",
            inputs={}, outputs={"keys": req.out},
            cfg=req.model_dump(),
        )
        return GenResponse(path=req.out, seq=req.seq, dim=req.dim, manifest=manifest)

    @app.post("/v1/calibrate", response_model=CalibrateResponse)
    def calibrate(req: CalibrateRequest):
        os.makedirs(req.out, exist_ok=True)
        summaries = []
        produced = {}
        for path in req.keys:
            header, keys = read_key_dump(path)
            proj = build_projection(
                keys, header.rotary_stage, layer=header.layer, head=header.head
            )
            name = f"L{header.layer}_H{header.head}_{header.rotary_stage}.lkp"
            out_path = os.path.join(req.out, name)
            write_projection(out_path, proj)
            produced[name] = out_path
            summaries.append(
                ProjectionSummary(
                    layer=proj.layer,
                    head=proj.head,
                    stage=proj.rotary_stage,
                    head_dim=proj.head_dim,
                    path=out_path,
                    leading_eigenvalues=[float(x) for x in proj.eigenvalues[:8]],
                    rank90=rank_at_v(proj.eigenvalues, 90.0),
                )
            )
        manifest = _write_manifest(
            os.path.join(req.out, "manifest.json"), "calibrate",
            inputs={"keys": list(req.keys)}, outputs=produced, cfg={},
        )
        return CalibrateResponse(projections=summaries, manifest=manifest)

    @app.post("/v1/rank", response_model=RankResponse)
    def rank(req: RankRequest):
        key_sets = []
        for path in req.keys:
            header, keys = read_key_dump(path)
            key_sets.append((header.layer, header.head, header.rotary_stage, keys))
        report = rank_report(key_sets, req.v)
        with open(req.out, "w", encoding="utf-8") as f:
            f.write(report.to_tsv())
        manifest = _write_manifest(
            req.out + ".manifest.json", "rank",
            inputs={"keys": list(req.keys)}, outputs={"report": req.out},
            cfg={"v": list(req.v)},
        )
        averages = {
            f"{stage}@{v:g}": mean for (stage, v), mean in report.model_averages().items()
        }
        return RankResponse(report_path=req.out, model_averages=averages, manifest=manifest)

    @app.post("/v1/run", response_model=RunResponse)
    def run(req: RunRequest):
        _, K = read_key_dump(req.keys)
        _, V = read_key_dump(req.values)
        _, Q = read_key_dump(req.queries)
        if V.shape != K.shape:
            raise UsageError(f"values shape {V.shape} does not match keys {K.shape}")
        if Q.shape[1] != K.shape[1]:
            raise UsageError(f"query dim {Q.shape[1]} does not match keys {K.shape[1]}")
        S, D = K.shape

        proj = None
        if req.method in ("loki", "pca-attn"):
            if req.proj is None:
                raise UsageError(f"method {req.method} requires --proj")
            proj = read_projection(req.proj)
            if proj.head_dim != D:
                raise UsageError(f"projection dim {proj.head_dim} does not match keys dim {D}")
        if req.method in ("loki", "exact-topk", "h2o") and req.kf is None:
            raise UsageError(f"method {req.method} requires --kf")
        if req.method in ("loki", "pca-attn") and req.df is None:
            raise UsageError(f"method {req.method} requires --df")

        resolved_k = resolve_fraction(req.kf, S) if req.kf is not None else None
        resolved_d = resolve_fraction(req.df, D) if req.df is not None else None

        outputs = np.empty((Q.shape[0], D), dtype=np.float32)
        index_lists = None
        if req.method == "vanilla":
            for i, q in enumerate(Q):
                outputs[i], _ = vanilla_attention(q, K, V)
        elif req.method == "exact-topk":
            index_lists = []
            for i, q in enumerate(Q):
                outputs[i], idx = exact_topk_attention(q, K, V, resolved_k)
                index_lists.append(idx)
        elif req.method == "loki":
            K_hat = np.ascontiguousarray(K @ proj.P, dtype=np.float32)
            index_lists = []
            for i, q in enumerate(Q):
                q_hat = np.asarray(q @ proj.P, dtype=np.float32)
                outputs[i], diag = loki_rank_and_attend(q_hat, K_hat, V, resolved_d, resolved_k)
                index_lists.append(diag.indices)
        elif req.method == "pca-attn":
            K_hat_d = np.ascontiguousarray((K @ proj.P)[:, :resolved_d], dtype=np.float32)
            P_d = np.ascontiguousarray(proj.P[:, :resolved_d], dtype=np.float32)
            for i, q in enumerate(Q):
                outputs[i] = pca_attn(q, K_hat_d, V, P_d)
        else:  # h2o streams the cache; one query per step
            if Q.shape[0] != S:
                raise UsageError(
                    f"h2o needs one query per cached token: {Q.shape[0]} queries for S={S}"
                )
            state = H2oState.new(resolved_k, D)
            for t in range(S):
                outputs[t], state = h2o_step(state, Q[t], K[t], V[t])

        _write_outputs_tsv(req.out, outputs)
        produced = {"outputs": req.out}
        indices_path = None
        if index_lists is not None:
            indices_path = req.out + ".indices.tsv"
            _write_indices_tsv(indices_path, index_lists)
            produced["indices"] = indices_path
        manifest = _write_manifest(
            req.out + ".manifest.json", "run",
            inputs={"keys": req.keys, "values": req.values,
                    "queries": req.queries, "proj": req.proj},
            outputs=produced,
            cfg={"method": req.method, "kf": req.kf, "df": req.df,
                 "resolved_k": resolved_k, "resolved_d": resolved_d},
        )
        return RunResponse(
            out_path=req.out,
            indices_path=indices_path,
            n_queries=int(Q.shape[0]),
            resolved_k=resolved_k,
            resolved_d=resolved_d,
            manifest=manifest,
        )

    @app.post("/v1/agree", response_model=AgreeResponse)
    def agree(req: AgreeRequest):
        _, K = read_key_dump(req.keys)
        _, Q = read_key_dump(req.queries)
        proj = read_projection(req.proj)
        # values do not influence set agreement; reuse keys for the shape
        stats = agreement_sweep(K, K, Q, proj, req.kf_grid, req.df_grid)
        with open(req.out, "w", encoding="utf-8") as f:
            f.write(stats.to_tsv())
        manifest = _write_manifest(
            req.out + ".manifest.json", "agree",
            inputs={"keys": req.keys, "queries": req.queries, "proj": req.proj},
            outputs={"agreement": req.out},
            cfg={"kf_grid": list(req.kf_grid), "df_grid": list(req.df_grid)},
        )
        cells = [
            AgreementCellModel(
                k_f=c.k_f, d_f=c.d_f, mean_jaccard=c.mean_jaccard, min_jaccard=c.min_jaccard
            )
            for c in stats.cells
        ]
        return AgreeResponse(out_path=req.out, cells=cells, manifest=manifest)

    @app.post("/v1/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        methods = ("vanilla", "loki") if req.method == "both" else (req.method,)
        specs = [
            {"method": m, "S": S, "D": req.dim, "k_f": req.kf, "d_f": req.df}
            for m in methods
            for S in req.seq_list
        ]
        records = run_bench_many(specs, trials=req.trials, warmup=req.warmup)
        bench_path, plot_path = write_bench_outputs(records, req.out)
        manifest = _write_manifest(
            os.path.join(req.out, "manifest.json"), "bench",
            inputs={},
            outputs={"bench": bench_path, "plotdata": plot_path},
            cfg=req.model_dump(),
        )
        totals = [
            BenchTotal(method=r.method, S=r.S, total_mean_ns=r.total_mean()) for r in records
        ]
        return BenchResponse(
            bench_path=bench_path, plot_path=plot_path, totals=totals, manifest=manifest
        )

    return app


app = create_app()
