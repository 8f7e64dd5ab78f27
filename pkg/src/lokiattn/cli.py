"""Command-line interface: a thin client of the HTTP service.

Every subcommand builds one request and posts it to the service API. By
default the FastAPI app is mounted in-process (no server required, same
filesystem); pass --server or set LOKI_SERVER to talk to a running
instance instead. `lokiattn serve` starts one.

Exit codes: 0 success, 2 usage/validation, 3 data/integrity, 4 internal.
"""

import argparse
import asyncio
import os
import sys

import httpx

from . import __version__


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _post(path, payload, server):
    if server:
        try:
            with httpx.Client(base_url=server, timeout=600.0) as client:
                r = client.post(path, json=payload)
                return r.status_code, r.json()
        except httpx.HTTPError as exc:
            return None, {"error": {"kind": "internal", "message": f"transport: {exc}"}}

    from .service import app  # deferred; pulls in numba only when needed

    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://lokiattn.local", timeout=None
        ) as client:
            r = await client.post(path, json=payload)
            return r.status_code, r.json()

    return asyncio.run(go())


_STATUS_EXIT = {400: 2, 422: 2, 404: 2, 409: 3}


def _finish(status, body):
    if status == 200:
        return 0
    err = body.get("error") if isinstance(body, dict) else None
    if err:
        print(f"error ({err.get('kind', '?')}): {err.get('message', '')}", file=sys.stderr)
    elif isinstance(body, dict) and "detail" in body:  # pydantic validation
        print(f"error (usage): {body['detail']}", file=sys.stderr)
    else:
        print(f"error: HTTP {status}: {body}", file=sys.stderr)
    if status is None:
        return 4
    return _STATUS_EXIT.get(status, 4)


def _cmd_gen(args):
    payload = {
        "out": args.out, "seq": args.seq, "dim": args.dim, "rank": args.rank,
        "noise": args.noise, "seed": args.seed, "layer": args.layer,
        "head": args.head, "stage": args.stage,
    }
    status, body = _post("/v1/gen", payload, args.server)
    if status == 200:
        print(f"wrote {body['path']} (S={body['seq']}, D={body['dim']})")
    return _finish(status, body)


def _cmd_calibrate(args):
    status, body = _post("/v1/calibrate", {"keys": args.keys, "out": args.out}, args.server)
    if status == 200:
        for p in body["projections"]:
            eigs = " ".join(f"{x:.4f}" for x in p["leading_eigenvalues"])
            print(
                f"L{p['layer']} H{p['head']} {p['stage']}: D={p['head_dim']} "
                f"rank90={p['rank90']} eig[:8]={eigs} -> {p['path']}"
            )
    return _finish(status, body)


def _cmd_rank(args):
    payload = {"keys": args.keys, "v": args.v, "out": args.out}
    status, body = _post("/v1/rank", payload, args.server)
    if status == 200:
        for key, mean in sorted(body["model_averages"].items()):
            print(f"model-avg rank@{key}: {mean:.2f}")
        print(f"report: {body['report_path']}")
    return _finish(status, body)


def _cmd_run(args):
    payload = {
        "keys": args.keys, "values": args.values, "queries": args.queries,
        "proj": args.proj, "method": args.method, "kf": args.kf, "df": args.df,
        "out": args.out,
    }
    status, body = _post("/v1/run", payload, args.server)
    if status == 200:
        extras = []
        if body["resolved_k"] is not None:
            extras.append(f"k={body['resolved_k']}")
        if body["resolved_d"] is not None:
            extras.append(f"d={body['resolved_d']}")
        suffix = f" ({', '.join(extras)})" if extras else ""
        print(f"{args.method}: {body['n_queries']} queries -> {body['out_path']}{suffix}")
        if body["indices_path"]:
            print(f"selected indices: {body['indices_path']}")
    return _finish(status, body)


def _cmd_agree(args):
    payload = {
        "keys": args.keys, "queries": args.queries, "proj": args.proj,
        "kf_grid": args.kf_grid, "df_grid": args.df_grid, "out": args.out,
    }
    status, body = _post("/v1/agree", payload, args.server)
    if status == 200:
        print("k_f\td_f\tmean_jaccard\tmin_jaccard")
        for c in body["cells"]:
            print(f"{c['k_f']:g}\t{c['d_f']:g}\t{c['mean_jaccard']:.6f}\t{c['min_jaccard']:.6f}")
        print(f"table: {body['out_path']}")
    return _finish(status, body)


def _cmd_bench(args):
    payload = {
        "method": args.method, "seq_list": args.seq_list, "dim": args.dim,
        "kf": args.kf, "df": args.df, "trials": args.trials,
        "warmup": args.warmup, "out": args.out,
    }
    status, body = _post("/v1/bench", payload, args.server)
    if status == 200:
        for t in body["totals"]:
            print(f"{t['method']}\tS={t['S']}\ttotal={t['total_mean_ns'] / 1000:.1f} us")
        print(f"breakdown: {body['bench_path']}")
        print(f"plot data: {body['plot_path']}")
    return _finish(status, body)


def _cmd_serve(args):
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lokiattn",
        description="Low-dimensional sparse attention: calibrate, analyze, run, benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--server",
        default=os.environ.get("LOKI_SERVER", ""),
        help="base URL of a running service (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic low-rank keys (LKD1)")
    p.add_argument("--out", required=True)
    p.add_argument("--seq", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--stage", choices=["pre", "post"], default="post")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("calibrate", help="PCA-calibrate projections from key dumps")
    p.add_argument("--keys", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory for LKP1 files")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("rank", help="explained-variance rank report")
    p.add_argument("--keys", nargs="+", required=True)
    p.add_argument("--v", type=_floats, default=[90.0], help="comma-separated percentages")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("run", help="run an attention method over key/value/query dumps")
    p.add_argument("--keys", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--proj", default=None)
    p.add_argument(
        "--method",
        choices=["vanilla", "loki", "exact-topk", "pca-attn", "h2o"],
        required=True,
    )
    p.add_argument("--kf", type=float, default=None)
    p.add_argument("--df", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("agree", help="top-k agreement sweep vs exact ranking")
    p.add_argument("--keys", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--proj", required=True)
    p.add_argument("--kf-grid", type=_floats, required=True)
    p.add_argument("--df-grid", type=_floats, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_agree)

    p = sub.add_parser("bench", help="phase-level attention micro-benchmark")
    p.add_argument("--method", choices=["vanilla", "loki", "both"], default="both")
    p.add_argument("--seq-list", type=_ints, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kf", type=float, default=0.25)
    p.add_argument("--df", type=float, default=0.25)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8711)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
