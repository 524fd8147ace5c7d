"""Command-line harness: a thin client over the service API.

Every subcommand builds one HTTP request. With ``--server URL`` it talks to
a running service; otherwise the app is mounted in-process, so the commands
work standalone while exercising the exact same API surface.

Exit codes: 0 ok, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .server import create_app

    return TestClient(create_app())


def _call(args, endpoint: str, payload: dict) -> dict:
    payload = {k: v for k, v in payload.items() if v is not None}
    with _client(args.server) as client:
        response = client.post(endpoint, json=payload)
    try:
        body = response.json()
    except ValueError:
        print(response.text, file=sys.stderr)
        raise SystemExit(EXIT_DATA)
    if response.status_code != 200:
        detail = body.get("detail", response.text)
        kind = body.get("error_kind", "data")
        print(f"error ({kind}): {detail}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG if kind == "config" else EXIT_DATA)
    return body


def _print(body: dict) -> None:
    print(json.dumps(body, indent=2))


def cmd_gen(args):
    body = _call(args, "/datasets/generate", {
        "kind": args.kind, "n": args.n, "dim": args.dim, "seed": args.seed,
        "alpha": args.alpha, "blobs": args.blobs, "n_queries": args.queries, "out": args.out,
    })
    _print(body)


def cmd_gt(args):
    body = _call(args, "/datasets/ground-truth", {
        "data": args.data, "queries": args.queries, "k": args.k,
        "format": args.format, "dim": args.dim, "out_prefix": args.out,
    })
    _print(body)


def cmd_train(args):
    body = _call(args, "/transforms/fit", {
        "data": args.data, "kind": args.kind, "seed": args.seed, "out": args.out,
        "format": args.format, "dim": args.dim, "max_rows": args.max_rows,
    })
    _print(body)


def cmd_quantize(args):
    body = _call(args, "/quantize", {
        "data": args.data, "method": args.method, "bits": args.bits, "out": args.out,
        "seed": args.seed, "rounds": args.rounds, "granularity": args.granularity,
        "format": args.format, "dim": args.dim,
    })
    _print(body)


def cmd_build_ivf(args):
    body = _call(args, "/index/build", {
        "data": args.data, "out": args.out, "quantizer": args.quantizer, "bits": args.bits,
        "nlist": args.nlist, "seed": args.seed, "rounds": args.rounds, "m": args.m,
        "k_codebook": args.k_codebook, "granularity": args.granularity,
        "format": args.format, "dim": args.dim,
    })
    _print(body)


def cmd_search(args):
    query = [float(x) for x in args.query.split(",")] if args.query else None
    body = _call(args, "/index/search", {
        "index": args.index, "query": query, "query_file": args.query_file,
        "query_row": args.query_row, "format": args.format, "dim": args.dim,
        "k": args.k, "nprobe": args.nprobe, "rerank": args.rerank,
        "prune": not args.no_prune, "m": args.m,
    })
    _print(body)


def cmd_eval_error(args):
    body = _call(args, "/eval/error", {
        "index": args.index, "queries": args.queries, "k": args.k, "nprobe": args.nprobe,
        "rerank": args.rerank, "prune": not args.no_prune, "threads": args.threads,
        "format": args.format, "dim": args.dim,
    })
    _print(body)


def cmd_bench_qps(args):
    nprobes = [int(x) for x in args.nprobes.split(",")]
    body = _call(args, "/eval/qps", {
        "index": args.index, "queries": args.queries, "k": args.k, "nprobes": nprobes,
        "threads": args.threads, "repeats": args.repeats, "rerank": args.rerank,
        "prune": not args.no_prune, "format": args.format, "dim": args.dim,
    })
    print("nprobe,qps,recall@k")
    for row in body["rows"]:
        print(f"{row['nprobe']},{row['qps']:.2f},{row['recall_at_k']:.6f}")


def cmd_pipeline(args):
    body = _call(args, "/pipeline/run", {"config_path": args.config, "out": args.out})
    print(body["csv_text"], end="")
    print(f"# results: {body['csv_path']}", file=sys.stderr)


def cmd_serve(args):
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)


def _add_common(p):
    p.add_argument("--server", default=None, help="service URL; in-process when omitted")


def _add_file_args(p):
    p.add_argument("--format", default="fvecs", choices=["fvecs", "bvecs", "ivecs", "raw_f32"])
    p.add_argument("--dim", type=int, default=0, help="dimension (raw_f32 only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saq", description="vector quantization benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--kind", required=True, choices=["gaussian", "skewed", "clustered"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--blobs", type=int, default=16)
    p.add_argument("--queries", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("gt", help="exact ground truth for a query set")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True, help="output path prefix")
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("train", help="fit a rotation/PCA transform")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", default="pca", choices=["rotation", "pca", "pca_rotation"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rows", type=int, default=100_000)
    p.add_argument("--out", required=True)
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="flat-quantize a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="saq", choices=["caq", "saq", "lvq"])
    p.add_argument("--bits", type=float, default=4.0)
    p.add_argument("--rounds", type=int, default=6)
    p.add_argument("--granularity", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("build-ivf", help="build an IVF index")
    p.add_argument("--data", required=True)
    p.add_argument("--quantizer", default="saq", choices=["caq", "saq", "lvq", "pq", "pca", "exact"])
    p.add_argument("--bits", type=float, default=4.0)
    p.add_argument("--nlist", type=int, default=0, help="0 = auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=6)
    p.add_argument("--m", type=float, default=4.0)
    p.add_argument("--k-codebook", type=int, default=256)
    p.add_argument("--granularity", type=int, default=64)
    p.add_argument("--out", required=True, help="output index directory")
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_build_ivf)

    p = sub.add_parser("search", help="query an index")
    p.add_argument("--index", required=True)
    p.add_argument("--query", default=None, help="comma-separated vector")
    p.add_argument("--query-file", default=None)
    p.add_argument("--query-row", type=int, default=0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--nprobe", type=int, default=16)
    p.add_argument("--rerank", type=int, default=0)
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--m", type=float, default=None)
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval-error", help="estimator accuracy over probed clusters")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--nprobe", type=int, default=200)
    p.add_argument("--rerank", type=int, default=0)
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval_error)

    p = sub.add_parser("bench-qps", help="throughput/recall sweep over nprobe")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--nprobes", default="16", help="comma-separated list")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--rerank", type=int, default=0)
    p.add_argument("--no-prune", action="store_true")
    _add_file_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench_qps)

    p = sub.add_parser("pipeline", help="run a full benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config's output directory")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
