"""FastAPI service wrapping the quantization/search library.

The service executes jobs synchronously on the local filesystem: requests
carry paths, responses carry paths plus summary numbers, so large matrices
never transit the wire. Loaded indexes are cached by path for repeated
searches.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, caq, lvq, saq
from ..baselines import InsufficientDataError
from ..data import brute_force_topk, gen_synthetic, ground_truth_cached, read_vecs, write_vecs
from ..errors import ConfigError, DataFormatError
from ..evaluate import bench_qps, evaluate_index
from ..ivf import ivf_build, ivf_search, load_index, save_index
from ..pipeline import load_config, parse_config, run_pipeline
from ..rng import derive_seed
from ..transforms import compose_pca_rotation, fit_pca, gen_rotation, save_model
from . import schemas as sc

INDEX_CACHE_SIZE = 4


def _read(path: str, fmt: str, dim: int) -> np.ndarray:
    return read_vecs(path, fmt, dim=dim or None)


def create_app() -> FastAPI:
    app = FastAPI(title="saqlib", version=__version__)
    index_cache: OrderedDict[str, tuple[float, object]] = OrderedDict()

    def get_index(path: str):
        key = str(Path(path).resolve())
        mtime = (Path(key) / "meta.json").stat().st_mtime
        hit = index_cache.get(key)
        if hit is not None and hit[0] == mtime:
            index_cache.move_to_end(key)
            return hit[1]
        index = load_index(key)
        index_cache[key] = (mtime, index)
        index_cache.move_to_end(key)
        while len(index_cache) > INDEX_CACHE_SIZE:
            index_cache.popitem(last=False)
        return index

    @app.exception_handler(ConfigError)
    async def config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": "config"})

    @app.exception_handler(DataFormatError)
    async def data_error(request: Request, exc: DataFormatError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": "data"})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": "data"})

    @app.exception_handler(InsufficientDataError)
    async def insufficient(request: Request, exc: InsufficientDataError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": "data"})

    @app.exception_handler(ValueError)
    async def bad_argument(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": "argument"})

    @app.get("/health", response_model=sc.HealthResponse)
    def health():
        return sc.HealthResponse(status="ok", version=__version__)

    @app.post("/datasets/generate", response_model=sc.GenerateResponse)
    def generate(req: sc.GenerateRequest):
        ds = gen_synthetic(req.kind, req.n, req.dim, seed=req.seed, alpha=req.alpha,
                           blobs=req.blobs, n_queries=req.n_queries)
        out = Path(req.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        data_path = str(out) + ".fvecs"
        write_vecs(data_path, ds.vectors, "fvecs")
        query_path = None
        if ds.queries is not None:
            query_path = str(out) + ".queries.fvecs"
            write_vecs(query_path, ds.queries, "fvecs")
        return sc.GenerateResponse(data_path=data_path, query_path=query_path, n=req.n, dim=req.dim)

    @app.post("/datasets/ground-truth", response_model=sc.GroundTruthResponse)
    def ground_truth(req: sc.GroundTruthRequest):
        data = _read(req.data, req.format, req.dim)
        queries = _read(req.queries, req.format, req.dim)
        ids, dists = brute_force_topk(data, queries, req.k)
        ids_path = req.out_prefix + ".ivecs"
        dists_path = req.out_prefix + ".fvecs"
        Path(ids_path).parent.mkdir(parents=True, exist_ok=True)
        write_vecs(ids_path, ids.astype(np.int32), "ivecs")
        write_vecs(dists_path, dists.astype(np.float32), "fvecs")
        return sc.GroundTruthResponse(ids_path=ids_path, dists_path=dists_path, k=req.k, n_queries=len(queries))

    @app.post("/transforms/fit", response_model=sc.TrainResponse)
    def train(req: sc.TrainRequest):
        data = _read(req.data, req.format, req.dim)
        dim = data.shape[1]
        if req.kind == "rotation":
            model = gen_rotation(dim, req.seed)
        elif req.kind == "pca":
            model = fit_pca(data, seed=req.seed, max_rows=req.max_rows)
        else:
            pca = fit_pca(data, seed=req.seed, max_rows=req.max_rows)
            model = compose_pca_rotation(pca, gen_rotation(dim, derive_seed(req.seed, "post-rotation")))
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        save_model(model, req.out)
        leading = model.variances[: min(8, dim)].astype(float).tolist()
        return sc.TrainResponse(out=req.out, kind=req.kind, dim=dim, leading_variances=leading)

    @app.post("/quantize", response_model=sc.QuantizeResponse)
    def quantize(req: sc.QuantizeRequest):
        data = _read(req.data, req.format, req.dim)
        out = Path(req.out)
        out.mkdir(parents=True, exist_ok=True)
        mean = data.astype(np.float64).mean(axis=0).astype(np.float32)
        plan_segments = None
        if req.method == "lvq":
            start = time.perf_counter()
            block = lvq.lvq_quantize_batch(data, mean, int(req.bits))
            seconds = time.perf_counter() - start
            code_bytes = lvq.save_block(block, out / "codes.vqlv")
            np.asarray(mean, dtype="<f4").tofile(out / "mean.f32")
            count = block.codes.shape[0]
        elif req.method == "caq":
            rotation = gen_rotation(data.shape[1], derive_seed(req.seed, "caq-rotation"))
            start = time.perf_counter()
            rotated = (data - mean) @ rotation.matrix.T
            block = caq.caq_quantize_batch(rotated, int(req.bits), req.rounds)
            seconds = time.perf_counter() - start
            code_bytes = caq.save_block(block, out / "codes.vqcq")
            save_model(rotation, out / "rotation.vqtm")
            np.asarray(mean, dtype="<f4").tofile(out / "mean.f32")
            count = block.count
        else:
            pca = fit_pca(data, seed=derive_seed(req.seed, "saq-pca"))
            projected = (data - pca.mean) @ pca.matrix.T
            start = time.perf_counter()
            quota = int(round(req.bits * data.shape[1]))
            plan = saq.search_plan(pca.variances.astype(np.float64), quota, req.granularity)
            code_set = saq.saq_quantize(projected, plan, seed=req.seed, rounds=req.rounds)
            seconds = time.perf_counter() - start
            code_bytes = saq.save_code_set(code_set, out)
            save_model(pca, out / "pca.vqtm")
            plan_segments = list(plan.segments)
            count = code_set.count
        return sc.QuantizeResponse(
            out=str(out), method=req.method, count=count,
            quantize_seconds=seconds, code_bytes=code_bytes, plan_segments=plan_segments,
        )

    @app.post("/index/build", response_model=sc.BuildIndexResponse)
    def build(req: sc.BuildIndexRequest):
        data = _read(req.data, req.format, req.dim)
        index = ivf_build(
            data,
            nlist=req.nlist or None,
            quantizer=req.quantizer,
            seed=req.seed,
            bits=req.bits,
            rounds=req.rounds,
            m=req.m,
            k_codebook=req.k_codebook,
            granularity=req.granularity,
        )
        save_index(index, req.out)
        plan_segments = list(index.store.plan.segments) if req.quantizer == "saq" else None
        return sc.BuildIndexResponse(
            out=req.out, quantizer=req.quantizer, nlist=index.nlist, count=index.count,
            dim=data.shape[1], quantize_seconds=index.store.quantize_seconds,
            code_bytes=index.store.code_bytes(), plan_segments=plan_segments,
        )

    @app.post("/index/search", response_model=sc.SearchResponse)
    def search(req: sc.SearchRequest):
        index = get_index(req.index)
        if req.query is not None:
            q = np.asarray(req.query, dtype=np.float32)
        elif req.query_file:
            queries = _read(req.query_file, req.format, req.dim)
            if not 0 <= req.query_row < len(queries):
                raise ValueError(f"query_row {req.query_row} out of range [0, {len(queries)})")
            q = queries[req.query_row]
        else:
            raise ValueError("either 'query' or 'query_file' is required")
        res = ivf_search(index, q, k=req.k, nprobe=req.nprobe,
                         rerank=req.rerank or None, prune=req.prune, m=req.m)
        return sc.SearchResponse(
            ids=res.ids.tolist(),
            distances=[float(d) for d in res.distances],
            bits_accessed=res.stats.bits_accessed,
            candidates_scanned=res.stats.candidates_scanned,
        )

    @app.post("/eval/error", response_model=sc.EvalErrorResponse)
    def eval_error(req: sc.EvalErrorRequest):
        index = get_index(req.index)
        queries = _read(req.queries, req.format, req.dim)
        k = min(req.k, index.count)
        gt_ids, gt_dists = ground_truth_cached(Path(req.index) / "gt-cache", index.vectors, queries, k)
        # ground truth over storage rows; translate to original ids
        gt_ids = index.ids[gt_ids]
        metrics = evaluate_index(index, queries, gt_ids, gt_dists, k=k, nprobe=req.nprobe,
                                 rerank=req.rerank or None, prune=req.prune, threads=req.threads)
        return sc.EvalErrorResponse(
            method=index.quantizer,
            b_avg=float(index.params.get("bits", 0.0)),
            avg_rel_err=metrics["avg_rel_err"],
            max_rel_err=metrics["max_rel_err"],
            recall_at_k=metrics["recall_at_k"],
            avg_distance_ratio=metrics["avg_distance_ratio"],
            mean_bits_accessed=metrics["mean_bits_accessed"],
            candidates_scanned=metrics["candidates_scanned"],
            code_bytes=index.store.code_bytes(),
        )

    @app.post("/eval/qps", response_model=sc.BenchQpsResponse)
    def eval_qps(req: sc.BenchQpsRequest):
        index = get_index(req.index)
        queries = _read(req.queries, req.format, req.dim)
        k = min(req.k, index.count)
        gt_ids, gt_dists = ground_truth_cached(Path(req.index) / "gt-cache", index.vectors, queries, k)
        gt_ids = index.ids[gt_ids]
        rows = []
        for nprobe in req.nprobes:
            qps = bench_qps(index, queries, k=k, nprobe=nprobe, rerank=req.rerank or None,
                            prune=req.prune, threads=req.threads, repeats=req.repeats)
            hits = []
            for j, q in enumerate(queries):
                res = ivf_search(index, q, k=k, nprobe=nprobe, rerank=req.rerank or None, prune=req.prune)
                hits.append(len(set(res.ids.tolist()) & set(gt_ids[j][:k].tolist())) / k)
            rows.append(sc.QpsPoint(nprobe=nprobe, qps=qps, recall_at_k=float(np.mean(hits))))
        return sc.BenchQpsResponse(rows=rows)

    @app.post("/pipeline/run", response_model=sc.PipelineResponse)
    def pipeline(req: sc.PipelineRequest):
        if req.config_text is not None:
            cfg = parse_config(req.config_text)
        elif req.config_path:
            cfg = load_config(req.config_path)
        else:
            raise ConfigError("either 'config_path' or 'config_text' is required")
        out = run_pipeline(cfg, out_dir=req.out)
        return sc.PipelineResponse(
            out=str(out),
            csv_path=str(out / "results.csv"),
            manifest_path=str(out / "manifest.json"),
            csv_text=(out / "results.csv").read_text(),
        )

    return app
