"""End-to-end benchmark pipeline: data -> ground truth -> indexes -> CSV.

Configs are flat ``key = value`` text with repeated ``[method]`` blocks.
Parsing is strict: an unknown key or section is an error, so stored
experiment manifests stay trustworthy. All randomness derives from the one
root seed.
"""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import gen_synthetic, ground_truth_cached, read_vecs
from .errors import ConfigError
from .evaluate import CSV_COLUMNS, EvalRow, bench_qps, evaluate_index, rows_to_csv
from .ivf import default_nlist, ivf_build, save_index
from .rng import derive_seed

_GLOBAL_KEYS = {
    "seed": int,
    "out": str,
    "k": int,
    "nprobe": int,
    "nlist": int,
    "threads": int,
    "rerank": int,
    "queries": int,
    "qps_repeats": int,
    "save_indexes": int,
}

_DATASET_KEYS = {
    "kind": str,
    "n": int,
    "dim": int,
    "alpha": float,
    "blobs": int,
    "path": str,
    "query_path": str,
    "format": str,
}

_METHOD_KEYS = {
    "name": str,
    "bits": str,
    "rounds": int,
    "m": float,
    "k_codebook": int,
    "granularity": int,
    "prune": int,
}

_METHOD_NAMES = {"caq", "saq", "lvq", "pq", "pca", "exact"}
_DATASET_KINDS = {"gaussian", "skewed", "clustered", "file"}


@dataclass
class MethodConfig:
    name: str
    bits: tuple[float, ...]
    rounds: int = 6
    m: float = 4.0
    k_codebook: int = 256
    granularity: int = 64
    prune: bool = True


@dataclass
class DatasetConfig:
    kind: str = "gaussian"
    n: int = 10000
    dim: int = 64
    alpha: float = 1.0
    blobs: int = 16
    path: str = ""
    query_path: str = ""
    format: str = "fvecs"


@dataclass
class PipelineConfig:
    seed: int = 42
    out: str = "results"
    k: int = 100
    nprobe: int = 200
    nlist: int = 0          # 0 = auto from dataset size
    threads: int = 1
    rerank: int = 0         # 0 = off
    queries: int = 100
    qps_repeats: int = 1
    save_indexes: bool = False
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    methods: list[MethodConfig] = field(default_factory=list)


def _coerce(section: str, key: str, value: str, schema: dict):
    if key not in schema:
        raise ConfigError(f"unknown key '{key}' in [{section}]" if section else f"unknown key '{key}'")
    caster = schema[key]
    try:
        return caster(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {value!r}") from exc


def parse_config(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    section = ""
    current_method: dict | None = None
    dataset_seen = False
    methods: list[dict] = []

    def flush_method():
        if current_method is not None:
            if "name" not in current_method:
                raise ConfigError("[method] block missing 'name'")
            if "bits" not in current_method:
                raise ConfigError("[method] block missing 'bits'")
            methods.append(current_method)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            name = line[1:-1].strip()
            if name == "dataset":
                dataset_seen = True
            elif name == "method":
                flush_method()
                current_method = {}
            else:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if section == "":
            parsed = _coerce("", key, value, _GLOBAL_KEYS)
            setattr(cfg, key, bool(parsed) if key == "save_indexes" else parsed)
        elif section == "dataset":
            setattr(cfg.dataset, key, _coerce("dataset", key, value, _DATASET_KEYS))
        else:
            current_method[key] = _coerce("method", key, value, _METHOD_KEYS)
    flush_method()

    if not dataset_seen:
        raise ConfigError("missing [dataset] section")
    if cfg.dataset.kind not in _DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind '{cfg.dataset.kind}'")
    if cfg.dataset.kind == "file" and not cfg.dataset.path:
        raise ConfigError("dataset kind 'file' requires 'path'")
    if not methods:
        raise ConfigError("at least one [method] section is required")
    for spec in methods:
        if spec["name"] not in _METHOD_NAMES:
            raise ConfigError(f"unknown method '{spec['name']}'")
        try:
            bits = tuple(float(b) for b in str(spec["bits"]).split(",") if b.strip())
        except ValueError as exc:
            raise ConfigError(f"bad bits list {spec['bits']!r}") from exc
        if not bits:
            raise ConfigError(f"empty bits list for method '{spec['name']}'")
        kwargs = {k: v for k, v in spec.items() if k not in ("name", "bits", "prune")}
        cfg.methods.append(MethodConfig(name=spec["name"], bits=bits, prune=bool(spec.get("prune", 1)), **kwargs))
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def _load_dataset(cfg: PipelineConfig):
    d = cfg.dataset
    if d.kind == "file":
        vectors = read_vecs(d.path, d.format, dim=d.dim or None)
        if d.query_path:
            queries = read_vecs(d.query_path, d.format, dim=d.dim or None)
        else:
            # hold out rows as queries, removed from the base set
            rng = np.random.default_rng(derive_seed(cfg.seed, "query-holdout"))
            pick = np.sort(rng.choice(len(vectors), size=min(cfg.queries, len(vectors) // 2), replace=False))
            mask = np.ones(len(vectors), dtype=bool)
            mask[pick] = False
            queries, vectors = vectors[pick], vectors[mask]
        return vectors.astype(np.float32), queries.astype(np.float32)
    ds = gen_synthetic(d.kind, d.n, d.dim, seed=cfg.seed, alpha=d.alpha, blobs=d.blobs, n_queries=cfg.queries)
    return ds.vectors, ds.queries


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path | None = None) -> Path:
    """Execute the full grid; returns the output directory.

    Writes results.csv (one row per method x bit rate) and manifest.json.
    """
    out = Path(out_dir) if out_dir is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    vectors, queries = _load_dataset(cfg)
    k = min(cfg.k, len(vectors))
    gt_ids, gt_dists = ground_truth_cached(out / "gt-cache", vectors, queries, k)

    nlist = cfg.nlist or default_nlist(len(vectors))
    rows: list[EvalRow] = []
    for method in cfg.methods:
        for bits in method.bits:
            index = ivf_build(
                vectors,
                nlist=nlist,
                quantizer=method.name,
                seed=derive_seed(cfg.seed, f"index-{method.name}-{bits:g}"),
                bits=bits,
                rounds=method.rounds,
                m=method.m,
                k_codebook=method.k_codebook,
                granularity=method.granularity,
            )
            metrics = evaluate_index(
                index,
                queries,
                gt_ids,
                gt_dists,
                k=k,
                nprobe=cfg.nprobe,
                rerank=cfg.rerank or None,
                prune=method.prune,
                threads=cfg.threads,
            )
            qps = bench_qps(
                index,
                queries,
                k=k,
                nprobe=cfg.nprobe,
                rerank=cfg.rerank or None,
                prune=method.prune,
                threads=cfg.threads,
                repeats=cfg.qps_repeats,
            )
            row = EvalRow(
                method=method.name,
                b_avg=bits,
                avg_rel_err=metrics["avg_rel_err"],
                max_rel_err=metrics["max_rel_err"],
                recall_at_k=metrics["recall_at_k"],
                avg_distance_ratio=metrics["avg_distance_ratio"],
                qps=qps,
                mean_bits_accessed=metrics["mean_bits_accessed"],
                quantize_seconds=index.store.quantize_seconds,
                code_bytes=index.store.code_bytes(),
            )
            row.validate()
            rows.append(row)
            if cfg.save_indexes:
                save_index(index, out / f"index-{method.name}-{bits:g}")

    (out / "results.csv").write_text(rows_to_csv(rows))
    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "seed": cfg.seed,
        "k": k,
        "nprobe": cfg.nprobe,
        "nlist": nlist,
        "queries": len(queries),
        "dataset": vars(cfg.dataset),
        "methods": [
            {"name": m.name, "bits": list(m.bits), "rounds": m.rounds, "m": m.m,
             "k_codebook": m.k_codebook, "granularity": m.granularity, "prune": m.prune}
            for m in cfg.methods
        ],
        "columns": CSV_COLUMNS,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out
