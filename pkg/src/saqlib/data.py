"""Dataset ingestion, synthetic corpora, and exact ground truth.

File formats follow the usual benchmark conventions: each record is a
little-endian i32 dimension header followed by the payload (f32 for fvecs,
u8 for bvecs, i32 for ivecs). raw_f32 files have no headers and need an
explicit dimension.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .rng import derive_seed
from .transforms import gen_rotation

_PAYLOAD = {"fvecs": ("<f4", 4), "bvecs": ("<u1", 1), "ivecs": ("<i4", 4)}


@dataclass
class Dataset:
    vectors: np.ndarray
    queries: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def read_vecs(path: str | Path, fmt: str = "fvecs", dim: int | None = None) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if fmt == "raw_f32":
        if not dim:
            raise ValueError("raw_f32 needs an explicit dim")
        if raw.size % (4 * dim) != 0:
            raise DataFormatError(f"{path}: size {raw.size} not a multiple of {4 * dim} bytes")
        return raw.view("<f4").reshape(-1, dim).astype(np.float32)
    if fmt not in _PAYLOAD:
        raise ValueError(f"unknown format {fmt!r}")
    dtype, width = _PAYLOAD[fmt]
    if raw.size < 4:
        raise DataFormatError(f"{path}: empty or truncated file")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise DataFormatError(f"{path}: bad leading dimension {d}")
    record = 4 + d * width
    if raw.size % record != 0:
        raise DataFormatError(f"{path}: size {raw.size} not a multiple of record size {record}")
    records = raw.reshape(-1, record)
    dims = records[:, :4].copy().view("<i4").ravel()
    if not np.all(dims == d):
        raise DataFormatError(f"{path}: inconsistent dimensions ({d} vs {dims[dims != d][0]})")
    payload = records[:, 4:].copy().view(dtype)
    if fmt == "fvecs":
        return payload.astype(np.float32)
    if fmt == "bvecs":
        return payload.astype(np.uint8)
    return payload.astype(np.int32)


def write_vecs(path: str | Path, matrix: np.ndarray, fmt: str = "fvecs") -> None:
    if fmt == "raw_f32":
        np.ascontiguousarray(matrix, dtype="<f4").tofile(path)
        return
    if fmt not in _PAYLOAD:
        raise ValueError(f"unknown format {fmt!r}")
    dtype, width = _PAYLOAD[fmt]
    matrix = np.atleast_2d(matrix)
    n, d = matrix.shape
    out = np.empty((n, 4 + d * width), dtype=np.uint8)
    out[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(matrix, dtype=dtype).view(np.uint8).reshape(n, d * width)
    out.tofile(path)


# ---------------------------------------------------------------------------
# synthetic corpora


def gen_synthetic(
    kind: str,
    n: int,
    dim: int,
    seed: int,
    alpha: float = 1.0,
    blobs: int = 16,
    n_queries: int = 0,
) -> Dataset:
    """Deterministic synthetic data; queries are held-out extra rows.

    Kinds: ``gaussian`` iid N(0,1); ``skewed`` scales dimension i by i^-alpha
    and then applies a random rotation (so recovering the spectrum requires
    PCA); ``clustered`` draws from ``blobs`` Gaussian blobs.
    """
    if n < 1 or dim < 1:
        raise ValueError(f"need n >= 1 and dim >= 1, got n={n} dim={dim}")
    rng = np.random.default_rng(derive_seed(seed, f"synthetic-{kind}"))
    total = n + n_queries
    if kind == "gaussian":
        x = rng.standard_normal((total, dim)).astype(np.float32)
    elif kind == "skewed":
        scales = (np.arange(1, dim + 1, dtype=np.float64) ** -alpha).astype(np.float32)
        x = rng.standard_normal((total, dim)).astype(np.float32) * scales
        rot = gen_rotation(dim, derive_seed(seed, "synthetic-skew-rotation"))
        x = x @ rot.matrix.T
    elif kind == "clustered":
        centers = 2.0 * rng.standard_normal((blobs, dim)).astype(np.float32)
        labels = rng.integers(blobs, size=total)
        x = centers[labels] + rng.standard_normal((total, dim)).astype(np.float32)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n_queries:
        return Dataset(vectors=x[:n], queries=x[n:])
    return Dataset(vectors=x)


# ---------------------------------------------------------------------------
# exact ground truth


def brute_force_topk(data: np.ndarray, queries: np.ndarray, k: int, chunk: int = 32768) -> tuple[np.ndarray, np.ndarray]:
    """Exact squared-distance top-k in f64 accumulation; ties break by id.

    Returns (ids, squared distances), each (n_queries, k).
    """
    data = np.atleast_2d(np.asarray(data))
    queries = np.atleast_2d(np.asarray(queries))
    n = data.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    q64 = queries.astype(np.float64)
    q_norms = np.einsum("md,md->m", q64, q64)
    dists = np.empty((n, queries.shape[0]))
    for start in range(0, n, chunk):
        part = data[start : start + chunk].astype(np.float64)
        norms = np.einsum("nd,nd->n", part, part)
        d2 = norms[:, None] - 2.0 * (part @ q64.T) + q_norms[None, :]
        dists[start : start + len(part)] = np.maximum(d2, 0.0)
    ids = np.empty((queries.shape[0], k), dtype=np.int64)
    out = np.empty((queries.shape[0], k))
    row_ids = np.arange(n)
    for j in range(queries.shape[0]):
        order = np.lexsort((row_ids, dists[:, j]))[:k]
        ids[j] = order
        out[j] = dists[order, j]
    return ids, out


def _content_hash(data: np.ndarray, queries: np.ndarray, k: int) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data, dtype="<f4").tobytes())
    h.update(np.ascontiguousarray(queries, dtype="<f4").tobytes())
    h.update(str(k).encode())
    return h.hexdigest()[:16]


def ground_truth_cached(cache_dir: str | Path, data: np.ndarray, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k ground truth, cached by content hash next to the dataset."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tag = _content_hash(data, queries, k)
    ids_path = cache_dir / f"gt-{tag}.ivecs"
    dists_path = cache_dir / f"gt-{tag}.fvecs"
    if ids_path.exists() and dists_path.exists():
        return read_vecs(ids_path, "ivecs").astype(np.int64), read_vecs(dists_path, "fvecs").astype(np.float64)
    ids, dists = brute_force_topk(data, queries, k)
    write_vecs(ids_path, ids.astype(np.int32), "ivecs")
    write_vecs(dists_path, dists.astype(np.float32), "fvecs")
    return ids, dists
