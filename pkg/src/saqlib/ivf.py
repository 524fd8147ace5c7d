"""Inverted-file index with pluggable quantized storage.

Vectors are clustered by k-means, stored cluster-contiguously, and encoded
relative to their owning centroid (except quantizers that are defined on
raw vectors). Search probes the nearest nprobe centroids, scores candidates
with the configured estimator, and keeps a running top-k whose k-th distance
feeds the staged estimator's pruning threshold. Optional exact reranking
re-scores the best estimates from the raw vector store.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import caq, lvq, saq
from .errors import DataFormatError
from .rng import derive_seed
from .transforms import TransformModel, apply, fit_pca, gen_rotation, load_model, save_model

COARSE_KMEANS_ITERS = 10
COARSE_SAMPLE_PER_LIST = 64
COARSE_SAMPLE_FLOOR = 16384


def default_nlist(n: int) -> int:
    return 4096 if n >= 1_000_000 else max(16, int(math.isqrt(n)))


@dataclass
class SearchStats:
    bits_accessed: int = 0
    candidates_scanned: int = 0


@dataclass
class SearchResult:
    ids: np.ndarray
    distances: np.ndarray
    stats: SearchStats


# ---------------------------------------------------------------------------
# quantized stores: one per method, sharing a small duck-typed interface
#   query_state(q) -> opaque state
#   estimate_cluster(state, cluster, lo, hi, threshold) -> (dists, pruned, bits)


class CaqStore:
    kind = "caq"
    prunes = False

    def __init__(self, rotation: TransformModel, rotated_centroids: np.ndarray, block: caq.CaqBlock):
        self.rotation = rotation
        self.rotated_centroids = rotated_centroids
        self.block = block

    @classmethod
    def build(cls, vectors, centroids, labels, offsets, bits, rounds, seed):
        dim = vectors.shape[1]
        start = time.perf_counter()
        rotation = gen_rotation(dim, derive_seed(seed, "caq-rotation"))
        rotated = vectors @ rotation.matrix.T
        rotated_centroids = centroids @ rotation.matrix.T
        residuals = rotated - rotated_centroids[labels]
        store = cls(rotation, rotated_centroids, caq.caq_quantize_batch(residuals, bits, rounds))
        store.quantize_seconds = time.perf_counter() - start
        return store

    def query_state(self, q: np.ndarray):
        return q.astype(np.float32) @ self.rotation.matrix.T

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        ctx = caq.make_query_context(state - self.rotated_centroids[cluster])
        dists = caq.block_estimate_dist(caq.block_slice(self.block, lo, hi), ctx)
        n = hi - lo
        bits = np.full(n, self.block.dim * self.block.bits, dtype=np.int64)
        return dists, np.zeros(n, dtype=bool), bits

    def code_bytes(self) -> int:
        return self.block.count * (caq.packed_size(self.block.dim, self.block.bits) + 12)

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        save_model(self.rotation, directory / "rotation.vqtm")
        self.rotated_centroids.astype("<f4").tofile(directory / "rotated_centroids.f32")
        codes_dir = directory / "codes"
        codes_dir.mkdir(exist_ok=True)
        for j in range(len(offsets) - 1):
            caq.save_block(caq.block_slice(self.block, offsets[j], offsets[j + 1]), codes_dir / f"c{j:05d}.vqcq")

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        rotation = load_model(directory / "rotation.vqtm")
        dim = rotation.dim
        rotated_centroids = np.fromfile(directory / "rotated_centroids.f32", dtype="<f4").reshape(-1, dim)
        blocks = [caq.load_block(directory / "codes" / f"c{j:05d}.vqcq") for j in range(len(offsets) - 1)]
        return cls(rotation, rotated_centroids, caq.block_concat(blocks))


class SaqStore:
    kind = "saq"
    prunes = True

    def __init__(self, pca, proj_centroids, plan, rotations, code_set, m):
        self.pca = pca
        self.proj_centroids = proj_centroids   # (C, padded D)
        self.plan = plan
        self.rotations = rotations
        self.code_set = code_set
        self.m = m
        self.seg_variances = [s.variances for s in code_set.segments]

    @classmethod
    def build(cls, vectors, centroids, labels, offsets, quota, m, rounds, seed,
              granularity=saq.DEFAULT_GRANULARITY, bit_range=saq.DEFAULT_BIT_RANGE,
              pca_max_rows=100_000):
        pca = fit_pca(vectors, seed=derive_seed(seed, "saq-pca"), max_rows=pca_max_rows)
        projected = apply(pca, vectors)
        proj_centroids_raw = apply(pca, centroids)
        start = time.perf_counter()
        plan = saq.search_plan(pca.variances.astype(np.float64), quota, granularity, bit_range)
        proj_centroids = saq.pad_columns(proj_centroids_raw, plan.total_dims)
        residuals = saq.pad_columns(projected, plan.total_dims) - proj_centroids[labels]
        rotations = saq.segment_rotations(plan, seed)
        code_set = saq.saq_quantize(residuals, plan, seed=seed, rounds=rounds, rotations=rotations)
        store = cls(pca, proj_centroids, plan, rotations, code_set, m)
        store.quantize_seconds = time.perf_counter() - start
        return store

    def query_state(self, q: np.ndarray, m: float | None = None):
        q_proj = saq.pad_columns(apply(self.pca, q[None, :]), self.plan.total_dims)[0]
        return (q_proj, self.m if m is None else m)

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        q_proj, m = state
        residual_q = q_proj - self.proj_centroids[cluster]
        ctx = saq.saq_query_context(residual_q, self.plan, self.rotations, self.seg_variances, m=m)
        return saq.multistage_batch(self.code_set, ctx, threshold, rows=np.arange(lo, hi))

    def code_bytes(self) -> int:
        n = self.code_set.count
        total = 4 * n  # norms
        for seg in self.code_set.segments:
            if seg.block is not None:
                total += n * (caq.packed_size(seg.length, seg.bits) + 12)
        return total

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        save_model(self.pca, directory / "pca.vqtm")
        self.proj_centroids.astype("<f4").tofile(directory / "proj_centroids.f32")
        saq.save_plan(self.plan, directory / "plan.txt")
        self.code_set.norm_sq.astype("<f4").tofile(directory / "norms.f32")
        codes_dir = directory / "codes"
        codes_dir.mkdir(exist_ok=True)
        for idx, seg in enumerate(self.code_set.segments):
            np.asarray(seg.variances, dtype="<f4").tofile(directory / f"seg{idx}.var.f32")
            if seg.block is None:
                continue
            for j in range(len(offsets) - 1):
                caq.save_block(
                    caq.block_slice(seg.block, offsets[j], offsets[j + 1]),
                    codes_dir / f"c{j:05d}-seg{idx}.vqcq",
                )

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        pca = load_model(directory / "pca.vqtm")
        plan = saq.load_plan(directory / "plan.txt")
        proj_centroids = np.fromfile(directory / "proj_centroids.f32", dtype="<f4").reshape(-1, plan.total_dims)
        norms = np.fromfile(directory / "norms.f32", dtype="<f4")
        seed = meta["seed"]
        rotations = saq.segment_rotations(plan, seed)
        segments = []
        offset = 0
        for idx, (length, bits) in enumerate(plan.segments):
            variances = np.fromfile(directory / f"seg{idx}.var.f32", dtype="<f4")
            if bits > 0:
                blocks = [
                    caq.load_block(directory / "codes" / f"c{j:05d}-seg{idx}.vqcq")
                    for j in range(len(offsets) - 1)
                ]
                block = caq.block_concat(blocks)
                rotation_seed = rotations[idx].seed
            else:
                block, rotation_seed = None, None
            segments.append(saq.SegmentCodes(offset, length, bits, rotation_seed, block, variances))
            offset += length
        code_set = saq.SaqCodeSet(plan=plan, segments=segments, norm_sq=norms, seed=seed)
        return cls(pca, proj_centroids, plan, rotations, code_set, meta["params"]["m"])


class LvqStore:
    kind = "lvq"
    prunes = False

    def __init__(self, mean: np.ndarray, block: lvq.LvqBlock):
        self.mean = mean
        self.block = block

    @classmethod
    def build(cls, vectors, centroids, labels, offsets, bits, seed):
        start = time.perf_counter()
        mean = vectors.astype(np.float64).mean(axis=0).astype(np.float32)
        store = cls(mean, lvq.lvq_quantize_batch(vectors, mean, bits))
        store.quantize_seconds = time.perf_counter() - start
        return store

    def query_state(self, q: np.ndarray):
        return q.astype(np.float64)

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        dists = lvq.lvq_distance_block(lvq.block_slice(self.block, lo, hi), self.mean, state)
        n = hi - lo
        bits = np.full(n, self.block.codes.shape[1] * self.block.bits, dtype=np.int64)
        return dists, np.zeros(n, dtype=bool), bits

    def code_bytes(self) -> int:
        n, dim = self.block.codes.shape
        return n * (caq.packed_size(dim, self.block.bits) + 8)

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        self.mean.astype("<f4").tofile(directory / "mean.f32")
        codes_dir = directory / "codes"
        codes_dir.mkdir(exist_ok=True)
        for j in range(len(offsets) - 1):
            lvq.save_block(lvq.block_slice(self.block, offsets[j], offsets[j + 1]), codes_dir / f"c{j:05d}.vqlv")

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        mean = np.fromfile(directory / "mean.f32", dtype="<f4")
        blocks = [lvq.load_block(directory / "codes" / f"c{j:05d}.vqlv") for j in range(len(offsets) - 1)]
        codes = np.concatenate([b.codes for b in blocks], axis=0)
        lo = np.concatenate([b.lo for b in blocks])
        hi = np.concatenate([b.hi for b in blocks])
        return cls(mean, lvq.LvqBlock(codes=codes, lo=lo, hi=hi, bits=blocks[0].bits))


class PqStore:
    kind = "pq"
    prunes = False

    def __init__(self, model: bl.PqModel, centroids: np.ndarray, codes: np.ndarray):
        self.model = model
        self.centroids = centroids
        self.codes = codes

    @classmethod
    def build(cls, vectors, centroids, labels, offsets, m_subspaces, k_codebook, iters, seed):
        start = time.perf_counter()
        residuals = vectors - centroids[labels]
        model = bl.pq_train(residuals, m_subspaces, k_codebook, iters=iters, seed=derive_seed(seed, "pq"))
        store = cls(model, centroids, bl.pq_encode_batch(model, residuals))
        store.quantize_seconds = time.perf_counter() - start
        return store

    def query_state(self, q: np.ndarray):
        return q.astype(np.float32)

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        luts = bl.pq_luts(self.model, state - self.centroids[cluster])
        dists = bl.pq_adc_block(self.model, self.codes[lo:hi], state, luts=luts)
        n = hi - lo
        per = int(round(self.model.m * math.log2(self.model.k)))
        return dists, np.zeros(n, dtype=bool), np.full(n, per, dtype=np.int64)

    def code_bytes(self) -> int:
        return self.codes.shape[0] * self.codes.shape[1]

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        bl.save_pq(self.model, directory / "pq.vqpq")
        self.codes.tofile(directory / "pq_codes.u8")

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        model = bl.load_pq(directory / "pq.vqpq")
        codes = np.fromfile(directory / "pq_codes.u8", dtype=np.uint8).reshape(-1, model.m)
        centroids = np.fromfile(directory / "centroids.bin", dtype="<f4").reshape(-1, model.raw_dim)
        return cls(model, centroids, codes)


class PcaStore:
    kind = "pca"
    prunes = False

    def __init__(self, model: bl.PcaDropModel, stored: np.ndarray):
        self.model = model
        self.stored = stored

    @classmethod
    def build(cls, vectors, centroids, labels, offsets, kept_dims, seed, pca_max_rows=100_000):
        transform = fit_pca(vectors, seed=derive_seed(seed, "pca-drop"), max_rows=pca_max_rows)
        start = time.perf_counter()
        model = bl.pca_drop_fit(transform, kept_dims)
        store = cls(model, bl.pca_drop_encode(model, vectors))
        store.quantize_seconds = time.perf_counter() - start
        return store

    def query_state(self, q: np.ndarray):
        return bl.pca_drop_encode(self.model, q)[0].astype(np.float64)

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        diff = self.stored[lo:hi].astype(np.float64) - state
        dists = np.einsum("nd,nd->n", diff, diff)
        n = hi - lo
        return dists, np.zeros(n, dtype=bool), np.full(n, self.model.kept_dims * 32, dtype=np.int64)

    def code_bytes(self) -> int:
        return self.stored.shape[0] * self.stored.shape[1] * 4

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        save_model(self.model.transform, directory / "pca.vqtm")
        self.stored.astype("<f4").tofile(directory / "stored.f32")

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        transform = load_model(directory / "pca.vqtm")
        model = bl.pca_drop_fit(transform, meta["params"]["kept_dims"])
        stored = np.fromfile(directory / "stored.f32", dtype="<f4").reshape(-1, model.kept_dims)
        return cls(model, stored)


class ExactStore:
    """Exact f32 distances; the no-quantization reference point."""

    kind = "exact"
    prunes = False

    def __init__(self, vectors: np.ndarray):
        self.vectors = vectors

    @classmethod
    def build(cls, vectors, centroids, labels, offsets):
        store = cls(vectors)
        store.quantize_seconds = 0.0
        return store

    def query_state(self, q: np.ndarray):
        return q.astype(np.float64)

    def estimate_cluster(self, state, cluster, lo, hi, threshold):
        diff = self.vectors[lo:hi].astype(np.float64) - state
        dists = np.einsum("nd,nd->n", diff, diff)
        n = hi - lo
        return dists, np.zeros(n, dtype=bool), np.full(n, self.vectors.shape[1] * 32, dtype=np.int64)

    def code_bytes(self) -> int:
        return self.vectors.shape[0] * self.vectors.shape[1] * 4

    def save(self, directory: Path, offsets: np.ndarray) -> None:
        pass

    @classmethod
    def load(cls, directory: Path, offsets: np.ndarray, meta: dict):
        vectors = np.fromfile(directory / "vectors.bin", dtype="<f4").reshape(-1, meta["dim"])
        return cls(vectors)


for _cls in (CaqStore, SaqStore, LvqStore, PqStore, PcaStore, ExactStore):
    _cls.quantize_seconds = 0.0

_STORES = {s.kind: s for s in (CaqStore, SaqStore, LvqStore, PqStore, PcaStore, ExactStore)}


# ---------------------------------------------------------------------------


@dataclass
class IvfIndex:
    centroids: np.ndarray     # (C, D)
    offsets: np.ndarray       # (C+1,) storage row ranges per cluster
    ids: np.ndarray           # (N,) original ids in storage order
    vectors: np.ndarray       # (N, D) raw vectors in storage order
    store: object
    quantizer: str
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    @property
    def count(self) -> int:
        return self.ids.shape[0]

    def list_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)


def ivf_build(
    data: np.ndarray,
    nlist: int | None = None,
    quantizer: str = "saq",
    seed: int = 0,
    bits: float = 4.0,
    rounds: int = caq.DEFAULT_ROUNDS,
    m: float = saq.DEFAULT_M,
    k_codebook: int = 256,
    granularity: int = saq.DEFAULT_GRANULARITY,
    bit_range: tuple[int, int] = saq.DEFAULT_BIT_RANGE,
    kmeans_iters: int = COARSE_KMEANS_ITERS,
    pq_iters: int = bl.KMEANS_ITERS,
) -> IvfIndex:
    """Cluster, center, and quantize a dataset.

    ``bits`` is the average bit rate per dimension: exact for caq/lvq,
    a quota of round(bits * D) for saq, and rate-matched code sizes for
    pq (bytes) and pca (kept f32 dims).
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float32))
    n, dim = data.shape
    if nlist is None:
        nlist = default_nlist(n)
    if not 1 <= nlist <= n:
        raise ValueError(f"nlist must be in [1, {n}], got {nlist}")
    if quantizer not in _STORES:
        raise ValueError(f"unknown quantizer {quantizer!r}")

    rng = np.random.default_rng(derive_seed(seed, "coarse-sample"))
    sample_cap = min(n, max(COARSE_SAMPLE_PER_LIST * nlist, COARSE_SAMPLE_FLOOR))
    if sample_cap < n:
        sample = data[np.sort(rng.choice(n, size=sample_cap, replace=False))]
    else:
        sample = data
    centroids = bl.kmeans(sample, nlist, iters=kmeans_iters, seed=derive_seed(seed, "coarse-kmeans"))
    labels, _ = bl.assign_clusters(data, centroids)

    order = np.argsort(labels, kind="stable")
    ids = order.astype(np.int64)
    vectors = data[order]
    sorted_labels = labels[order]
    counts = np.bincount(sorted_labels, minlength=nlist)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    params: dict = {"bits": bits}
    if quantizer == "caq":
        store = CaqStore.build(vectors, centroids, sorted_labels, offsets, int(bits), rounds, seed)
        params.update(rounds=rounds)
    elif quantizer == "saq":
        quota = int(round(bits * dim))
        store = SaqStore.build(
            vectors, centroids, sorted_labels, offsets, quota, m, rounds, seed,
            granularity=granularity, bit_range=bit_range,
        )
        params.update(quota=quota, m=m, rounds=rounds, granularity=granularity)
    elif quantizer == "lvq":
        store = LvqStore.build(vectors, centroids, sorted_labels, offsets, int(bits), seed)
    elif quantizer == "pq":
        m_subspaces = bl.pq_subspaces_for_rate(bits, dim, k_codebook)
        store = PqStore.build(vectors, centroids, sorted_labels, offsets, m_subspaces, k_codebook, pq_iters, seed)
        params.update(m_subspaces=m_subspaces, k_codebook=k_codebook)
    elif quantizer == "pca":
        kept = bl.kept_dims_for_rate(bits, dim)
        store = PcaStore.build(vectors, centroids, sorted_labels, offsets, kept, seed)
        params.update(kept_dims=kept)
    else:
        store = ExactStore.build(vectors, centroids, sorted_labels, offsets)
    return IvfIndex(
        centroids=centroids,
        offsets=offsets,
        ids=ids,
        vectors=vectors,
        store=store,
        quantizer=quantizer,
        seed=seed,
        params=params,
    )


def ivf_search(
    index: IvfIndex,
    q: np.ndarray,
    k: int,
    nprobe: int,
    rerank: int | None = None,
    prune: bool = True,
    m: float | None = None,
) -> SearchResult:
    """Top-k search over the nprobe nearest clusters.

    Ties on estimated distance break toward the lower vector id. When the
    store supports staged pruning, the current k-th best estimate is its
    threshold; pruning starts once k candidates have been scored.
    """
    q = np.asarray(q, dtype=np.float32).ravel()
    if q.shape[0] != index.vectors.shape[1]:
        raise ValueError(f"dimension mismatch: index D={index.vectors.shape[1]}, query D={q.shape[0]}")
    nprobe = max(1, min(nprobe, index.nlist))
    diff = index.centroids.astype(np.float64) - q.astype(np.float64)
    centroid_d2 = np.einsum("cd,cd->c", diff, diff)
    probe_order = np.lexsort((np.arange(index.nlist), centroid_d2))[:nprobe]

    if index.quantizer == "saq" and m is not None:
        state = index.store.query_state(q, m=m)
    else:
        state = index.store.query_state(q)

    use_heap = prune and getattr(index.store, "prunes", False)
    heap: list[tuple[float, int]] = []  # (-dist, -id)
    rows_all: list[np.ndarray] = []
    dists_all: list[np.ndarray] = []
    stats = SearchStats()
    for cluster in probe_order:
        lo, hi = int(index.offsets[cluster]), int(index.offsets[cluster + 1])
        if lo == hi:
            continue
        threshold = -heap[0][0] if (use_heap and len(heap) == k) else None
        dists, pruned, bits = index.store.estimate_cluster(state, int(cluster), lo, hi, threshold)
        stats.bits_accessed += int(bits.sum())
        stats.candidates_scanned += hi - lo
        keep = ~pruned
        rows = np.arange(lo, hi)[keep]
        kept_d = dists[keep]
        rows_all.append(rows)
        dists_all.append(kept_d)
        if use_heap:
            kept_ids = index.ids[rows]
            for dist, vid in zip(kept_d, kept_ids):
                entry = (-float(dist), -int(vid))
                if len(heap) < k:
                    heapq.heappush(heap, entry)
                elif entry > heap[0]:
                    heapq.heapreplace(heap, entry)

    if not rows_all:
        return SearchResult(np.empty(0, np.int64), np.empty(0), stats)
    rows = np.concatenate(rows_all)
    dists = np.concatenate(dists_all)
    cand_ids = index.ids[rows]
    order = np.lexsort((cand_ids, dists))
    if rerank:
        top = order[: max(int(rerank), k)]
        diff = index.vectors[rows[top]].astype(np.float64) - q.astype(np.float64)
        exact = np.einsum("nd,nd->n", diff, diff)
        reorder = np.lexsort((cand_ids[top], exact))[:k]
        return SearchResult(cand_ids[top][reorder], exact[reorder], stats)
    order = order[:k]
    return SearchResult(cand_ids[order], dists[order], stats)


# ---------------------------------------------------------------------------
# persistence


def save_index(index: IvfIndex, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index.centroids.astype("<f4").tofile(directory / "centroids.bin")
    index.vectors.astype("<f4").tofile(directory / "vectors.bin")
    with open(directory / "lists.bin", "wb") as f:
        f.write(np.uint32(index.nlist).tobytes())
        f.write(index.offsets.astype("<u8").tobytes())
        f.write(index.ids.astype("<u4").tobytes())
    meta = {
        "format": "saqlib-ivf-v1",
        "quantizer": index.quantizer,
        "nlist": int(index.nlist),
        "count": int(index.count),
        "dim": int(index.vectors.shape[1]),
        "seed": index.seed,
        "params": index.params,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    index.store.save(directory, index.offsets)


def load_index(directory: str | Path) -> IvfIndex:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("format") != "saqlib-ivf-v1":
        raise DataFormatError(f"{directory}: not an index directory")
    dim, count, nlist = meta["dim"], meta["count"], meta["nlist"]
    centroids = np.fromfile(directory / "centroids.bin", dtype="<f4").reshape(nlist, dim)
    vectors = np.fromfile(directory / "vectors.bin", dtype="<f4").reshape(count, dim)
    with open(directory / "lists.bin", "rb") as f:
        raw = f.read()
    stored_nlist = int(np.frombuffer(raw, dtype="<u4", count=1)[0])
    if stored_nlist != nlist:
        raise DataFormatError(f"{directory}: nlist mismatch in lists.bin")
    offsets = np.frombuffer(raw, dtype="<u8", count=nlist + 1, offset=4).astype(np.int64)
    ids = np.frombuffer(raw, dtype="<u4", offset=4 + 8 * (nlist + 1)).astype(np.int64)
    if ids.shape[0] != count:
        raise DataFormatError(f"{directory}: id count mismatch in lists.bin")
    store = _STORES[meta["quantizer"]].load(directory, offsets, meta)
    return IvfIndex(
        centroids=centroids,
        offsets=offsets,
        ids=ids,
        vectors=vectors,
        store=store,
        quantizer=meta["quantizer"],
        seed=meta["seed"],
        params=meta["params"],
    )
