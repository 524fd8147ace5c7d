"""Comparison quantizers: product quantization and PCA truncation.

Both are rate-matched against B bits/dimension grid codes for reports:
PQ via M * log2(K) / D, PCA truncation via kept_dims * 32 / D.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InsufficientDataError
from .rng import derive_seed
from .transforms import TransformModel, apply

_PQ_MAGIC = b"VQPQ"

KMEANS_ITERS = 25


def kmeans(data: np.ndarray, k: int, iters: int = KMEANS_ITERS, seed: int = 0) -> np.ndarray:
    """Lloyd iterations with distance-weighted seeding.

    Empty clusters are re-seeded from the points farthest from their current
    centroid. Returns (k, D) float32 centroids.
    """
    data = np.asarray(data, dtype=np.float32)
    n = data.shape[0]
    if n < k:
        raise InsufficientDataError(f"k-means needs at least {k} rows, got {n}")
    rng = np.random.default_rng(seed)
    data64 = data.astype(np.float64)
    sq_norms = np.einsum("nd,nd->n", data64, data64)

    centroids = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = data64[first]
    d2 = sq_norms + sq_norms[first] - 2.0 * (data64 @ data64[first])
    np.maximum(d2, 0.0, out=d2)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centroids[i] = data64[idx]
        cand = sq_norms + sq_norms[idx] - 2.0 * (data64 @ data64[idx])
        np.minimum(d2, np.maximum(cand, 0.0), out=d2)

    for _ in range(iters):
        assign, mind2 = assign_clusters(data, centroids.astype(np.float32))
        for c in range(k):
            members = assign == c
            count = members.sum()
            if count:
                centroids[c] = data64[members].mean(axis=0)
            else:
                centroids[c] = data64[int(np.argmax(mind2))]
                mind2[int(np.argmax(mind2))] = 0.0
    return centroids.astype(np.float32)


def assign_clusters(data: np.ndarray, centroids: np.ndarray, chunk: int = 16384) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment; returns (labels, squared distances)."""
    data = np.asarray(data, dtype=np.float32)
    c64 = centroids.astype(np.float64)
    c_norms = np.einsum("kd,kd->k", c64, c64)
    labels = np.empty(data.shape[0], dtype=np.int64)
    dists = np.empty(data.shape[0], dtype=np.float64)
    for start in range(0, data.shape[0], chunk):
        part = data[start : start + chunk].astype(np.float64)
        d2 = np.einsum("nd,nd->n", part, part)[:, None] - 2.0 * (part @ c64.T) + c_norms[None, :]
        labels[start : start + len(part)] = np.argmin(d2, axis=1)
        dists[start : start + len(part)] = np.maximum(d2[np.arange(len(part)), labels[start : start + len(part)]], 0.0)
    return labels, dists


# ---------------------------------------------------------------------------
# product quantization


@dataclass
class PqModel:
    codebooks: np.ndarray   # (M, K, sub_dim) float32
    raw_dim: int            # original D before padding

    @property
    def m(self) -> int:
        return self.codebooks.shape[0]

    @property
    def k(self) -> int:
        return self.codebooks.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.codebooks.shape[2]

    @property
    def dim(self) -> int:
        return self.m * self.sub_dim

    def bits_per_dim(self) -> float:
        return self.m * math.log2(self.k) / self.raw_dim

    def _pad(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float32))
        if x.shape[1] == self.dim:
            return x
        if x.shape[1] != self.raw_dim:
            raise ValueError(f"dimension mismatch: model D={self.raw_dim}, data D={x.shape[1]}")
        out = np.zeros((x.shape[0], self.dim), dtype=np.float32)
        out[:, : self.raw_dim] = x
        return out


def pq_train(data: np.ndarray, m: int, k: int = 256, iters: int = KMEANS_ITERS, seed: int = 0,
             max_train: int = 65536) -> PqModel:
    """Per-subspace k-means codebooks. K is capped at 256 (one byte per code)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float32))
    n, raw_dim = data.shape
    if k > 256:
        raise ValueError(f"codebook size above 256 is not supported, got {k}")
    if n < k:
        raise InsufficientDataError(f"PQ training needs at least {k} rows, got {n}")
    sub_dim = (raw_dim + m - 1) // m
    padded = np.zeros((n, m * sub_dim), dtype=np.float32)
    padded[:, :raw_dim] = data
    if n > max_train:
        rng = np.random.default_rng(derive_seed(seed, "pq-train-sample"))
        padded = padded[np.sort(rng.choice(n, size=max_train, replace=False))]
    codebooks = np.empty((m, k, sub_dim), dtype=np.float32)
    for sub in range(m):
        block = padded[:, sub * sub_dim : (sub + 1) * sub_dim]
        codebooks[sub] = kmeans(block, k, iters=iters, seed=derive_seed(seed, f"pq-subspace-{sub}"))
    return PqModel(codebooks=codebooks, raw_dim=raw_dim)


def pq_encode_batch(model: PqModel, x: np.ndarray) -> np.ndarray:
    """Nearest codeword per subspace; returns (N, M) uint8 codes."""
    padded = model._pad(x)
    n = padded.shape[0]
    codes = np.empty((n, model.m), dtype=np.uint8)
    for sub in range(model.m):
        block = padded[:, sub * model.sub_dim : (sub + 1) * model.sub_dim].astype(np.float64)
        cb = model.codebooks[sub].astype(np.float64)
        d2 = (
            np.einsum("nd,nd->n", block, block)[:, None]
            - 2.0 * (block @ cb.T)
            + np.einsum("kd,kd->k", cb, cb)[None, :]
        )
        codes[:, sub] = np.argmin(d2, axis=1)
    return codes


def pq_encode(model: PqModel, x: np.ndarray) -> np.ndarray:
    return pq_encode_batch(model, x)[0]


def pq_luts(model: PqModel, q: np.ndarray) -> np.ndarray:
    """(M, K) table of squared distances from the query slices to codewords."""
    q_pad = model._pad(q)[0].astype(np.float64)
    luts = np.empty((model.m, model.k))
    for sub in range(model.m):
        diff = model.codebooks[sub].astype(np.float64) - q_pad[sub * model.sub_dim : (sub + 1) * model.sub_dim]
        luts[sub] = np.einsum("kd,kd->k", diff, diff)
    return luts


def pq_adc(model: PqModel, code: np.ndarray, q: np.ndarray) -> float:
    """Asymmetric distance: sum of per-subspace LUT entries."""
    return float(pq_adc_block(model, np.asarray(code)[None, :], q)[0])


def pq_adc_block(model: PqModel, codes: np.ndarray, q: np.ndarray, luts: np.ndarray | None = None) -> np.ndarray:
    if luts is None:
        luts = pq_luts(model, q)
    return luts[np.arange(model.m)[None, :], codes].sum(axis=1)


def pq_reconstruct(model: PqModel, code: np.ndarray) -> np.ndarray:
    parts = [model.codebooks[sub, code[sub]] for sub in range(model.m)]
    return np.concatenate(parts)[: model.raw_dim]


def save_pq(model: PqModel, path: str | Path) -> None:
    header = struct.pack("<4sIII", _PQ_MAGIC, model.m, model.k, model.sub_dim)
    with open(path, "wb") as f:
        f.write(header)
        f.write(struct.pack("<I", model.raw_dim))
        f.write(np.ascontiguousarray(model.codebooks, dtype="<f4").tobytes())


def load_pq(path: str | Path) -> PqModel:
    with open(path, "rb") as f:
        raw = f.read()
    head = struct.calcsize("<4sIIII")
    if len(raw) < head:
        raise DataFormatError(f"{path}: truncated PQ model")
    magic, m, k, sub_dim, raw_dim = struct.unpack_from("<4sIIII", raw, 0)
    if magic != _PQ_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    expected = head + 4 * m * k * sub_dim
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    codebooks = np.frombuffer(raw, dtype="<f4", offset=head).reshape(m, k, sub_dim).copy()
    return PqModel(codebooks=codebooks, raw_dim=raw_dim)


def pq_subspaces_for_rate(bits_per_dim: float, dim: int, k: int = 256) -> int:
    """Number of subspaces matching a grid-code rate within rounding."""
    return max(1, round(bits_per_dim * dim / math.log2(k)))


# ---------------------------------------------------------------------------
# PCA truncation


@dataclass
class PcaDropModel:
    transform: TransformModel
    kept_dims: int

    def bits_per_dim(self) -> float:
        return self.kept_dims * 32.0 / self.transform.dim


def pca_drop_fit(transform: TransformModel, kept_dims: int) -> PcaDropModel:
    if not 1 <= kept_dims <= transform.dim:
        raise ValueError(f"kept_dims must be in [1, {transform.dim}], got {kept_dims}")
    return PcaDropModel(transform=transform, kept_dims=kept_dims)


def pca_drop_encode(model: PcaDropModel, x: np.ndarray) -> np.ndarray:
    """Leading projected dimensions, stored as plain f32."""
    return apply(model.transform, np.atleast_2d(x))[:, : model.kept_dims]


def pca_drop_distance(model: PcaDropModel, stored_leading: np.ndarray, q: np.ndarray) -> float:
    q_lead = pca_drop_encode(model, q)[0].astype(np.float64)
    stored = np.asarray(stored_leading, dtype=np.float64)
    if stored.shape[0] != model.kept_dims:
        raise ValueError(f"dimension mismatch: stored {stored.shape[0]} dims, kept {model.kept_dims}")
    diff = stored - q_lead
    return float(diff @ diff)


def pca_drop_distance_block(model: PcaDropModel, stored: np.ndarray, q: np.ndarray) -> np.ndarray:
    q_lead = pca_drop_encode(model, q)[0].astype(np.float64)
    diff = stored.astype(np.float64) - q_lead
    return np.einsum("nd,nd->n", diff, diff)


def kept_dims_for_rate(bits_per_dim: float, dim: int) -> int:
    return min(dim, max(1, round(bits_per_dim * dim / 32.0)))
