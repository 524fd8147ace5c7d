"""Orthonormal transforms: seeded random rotations and PCA.

A transform maps a raw vector x to matrix @ (x - mean). Rotations balance
per-dimension magnitudes before grid quantization; PCA concentrates variance
into the leading dimensions so a bit-allocation plan has something to exploit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InsufficientDataError
from .rng import derive_seed

ORTHONORMALITY_TOL = 1e-5

_MAGIC = b"VQTM"
_VERSION = 1


class TransformKind(IntEnum):
    ROTATION = 0
    PCA = 1
    PCA_THEN_ROTATION = 2


@dataclass(frozen=True)
class TransformModel:
    """Orthonormal D x D transform with per-dimension output variances.

    ``matrix`` rows are orthonormal; ``variances[i]`` is the variance of
    output dimension i on the fitted data (descending for PCA). For pure
    rotations ``mean`` is zero and ``variances`` are ones.
    """

    kind: TransformKind
    matrix: np.ndarray
    variances: np.ndarray
    mean: np.ndarray
    seed: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def gen_rotation(dim: int, seed: int) -> TransformModel:
    """Seeded random orthonormal matrix via QR of a Gaussian matrix.

    The diagonal of the triangular factor is forced positive so the result
    is deterministic per (dim, seed).
    """
    if dim < 1:
        raise ValueError(f"rotation dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    return TransformModel(
        kind=TransformKind.ROTATION,
        matrix=q.astype(np.float32),
        variances=np.ones(dim, dtype=np.float32),
        mean=np.zeros(dim, dtype=np.float32),
        seed=seed,
    )


def fit_pca(data: np.ndarray, seed: int, max_rows: int = 100_000) -> TransformModel:
    """PCA of the sample covariance (population 1/N normalization).

    Rows of the returned matrix are principal directions; ``variances`` are
    the eigenvalues in non-increasing order. When data has more than
    ``max_rows`` rows a uniform seeded sample is used for the fit.
    """
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] < 2:
        raise InsufficientDataError("PCA needs at least 2 rows")
    if max_rows is not None and data.shape[0] > max_rows:
        rng = np.random.default_rng(derive_seed(seed, "pca-sample"))
        idx = rng.choice(data.shape[0], size=max_rows, replace=False)
        sample = data[np.sort(idx)]
    else:
        sample = data
    x = sample.astype(np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / centered.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    directions = eigvecs[:, order].T
    return TransformModel(
        kind=TransformKind.PCA,
        matrix=directions.astype(np.float32),
        variances=eigvals.astype(np.float32),
        mean=mean.astype(np.float32),
        seed=seed,
    )


def compose_pca_rotation(pca: TransformModel, rotation: TransformModel) -> TransformModel:
    """Fold PCA projection and a subsequent rotation into one matrix."""
    if pca.dim != rotation.dim:
        raise ValueError(f"dimension mismatch: pca D={pca.dim}, rotation D={rotation.dim}")
    combined = (rotation.matrix.astype(np.float64) @ pca.matrix.astype(np.float64)).astype(np.float32)
    return TransformModel(
        kind=TransformKind.PCA_THEN_ROTATION,
        matrix=combined,
        variances=pca.variances.copy(),
        mean=pca.mean.copy(),
        seed=rotation.seed,
    )


def apply(model: TransformModel, v: np.ndarray) -> np.ndarray:
    """Apply matrix @ (v - mean). Accepts a single vector or an N x D batch."""
    v = np.asarray(v, dtype=np.float32)
    if v.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: model D={model.dim}, vector D={v.shape[-1]}")
    return (v - model.mean) @ model.matrix.T


def save_model(model: TransformModel, path: str | Path) -> None:
    """Write the binary model file (f32 little-endian payload)."""
    dim = model.dim
    header = struct.pack("<4sIBIQ", _MAGIC, _VERSION, int(model.kind), dim, model.seed & 0xFFFFFFFFFFFFFFFF)
    with open(path, "wb") as f:
        f.write(header)
        f.write(model.mean.astype("<f4").tobytes())
        f.write(model.variances.astype("<f4").tobytes())
        f.write(np.ascontiguousarray(model.matrix, dtype="<f4").tobytes())


def load_model(path: str | Path) -> TransformModel:
    with open(path, "rb") as f:
        raw = f.read()
    head_size = struct.calcsize("<4sIBIQ")
    if len(raw) < head_size:
        raise DataFormatError(f"{path}: truncated transform file")
    magic, version, kind, dim, seed = struct.unpack_from("<4sIBIQ", raw, 0)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = head_size + 4 * (2 * dim + dim * dim)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    offset = head_size
    mean = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
    offset += 4 * dim
    variances = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
    offset += 4 * dim
    matrix = np.frombuffer(raw, dtype="<f4", count=dim * dim, offset=offset).reshape(dim, dim).copy()
    return TransformModel(
        kind=TransformKind(kind),
        matrix=matrix,
        variances=variances,
        mean=mean,
        seed=seed,
    )
