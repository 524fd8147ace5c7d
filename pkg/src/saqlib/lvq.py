"""Per-vector range scalar quantization (locally adaptive baseline).

Each mean-centered vector gets its own [lo, hi] range split into 2^B - 1
steps; coordinates are rounded to the nearest step. Distances are computed
against the reconstruction, no rotation involved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

_MAGIC = b"VQLV"
_VERSION = 1


@dataclass
class LvqCode:
    codes: np.ndarray  # (D,) unsigned ints in [0, 2^B - 1]
    lo: float
    hi: float
    bits: int


@dataclass
class LvqBlock:
    """Codes for a batch of vectors sharing one centering mean."""

    codes: np.ndarray  # (N, D)
    lo: np.ndarray     # (N,)
    hi: np.ndarray     # (N,)
    bits: int

    def row(self, i: int) -> LvqCode:
        return LvqCode(self.codes[i], float(self.lo[i]), float(self.hi[i]), self.bits)


def _code_dtype(bits: int):
    return np.uint8 if bits <= 8 else np.uint16


def lvq_quantize_batch(x: np.ndarray, mean: np.ndarray, bits: int) -> LvqBlock:
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in [1, 16], got {bits}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    centered = x.astype(np.float64) - np.asarray(mean, dtype=np.float64)
    lo = centered.min(axis=1)
    hi = centered.max(axis=1)
    span = hi - lo
    levels = (1 << bits) - 1
    # degenerate constant vectors: span 0 -> all codes 0, reconstruction = lo
    delta = np.where(span > 0, span / levels, 1.0)
    codes = np.floor((centered - lo[:, None]) / delta[:, None] + 0.5)
    codes = np.clip(codes, 0, levels).astype(_code_dtype(bits))
    codes[span == 0] = 0
    return LvqBlock(codes=codes, lo=lo.astype(np.float32), hi=hi.astype(np.float32), bits=bits)


def lvq_quantize(x: np.ndarray, mean: np.ndarray, bits: int) -> LvqCode:
    return lvq_quantize_batch(x[None, :], mean, bits).row(0)


def lvq_delta(code: LvqCode) -> float:
    levels = (1 << code.bits) - 1
    return (code.hi - code.lo) / levels if code.hi > code.lo else 0.0


def lvq_reconstruct(code: LvqCode) -> np.ndarray:
    return (code.lo + lvq_delta(code) * code.codes.astype(np.float64)).astype(np.float32)


def lvq_reconstruct_block(block: LvqBlock) -> np.ndarray:
    levels = (1 << block.bits) - 1
    span = block.hi.astype(np.float64) - block.lo.astype(np.float64)
    delta = np.where(span > 0, span / levels, 0.0)
    return (block.lo[:, None] + delta[:, None] * block.codes.astype(np.float64)).astype(np.float32)


def lvq_distance(code: LvqCode, mean: np.ndarray, q: np.ndarray) -> float:
    """Squared Euclidean distance between the reconstruction (un-centered) and q."""
    mean = np.asarray(mean, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q.shape[0] != code.codes.shape[0]:
        raise ValueError(f"dimension mismatch: code D={code.codes.shape[0]}, q D={q.shape[0]}")
    recon = lvq_reconstruct(code).astype(np.float64) + mean
    diff = recon - q
    return float(diff @ diff)


def lvq_distance_block(block: LvqBlock, mean: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared distances of every reconstruction in the block to q."""
    recon = lvq_reconstruct_block(block).astype(np.float64) + np.asarray(mean, dtype=np.float64)
    diff = recon - np.asarray(q, dtype=np.float64)
    return np.einsum("nd,nd->n", diff, diff)


def block_slice(block: LvqBlock, lo: int, hi: int) -> LvqBlock:
    return LvqBlock(codes=block.codes[lo:hi], lo=block.lo[lo:hi], hi=block.hi[lo:hi], bits=block.bits)


def save_block(block: LvqBlock, path: str | Path) -> int:
    """Code block file: packed codes per vector followed by (lo, hi) floats."""
    from .caq import pack_matrix, packed_size

    n, dim = block.codes.shape
    rec_codes = packed_size(dim, block.bits)
    header = struct.pack("<4sIIHQ", _MAGIC, _VERSION, dim, block.bits, n)
    packed = pack_matrix(block.codes, block.bits)
    scalars = np.stack([block.lo, block.hi], axis=1).astype("<f4")
    records = np.empty((n, rec_codes + 8), dtype=np.uint8)
    records[:, :rec_codes] = packed
    records[:, rec_codes:] = scalars.view(np.uint8)
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())
    return len(header) + records.nbytes


def load_block(path: str | Path) -> LvqBlock:
    from .caq import packed_size, unpack_matrix

    with open(path, "rb") as f:
        raw = f.read()
    head_size = struct.calcsize("<4sIIHQ")
    if len(raw) < head_size:
        raise DataFormatError(f"{path}: truncated code block")
    magic, version, dim, bits, n = struct.unpack_from("<4sIIHQ", raw, 0)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    rec_codes = packed_size(dim, bits)
    rec_len = rec_codes + 8
    if len(raw) != head_size + n * rec_len:
        raise DataFormatError(f"{path}: expected {head_size + n * rec_len} bytes, got {len(raw)}")
    records = np.frombuffer(raw, dtype=np.uint8, offset=head_size).reshape(n, rec_len)
    codes = unpack_matrix(np.ascontiguousarray(records[:, :rec_codes]), bits, dim)
    scalars = np.ascontiguousarray(records[:, rec_codes:]).view("<f4").reshape(n, 2)
    return LvqBlock(codes=codes, lo=scalars[:, 0].astype(np.float32), hi=scalars[:, 1].astype(np.float32), bits=bits)
