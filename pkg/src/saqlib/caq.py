"""Grid-code quantization with coordinate-descent direction alignment.

A vector o is snapped onto the uniform grid spanning [-v_max, v_max] per
dimension (2^B cells). The code is then refined one coordinate at a time:
a +/- one-step move is kept iff it strictly improves the cosine between the
reconstruction and o. Only the direction of the reconstruction matters for
the inner-product estimator, which rescales by the stored alignment factor
<recon, o> and the vector norm.

Codes support prefix truncation: the top b bits of each B-bit code form a
valid b-bit code on the same range, so one stored code serves several
accuracy levels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

_MAGIC = b"VQCQ"
_VERSION = 1

DEFAULT_ROUNDS = 6
# relative margin a move must beat to be accepted; guards against float
# oscillation between equal-cosine neighbours
ACCEPT_REL_TOL = 1e-12


def _code_dtype(bits: int):
    return np.uint8 if bits <= 8 else np.uint16


@dataclass
class CaqCode:
    """One quantized vector: per-dimension codes plus estimator scalars."""

    codes: np.ndarray   # (D,) unsigned ints in [0, 2^B - 1]
    v_max: float        # max |o[i]|
    norm_sq: float      # ||o||^2
    dot_oq: float       # <reconstruction, o>, the alignment factor
    bits: int

    @property
    def dim(self) -> int:
        return self.codes.shape[0]

    @property
    def delta(self) -> float:
        return 2.0 * self.v_max / (1 << self.bits)

    @property
    def degenerate(self) -> bool:
        return self.v_max == 0.0

    def reconstruct(self) -> np.ndarray:
        d = self.delta
        return d * (self.codes.astype(np.float64) + 0.5) - self.v_max


@dataclass
class CaqBlock:
    """Columnar codes for a batch of vectors (one code row per vector)."""

    codes: np.ndarray    # (N, D)
    v_max: np.ndarray    # (N,)
    norm_sq: np.ndarray  # (N,)
    dot_oq: np.ndarray   # (N,)
    bits: int

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]

    def row(self, i: int) -> CaqCode:
        return CaqCode(
            codes=self.codes[i],
            v_max=float(self.v_max[i]),
            norm_sq=float(self.norm_sq[i]),
            dot_oq=float(self.dot_oq[i]),
            bits=self.bits,
        )

    def code_bits(self) -> int:
        """Logical size of the stored codes in bits (excluding scalars)."""
        return self.count * self.dim * self.bits


@dataclass
class CaqQueryContext:
    """Per-query precomputation shared by every code it is scored against."""

    q: np.ndarray
    q_sum: float
    q_norm_sq: float


def make_query_context(q: np.ndarray, int_query_bits: int | None = None) -> CaqQueryContext:
    """Build the query context; optionally snap q onto an integer grid.

    ``int_query_bits`` enables the coarse-query fast path: q itself is range
    quantized so the code dot product runs on small-integer values. Off by
    default; estimates then carry the extra query quantization error.
    """
    q = np.asarray(q, dtype=np.float64).ravel()
    if int_query_bits is not None:
        lo, hi = q.min(), q.max()
        if hi > lo:
            levels = (1 << int_query_bits) - 1
            d = (hi - lo) / levels
            q = lo + d * np.floor((q - lo) / d + 0.5)
    return CaqQueryContext(q=q, q_sum=float(q.sum()), q_norm_sq=float(q @ q))


# ---------------------------------------------------------------------------
# quantization


def caq_init_batch(x: np.ndarray, bits: int, chunk: int = 8192) -> CaqBlock:
    """Snap each row of x onto its own symmetric grid (no adjustment)."""
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in [1, 16], got {bits}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    n, dim = x.shape
    cmax = (1 << bits) - 1
    codes = np.empty((n, dim), dtype=_code_dtype(bits))
    v_max = np.empty(n)
    norm_sq = np.empty(n)
    dot_oq = np.empty(n)
    # f64 arithmetic in row chunks keeps temporaries bounded on large batches
    for lo in range(0, n, chunk):
        part = x[lo : lo + chunk].astype(np.float64)
        v = np.abs(part).max(axis=1)
        v_max[lo : lo + chunk] = v
        norm_sq[lo : lo + chunk] = np.einsum("nd,nd->n", part, part)
        delta = 2.0 * v / (1 << bits)
        safe_delta = np.where(delta > 0, delta, 1.0)
        cells = np.clip(np.floor((part + v[:, None]) / safe_delta[:, None]), 0, cmax)
        cells[v == 0] = 0
        codes[lo : lo + chunk] = cells
        recon = safe_delta[:, None] * (cells + 0.5) - v[:, None]
        dots = np.einsum("nd,nd->n", recon, part)
        dots[v == 0] = 0.0
        dot_oq[lo : lo + chunk] = dots
    return CaqBlock(
        codes=codes,
        v_max=v_max.astype(np.float32),
        norm_sq=norm_sq.astype(np.float32),
        dot_oq=dot_oq.astype(np.float32),
        bits=bits,
    )


def caq_init(o: np.ndarray, bits: int) -> CaqCode:
    return caq_init_batch(np.asarray(o)[None, :], bits).row(0)


def caq_adjust_batch(x: np.ndarray, block: CaqBlock, rounds: int = DEFAULT_ROUNDS) -> CaqBlock:
    """Coordinate-descent refinement of a whole block, vectorized over rows.

    Scans dimensions in ascending order; for each dimension tries a +1 then
    a -1 code step and keeps the move iff it stays inside [-v_max, v_max]
    and strictly improves cosine(reconstruction, o). Each move is O(1) per
    vector thanks to incremental <recon, o> / ||recon||^2 updates. Stops
    early after a full round with no accepted move.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    if x.shape != block.codes.shape:
        raise ValueError(f"shape mismatch: data {x.shape} vs codes {block.codes.shape}")
    if rounds == 0:
        return block

    bits = block.bits
    cmax = (1 << bits) - 1
    active = np.flatnonzero(block.v_max > 0)
    codes = block.codes.astype(np.int32).copy()
    if active.size:
        # column-major working copies so per-dimension slices are contiguous;
        # data stays f32, running scalars are f64
        o_t = np.ascontiguousarray(x[active].T)
        c_t = np.ascontiguousarray(codes[active].T)
        v_max = block.v_max[active].astype(np.float64)
        delta = 2.0 * v_max / (1 << bits)
        dim = o_t.shape[0]
        # reconstruction r_i = delta*c_i + off with off = delta/2 - v_max, so
        # <r, o> and ||r||^2 reduce to code sums (no (D, N) f64 temporaries)
        off = delta / 2.0 - v_max
        o_sum = np.einsum("dn->n", o_t, dtype=np.float64)
        co = np.einsum("dn,dn->n", c_t, o_t, dtype=np.float64)
        c_sum = np.einsum("dn->n", c_t, dtype=np.float64)
        c_sq = np.einsum("dn,dn->n", c_t, c_t, dtype=np.float64)
        ip = delta * co + off * o_sum
        ss = delta**2 * c_sq + 2.0 * delta * off * c_sum + dim * off**2
        np.maximum(ss, 1e-300, out=ss)
        metric = ip / np.sqrt(ss)
        for _ in range(rounds):
            moved = False
            for i in range(dim):
                ci = c_t[i]
                oi = o_t[i]
                xi = delta * (ci + 0.5) - v_max
                for step in (1, -1):
                    d = step * delta
                    ip_c = ip + d * oi
                    ss_c = ss + d * (2.0 * xi + d)
                    cand = ip_c / np.sqrt(ss_c)
                    accept = cand > metric + ACCEPT_REL_TOL * np.abs(metric)
                    nc = ci + step
                    accept &= (nc >= 0) & (nc <= cmax)
                    if accept.any():
                        moved = True
                        ci[accept] = nc[accept]
                        xi = delta * (ci + 0.5) - v_max
                        ip[accept] = ip_c[accept]
                        ss[accept] = ss_c[accept]
                        metric[accept] = cand[accept]
            if not moved:
                break
        codes[active] = c_t.T
        # recompute the alignment factor from the final integer codes so the
        # stored scalar carries no incremental-update drift
        co_final = np.einsum("dn,dn->n", c_t, o_t, dtype=np.float64)
        dot = delta * co_final + off * o_sum
        dot_oq = block.dot_oq.copy()
        dot_oq[active] = dot.astype(np.float32)
    else:
        dot_oq = block.dot_oq.copy()
    return CaqBlock(
        codes=codes.astype(_code_dtype(bits)),
        v_max=block.v_max.copy(),
        norm_sq=block.norm_sq.copy(),
        dot_oq=dot_oq,
        bits=bits,
    )


def caq_adjust(o: np.ndarray, code: CaqCode, rounds: int = DEFAULT_ROUNDS) -> CaqCode:
    block = CaqBlock(
        codes=code.codes[None, :].copy(),
        v_max=np.array([code.v_max], dtype=np.float32),
        norm_sq=np.array([code.norm_sq], dtype=np.float32),
        dot_oq=np.array([code.dot_oq], dtype=np.float32),
        bits=code.bits,
    )
    return caq_adjust_batch(np.asarray(o)[None, :], block, rounds).row(0)


def caq_quantize_batch(x: np.ndarray, bits: int, rounds: int = DEFAULT_ROUNDS) -> CaqBlock:
    """Init + adjust in one call."""
    block = caq_init_batch(x, bits)
    return caq_adjust_batch(x, block, rounds)


# ---------------------------------------------------------------------------
# estimation


def caq_estimate_ip(code: CaqCode, ctx: CaqQueryContext) -> float:
    """Estimate <o, q> from the code and the per-query context."""
    if code.dim != ctx.q.shape[0]:
        raise ValueError(f"dimension mismatch: code D={code.dim}, query D={ctx.q.shape[0]}")
    if code.degenerate:
        return 0.0
    if code.dot_oq == 0.0:
        raise ArithmeticError("alignment factor is 0 for a non-degenerate code")
    d = code.delta
    raw = d * float(code.codes.astype(np.float64) @ ctx.q) + ctx.q_sum * (-code.v_max + d / 2.0)
    return raw * code.norm_sq / code.dot_oq


def caq_estimate_dist(code: CaqCode, ctx: CaqQueryContext) -> float:
    """Estimate ||o - q||^2 via the stored norm and the inner-product estimate."""
    return code.norm_sq + ctx.q_norm_sq - 2.0 * caq_estimate_ip(code, ctx)


def block_estimate_ip(block: CaqBlock, ctx: CaqQueryContext) -> np.ndarray:
    """Vectorized <o, q> estimates for every row of a block."""
    if block.dim != ctx.q.shape[0]:
        raise ValueError(f"dimension mismatch: block D={block.dim}, query D={ctx.q.shape[0]}")
    delta = 2.0 * block.v_max.astype(np.float64) / (1 << block.bits)
    raw = delta * (block.codes @ ctx.q) + ctx.q_sum * (-block.v_max + delta / 2.0)
    dot = block.dot_oq.astype(np.float64)
    safe = np.where(dot != 0, dot, 1.0)
    est = raw * block.norm_sq / safe
    return np.where(block.v_max > 0, est, 0.0)


def block_estimate_dist(block: CaqBlock, ctx: CaqQueryContext) -> np.ndarray:
    return block.norm_sq.astype(np.float64) + ctx.q_norm_sq - 2.0 * block_estimate_ip(block, ctx)


def block_estimate_ip_multi(block: CaqBlock, queries: np.ndarray) -> np.ndarray:
    """(N, m) matrix of <o, q> estimates for a batch of m queries."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if block.dim != queries.shape[1]:
        raise ValueError(f"dimension mismatch: block D={block.dim}, queries D={queries.shape[1]}")
    delta = 2.0 * block.v_max.astype(np.float64) / (1 << block.bits)
    q_sums = queries.sum(axis=1, dtype=np.float64)
    prods = (block.codes.astype(np.float32) @ queries.T).astype(np.float64)
    raw = delta[:, None] * prods + (-block.v_max + delta / 2.0)[:, None] * q_sums[None, :]
    dot = block.dot_oq.astype(np.float64)
    safe = np.where(dot != 0, dot, 1.0)
    est = raw * (block.norm_sq / safe)[:, None]
    est[block.v_max == 0] = 0.0
    return est


def block_estimate_dist_multi(block: CaqBlock, queries: np.ndarray) -> np.ndarray:
    """(N, m) matrix of squared-distance estimates for a batch of m queries."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    q_norms = np.einsum("md,md->m", queries.astype(np.float64), queries.astype(np.float64))
    est = block_estimate_ip_multi(block, queries)
    return block.norm_sq.astype(np.float64)[:, None] + q_norms[None, :] - 2.0 * est


# ---------------------------------------------------------------------------
# progressive prefixes


def caq_prefix(code: CaqCode, b: int) -> CaqCode:
    """Take the top b bits of each code; reuses the full-width alignment factor."""
    if not 1 <= b <= code.bits:
        raise ValueError(f"prefix bits must be in [1, {code.bits}], got {b}")
    shift = code.bits - b
    return CaqCode(
        codes=(code.codes >> shift).astype(_code_dtype(b)),
        v_max=code.v_max,
        norm_sq=code.norm_sq,
        dot_oq=code.dot_oq,
        bits=b,
    )


def block_prefix(block: CaqBlock, b: int) -> CaqBlock:
    if not 1 <= b <= block.bits:
        raise ValueError(f"prefix bits must be in [1, {block.bits}], got {b}")
    shift = block.bits - b
    return CaqBlock(
        codes=(block.codes >> shift).astype(_code_dtype(b)),
        v_max=block.v_max,
        norm_sq=block.norm_sq,
        dot_oq=block.dot_oq,
        bits=b,
    )


def block_slice(block: CaqBlock, lo: int, hi: int) -> CaqBlock:
    """Row-range view into a block (no copies)."""
    return CaqBlock(
        codes=block.codes[lo:hi],
        v_max=block.v_max[lo:hi],
        norm_sq=block.norm_sq[lo:hi],
        dot_oq=block.dot_oq[lo:hi],
        bits=block.bits,
    )


def block_concat(blocks: list[CaqBlock]) -> CaqBlock:
    bits = blocks[0].bits
    if any(b.bits != bits for b in blocks):
        raise ValueError("cannot concatenate blocks with different widths")
    return CaqBlock(
        codes=np.concatenate([b.codes for b in blocks], axis=0),
        v_max=np.concatenate([b.v_max for b in blocks]),
        norm_sq=np.concatenate([b.norm_sq for b in blocks]),
        dot_oq=np.concatenate([b.dot_oq for b in blocks]),
        bits=bits,
    )


# ---------------------------------------------------------------------------
# bit packing: one MSB-first bitstream per vector, dimension-major, so the
# high b bits of every field sit in front of the low ones


def packed_size(dim: int, bits: int) -> int:
    return (dim * bits + 7) // 8


def pack_matrix(codes: np.ndarray, bits: int) -> np.ndarray:
    """Pack (N, D) codes into (N, ceil(D*B/8)) bytes."""
    codes = np.atleast_2d(codes)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint16)
    bitplanes = ((codes[:, :, None].astype(np.uint32) >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitplanes.reshape(codes.shape[0], -1), axis=1)


def unpack_matrix(packed: np.ndarray, bits: int, dim: int) -> np.ndarray:
    packed = np.atleast_2d(packed)
    expected = packed_size(dim, bits)
    if packed.shape[1] != expected:
        raise ValueError(f"length mismatch: got {packed.shape[1]} bytes, expected {expected}")
    flat = np.unpackbits(packed, axis=1, count=dim * bits).reshape(packed.shape[0], dim, bits)
    weights = (1 << np.arange(bits - 1, -1, -1, dtype=np.uint32))
    return (flat.astype(np.uint32) * weights).sum(axis=2).astype(_code_dtype(bits))


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    return pack_matrix(np.asarray(codes)[None, :], bits)[0].tobytes()


def unpack_codes(data: bytes, bits: int, dim: int) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size != packed_size(dim, bits):
        raise ValueError(f"length mismatch: got {buf.size} bytes, expected {packed_size(dim, bits)}")
    return unpack_matrix(buf[None, :], bits, dim)[0]


# ---------------------------------------------------------------------------
# code-block file format


def save_block(block: CaqBlock, path: str | Path) -> int:
    """Write a block file; returns bytes written."""
    n, dim = block.count, block.dim
    rec_codes = packed_size(dim, block.bits)
    header = struct.pack("<4sIIHQ", _MAGIC, _VERSION, dim, block.bits, n)
    packed = pack_matrix(block.codes, block.bits)
    scalars = np.stack([block.v_max, block.norm_sq, block.dot_oq], axis=1).astype("<f4")
    records = np.empty((n, rec_codes + 12), dtype=np.uint8)
    records[:, :rec_codes] = packed
    records[:, rec_codes:] = scalars.view(np.uint8)
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())
    return len(header) + records.nbytes


def load_block(path: str | Path) -> CaqBlock:
    with open(path, "rb") as f:
        raw = f.read()
    head_size = struct.calcsize("<4sIIHQ")
    if len(raw) < head_size:
        raise DataFormatError(f"{path}: truncated code block")
    magic, version, dim, bits, n = struct.unpack_from("<4sIIHQ", raw, 0)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    rec_codes = packed_size(dim, bits)
    rec_len = rec_codes + 12
    if len(raw) != head_size + n * rec_len:
        raise DataFormatError(f"{path}: expected {head_size + n * rec_len} bytes, got {len(raw)}")
    records = np.frombuffer(raw, dtype=np.uint8, offset=head_size).reshape(n, rec_len)
    codes = unpack_matrix(np.ascontiguousarray(records[:, :rec_codes]), bits, dim)
    scalars = np.ascontiguousarray(records[:, rec_codes:]).view("<f4").reshape(n, 3)
    return CaqBlock(
        codes=codes,
        v_max=scalars[:, 0].astype(np.float32),
        norm_sq=scalars[:, 1].astype(np.float32),
        dot_oq=scalars[:, 2].astype(np.float32),
        bits=bits,
    )
