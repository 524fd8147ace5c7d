"""Dimension segmentation over a PCA spectrum.

Splits the (PCA-projected, variance-sorted) dimensions into contiguous
segments, assigns a bit width per segment under a total bit quota, and
quantizes each segment as an independent grid-code vector after its own
seeded rotation. Plan search is exact dynamic programming over g-aligned
boundaries with the modeled error 2^-B * sum(variances) per segment;
0 bits drops a segment entirely.

Query-time estimation walks segments in plan order (high variance first)
and keeps a Chebyshev-style margin m * sigma_seg for the unevaluated tail,
which yields a running lower bound on the squared distance usable for
candidate pruning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import caq
from .errors import DataFormatError
from .rng import derive_seed
from .transforms import TransformModel, apply, gen_rotation

DEFAULT_GRANULARITY = 64
DEFAULT_BIT_RANGE = (1, 12)
DEFAULT_M = 4.0
# plans within this relative error of the DP minimum compete on segment count
DEFAULT_SEGMENT_SLACK = 1e-3


@dataclass(frozen=True)
class QuantizationPlan:
    """Ordered (length, bits) segments partitioning the padded dimensions."""

    segments: tuple[tuple[int, int], ...]
    total_dims: int
    quota: int
    modeled_error: float

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def cost(self) -> int:
        return sum(length * bits for length, bits in self.segments)

    def offsets(self) -> list[int]:
        out = [0]
        for length, _ in self.segments:
            out.append(out[-1] + length)
        return out

    def bits_per_dim(self) -> float:
        return self.cost / self.total_dims


def model_error(seg_variances: np.ndarray, bits: int) -> float:
    """Modeled estimator error of one segment quantized at ``bits``.

    B=0 means the segment is dropped and contributes its full variance.
    """
    if bits < 0:
        raise ValueError(f"bits must be >= 0, got {bits}")
    total = float(np.sum(np.asarray(seg_variances, dtype=np.float64)))
    return math.ldexp(total, -bits)


def plan_error(segments, variances: np.ndarray) -> float:
    """Re-evaluate a plan's modeled error on a variance profile."""
    variances = np.asarray(variances, dtype=np.float64)
    prefix = np.concatenate([[0.0], np.cumsum(variances)])
    err = 0.0
    offset = 0
    for length, bits in segments:
        err += math.ldexp(prefix[offset + length] - prefix[offset], -bits)
        offset += length
    return err


def pad_variances(variances: np.ndarray, granularity: int) -> np.ndarray:
    """Zero-pad the profile to the next multiple of the segment granularity."""
    variances = np.asarray(variances, dtype=np.float64)
    d = variances.shape[0]
    padded_dim = ((d + granularity - 1) // granularity) * granularity
    out = np.zeros(padded_dim, dtype=np.float64)
    out[:d] = variances
    return out


def search_plan(
    variances: np.ndarray,
    quota: int,
    granularity: int = DEFAULT_GRANULARITY,
    bit_range: tuple[int, int] = DEFAULT_BIT_RANGE,
    segment_slack: float = DEFAULT_SEGMENT_SLACK,
) -> QuantizationPlan:
    """Minimum-modeled-error plan under the bit quota, by dynamic programming.

    States are (g-aligned boundary position, bits spent); transitions append
    one segment with any allowed width. Ties on error prefer fewer segments.
    Among final plans within ``segment_slack`` of the minimum error, the one
    with the fewest segments (then least quota use) wins.
    """
    variances = np.asarray(variances, dtype=np.float64)
    if variances.ndim != 1 or variances.shape[0] == 0:
        raise ValueError("variance profile must be a non-empty 1-D array")
    scale = float(variances.max(initial=0.0))
    if np.any(np.diff(variances) > 1e-6 * max(scale, 1e-30)):
        raise ValueError("variances must be sorted non-increasing")
    if quota < 0:
        raise ValueError(f"quota must be >= 0, got {quota}")
    if granularity < 1:
        raise ValueError(f"granularity must be >= 1, got {granularity}")

    padded = pad_variances(variances, granularity)
    d_pad = padded.shape[0]
    prefix = np.concatenate([[0.0], np.cumsum(padded)])
    npos = d_pad // granularity + 1
    b_min, b_max = bit_range
    if not 1 <= b_min <= b_max:
        raise ValueError(f"bad bit range {bit_range}")
    bits_options = [0] + list(range(b_min, b_max + 1))

    err = np.full((npos, quota + 1), np.inf)
    nseg = np.full((npos, quota + 1), np.iinfo(np.int32).max, dtype=np.int64)
    from_pos = np.full((npos, quota + 1), -1, dtype=np.int32)
    used_bits = np.full((npos, quota + 1), -1, dtype=np.int32)
    err[0, 0] = 0.0
    nseg[0, 0] = 0

    for i in range(npos - 1):
        if not np.isfinite(err[i]).any():
            continue
        for j in range(i + 1, npos):
            seg_len = (j - i) * granularity
            vsum = prefix[j * granularity] - prefix[i * granularity]
            for b in bits_options:
                spend = b * seg_len
                if spend > quota:
                    break
                seg_err = math.ldexp(vsum, -b)
                width = quota + 1 - spend
                src_err = err[i, :width] + seg_err
                src_nseg = nseg[i, :width] + 1
                dst_err = err[j, spend:]
                dst_nseg = nseg[j, spend:]
                better = (src_err < dst_err) | ((src_err == dst_err) & (src_nseg < dst_nseg))
                if better.any():
                    idx = np.flatnonzero(better)
                    dst_err[idx] = src_err[idx]
                    dst_nseg[idx] = src_nseg[idx]
                    from_pos[j, spend + idx] = i
                    used_bits[j, spend + idx] = b

    last = npos - 1
    final_err = err[last]
    best = final_err.min()
    band = best * (1.0 + segment_slack) if math.isfinite(best) else best
    candidates = np.flatnonzero(final_err <= band)
    best_q = min(candidates, key=lambda q: (nseg[last, q], final_err[q], q))

    segments: list[tuple[int, int]] = []
    pos, q = last, int(best_q)
    while pos > 0:
        i = int(from_pos[pos, q])
        b = int(used_bits[pos, q])
        seg_len = (pos - i) * granularity
        segments.append((seg_len, b))
        q -= b * seg_len
        pos = i
    segments.reverse()
    return QuantizationPlan(
        segments=tuple(segments),
        total_dims=d_pad,
        quota=quota,
        modeled_error=float(final_err[best_q]),
    )


def save_plan(plan: QuantizationPlan, path: str | Path) -> None:
    lines = [
        f"D {plan.total_dims}",
        f"quota {plan.quota}",
        f"modeled_error {plan.modeled_error!r}",
    ]
    lines += [f"{length} {bits}" for length, bits in plan.segments]
    Path(path).write_text("\n".join(lines) + "\n")


def load_plan(path: str | Path) -> QuantizationPlan:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        total_dims = int(lines[0].split()[1])
        quota = int(lines[1].split()[1])
        modeled_error = float(lines[2].split()[1])
        segments = tuple((int(a), int(b)) for a, b in (ln.split() for ln in lines[3:]))
    except (IndexError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed plan file") from exc
    if sum(length for length, _ in segments) != total_dims:
        raise DataFormatError(f"{path}: segment lengths do not sum to D")
    return QuantizationPlan(segments, total_dims, quota, modeled_error)


# ---------------------------------------------------------------------------
# segmented quantization


@dataclass
class SegmentCodes:
    """Codes and statistics for one plan segment across all vectors."""

    start: int
    length: int
    bits: int
    rotation_seed: int | None       # None when the segment stores no codes
    block: caq.CaqBlock | None
    variances: np.ndarray           # per-dim variances in the segment's code basis


@dataclass
class SaqCodeSet:
    plan: QuantizationPlan
    segments: list[SegmentCodes]
    norm_sq: np.ndarray             # (N,) squared norms over all padded dims
    seed: int

    @property
    def count(self) -> int:
        return self.norm_sq.shape[0]

    def code_bits_per_vector(self) -> int:
        return sum(s.length * s.bits for s in self.segments if s.block is not None)


def segment_rotations(plan: QuantizationPlan, seed: int) -> list[TransformModel | None]:
    """Deterministic per-segment rotations; None for 0-bit segments."""
    out: list[TransformModel | None] = []
    for idx, (length, bits) in enumerate(plan.segments):
        if bits > 0:
            out.append(gen_rotation(length, derive_seed(seed, f"segment-{idx}-rotation")))
        else:
            out.append(None)
    return out


def pad_columns(x: np.ndarray, total_dims: int) -> np.ndarray:
    if x.shape[1] > total_dims:
        raise ValueError(f"data has {x.shape[1]} dims, plan covers {total_dims}")
    if x.shape[1] == total_dims:
        return x
    out = np.zeros((x.shape[0], total_dims), dtype=x.dtype)
    out[:, : x.shape[1]] = x
    return out


def saq_quantize(
    data: np.ndarray,
    plan: QuantizationPlan,
    pca: TransformModel | None = None,
    seed: int = 0,
    rounds: int = caq.DEFAULT_ROUNDS,
    rotations: list[TransformModel | None] | None = None,
) -> SaqCodeSet:
    """Quantize each plan segment as an independent rotated grid code.

    ``data`` is either already projected/centered or raw with ``pca`` given.
    0-bit segments store no codes, only their variance profile; their energy
    still counts toward the per-vector norms.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float32))
    if pca is not None:
        x = apply(pca, x)
    x = pad_columns(x, plan.total_dims)
    if rotations is None:
        rotations = segment_rotations(plan, seed)
    x64 = x.astype(np.float64)
    norms = np.einsum("nd,nd->n", x64, x64).astype(np.float32)
    segments: list[SegmentCodes] = []
    offset = 0
    for idx, (length, bits) in enumerate(plan.segments):
        part = x[:, offset : offset + length]
        if bits > 0:
            rot = rotations[idx]
            y = part @ rot.matrix.T
            block = caq.caq_quantize_batch(y, bits, rounds)
            variances = y.astype(np.float64).var(axis=0).astype(np.float32)
            segments.append(SegmentCodes(offset, length, bits, rot.seed, block, variances))
        else:
            variances = part.astype(np.float64).var(axis=0).astype(np.float32)
            segments.append(SegmentCodes(offset, length, bits, None, None, variances))
        offset += length
    return SaqCodeSet(plan=plan, segments=segments, norm_sq=norms, seed=seed)


# ---------------------------------------------------------------------------
# query context and multi-stage estimation


@dataclass
class SaqQueryContext:
    """Per-query slices, sums, and tail margins for one code set."""

    q_segments: list[np.ndarray | None]
    q_sums: np.ndarray
    q_norm_sq: float
    sigma: np.ndarray        # sigma_seg per plan segment
    m: float
    margins: np.ndarray      # margins[k]: m * remaining sigma after k evaluated stages
    stage_order: list[int]   # plan indices of segments that hold codes


def saq_query_context(
    q: np.ndarray,
    plan: QuantizationPlan,
    rotations: list[TransformModel | None],
    segment_variances: list[np.ndarray],
    m: float = DEFAULT_M,
    pca: TransformModel | None = None,
) -> SaqQueryContext:
    """Rotate/slice the query per segment and precompute pruning margins.

    ``segment_variances`` holds per-dimension variances in each segment's
    code basis (post-rotation for coded segments, raw for dropped ones).
    """
    if m <= 0:
        raise ValueError(f"m must be > 0, got {m}")
    q = np.asarray(q, dtype=np.float32).ravel()
    if pca is not None:
        q = apply(pca, q)
    q = pad_columns(q[None, :], plan.total_dims)[0]
    q64 = q.astype(np.float64)
    q_norm_sq = float(q64 @ q64)
    q_segments: list[np.ndarray | None] = []
    q_sums = np.zeros(plan.n_segments)
    sigma = np.zeros(plan.n_segments)
    offset = 0
    stage_order: list[int] = []
    for idx, (length, bits) in enumerate(plan.segments):
        part = q[offset : offset + length]
        var = np.asarray(segment_variances[idx], dtype=np.float64)
        if bits > 0:
            rotated = (part @ rotations[idx].matrix.T).astype(np.float64)
            q_segments.append(rotated)
            q_sums[idx] = rotated.sum()
            sigma[idx] = math.sqrt(float(rotated**2 @ var))
            stage_order.append(idx)
        else:
            q_segments.append(None)
            sigma[idx] = math.sqrt(float(part.astype(np.float64) ** 2 @ var))
        offset += length
    dropped_sigma = sum(sigma[idx] for idx, (_, bits) in enumerate(plan.segments) if bits == 0)
    margins = np.zeros(len(stage_order) + 1)
    margins[-1] = m * dropped_sigma
    for k in range(len(stage_order) - 1, -1, -1):
        margins[k] = margins[k + 1] + m * sigma[stage_order[k]]
    return SaqQueryContext(
        q_segments=q_segments,
        q_sums=q_sums,
        q_norm_sq=q_norm_sq,
        sigma=sigma,
        m=m,
        margins=margins,
        stage_order=stage_order,
    )


@dataclass
class MultistageResult:
    distance: float
    pruned: bool
    bits_accessed: int


def _segment_ip(seg: SegmentCodes, seg_idx: int, ctx: SaqQueryContext, rows: np.ndarray | None) -> np.ndarray:
    block = seg.block
    codes = block.codes if rows is None else block.codes[rows]
    v_max = (block.v_max if rows is None else block.v_max[rows]).astype(np.float64)
    norm_sq = block.norm_sq if rows is None else block.norm_sq[rows]
    dot_oq = (block.dot_oq if rows is None else block.dot_oq[rows]).astype(np.float64)
    delta = 2.0 * v_max / (1 << block.bits)
    q_seg = ctx.q_segments[seg_idx]
    raw = delta * (codes.astype(np.float32) @ q_seg.astype(np.float32)).astype(np.float64)
    raw += ctx.q_sums[seg_idx] * (-v_max + delta / 2.0)
    safe = np.where(dot_oq != 0, dot_oq, 1.0)
    est = raw * norm_sq / safe
    return np.where(v_max > 0, est, 0.0)


def multistage_batch(
    code_set: SaqCodeSet,
    ctx: SaqQueryContext,
    threshold: float | None = None,
    rows: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Estimate distances for many vectors with stage-wise pruning.

    Returns (distances, pruned, bits_accessed). Pruned rows carry the lower
    bound that disqualified them instead of a full estimate.
    """
    ids = np.arange(code_set.count) if rows is None else np.asarray(rows)
    n = ids.shape[0]
    norms = code_set.norm_sq[ids].astype(np.float64)
    partial = np.zeros(n)
    dist = np.zeros(n)
    pruned = np.zeros(n, dtype=bool)
    bits_out = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    base = norms + ctx.q_norm_sq
    bits_so_far = 0
    for k, seg_idx in enumerate(ctx.stage_order):
        if active.size == 0:
            break
        seg = code_set.segments[seg_idx]
        partial[active] += _segment_ip(seg, seg_idx, ctx, ids[active])
        bits_so_far += seg.length * seg.bits
        bits_out[active] = bits_so_far
        if threshold is not None:
            bound = base[active] - 2.0 * (partial[active] + ctx.margins[k + 1])
            cut = bound > threshold
            if cut.any():
                cut_rows = active[cut]
                dist[cut_rows] = bound[cut]
                pruned[cut_rows] = True
                active = active[~cut]
    dist[active] = base[active] - 2.0 * partial[active]
    return dist, pruned, bits_out


def saq_estimate_multistage(
    code_set: SaqCodeSet,
    row: int,
    ctx: SaqQueryContext,
    prune_threshold: float | None = None,
) -> MultistageResult:
    """Single-vector form of the staged estimator."""
    dist, pruned, bits = multistage_batch(code_set, ctx, prune_threshold, rows=np.array([row]))
    return MultistageResult(distance=float(dist[0]), pruned=bool(pruned[0]), bits_accessed=int(bits[0]))


# ---------------------------------------------------------------------------
# persistence: plan file + one code block per coded segment


def save_code_set(code_set: SaqCodeSet, directory: str | Path) -> int:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_plan(code_set.plan, directory / "plan.txt")
    total = 0
    for idx, seg in enumerate(code_set.segments):
        np.asarray(seg.variances, dtype="<f4").tofile(directory / f"seg{idx}.var.f32")
        if seg.block is not None:
            total += caq.save_block(seg.block, directory / f"seg{idx}.vqcq")
    code_set.norm_sq.astype("<f4").tofile(directory / "norms.f32")
    meta = {
        "seed": code_set.seed,
        "count": int(code_set.count),
        "rotation_seeds": [s.rotation_seed for s in code_set.segments],
    }
    (directory / "meta.json").write_text(json.dumps(meta))
    return total


def load_code_set(directory: str | Path) -> SaqCodeSet:
    directory = Path(directory)
    plan = load_plan(directory / "plan.txt")
    meta = json.loads((directory / "meta.json").read_text())
    norms = np.fromfile(directory / "norms.f32", dtype="<f4")
    if norms.shape[0] != meta["count"]:
        raise DataFormatError(f"{directory}: norm count mismatch")
    segments: list[SegmentCodes] = []
    offset = 0
    for idx, (length, bits) in enumerate(plan.segments):
        variances = np.fromfile(directory / f"seg{idx}.var.f32", dtype="<f4")
        if bits > 0:
            block = caq.load_block(directory / f"seg{idx}.vqcq")
            segments.append(SegmentCodes(offset, length, bits, meta["rotation_seeds"][idx], block, variances))
        else:
            segments.append(SegmentCodes(offset, length, bits, None, None, variances))
        offset += length
    return SaqCodeSet(plan=plan, segments=segments, norm_sq=norms, seed=meta["seed"])
