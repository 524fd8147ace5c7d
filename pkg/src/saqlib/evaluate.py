"""Accuracy and throughput metrics over an IVF index.

Error metrics follow the usual estimator-evaluation protocol: for every
query, every candidate in the probed clusters contributes one relative
error |d2_est - d2_real| / d2_real (candidates at distance exactly 0 are
excluded from the average). Recall and the distance ratio come from an
actual search pass, so pruning and reranking affect them the same way they
would in production.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ivf import IvfIndex, ivf_search

CSV_COLUMNS = [
    "method",
    "B_avg",
    "avg_rel_err",
    "max_rel_err",
    "recall@k",
    "avg_distance_ratio",
    "qps",
    "mean_bits_accessed",
    "quantize_seconds",
    "code_bytes",
]

# wall-clock measurements; excluded from determinism comparisons
TIMING_COLUMNS = ["qps", "quantize_seconds"]


@dataclass
class EvalRow:
    method: str
    b_avg: float
    avg_rel_err: float
    max_rel_err: float
    recall_at_k: float
    avg_distance_ratio: float
    qps: float
    mean_bits_accessed: float
    quantize_seconds: float
    code_bytes: int

    def validate(self) -> None:
        assert self.avg_rel_err <= self.max_rel_err + 1e-12
        assert 0.0 <= self.recall_at_k <= 1.0
        assert self.avg_distance_ratio >= 1.0 - 1e-9

    def as_csv(self) -> list[str]:
        return [
            self.method,
            f"{self.b_avg:g}",
            f"{self.avg_rel_err:.8e}",
            f"{self.max_rel_err:.8e}",
            f"{self.recall_at_k:.6f}",
            f"{self.avg_distance_ratio:.8f}",
            f"{self.qps:.2f}",
            f"{self.mean_bits_accessed:.2f}",
            f"{self.quantize_seconds:.4f}",
            str(self.code_bytes),
        ]


def rows_to_csv(rows: list[EvalRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def _storage_rows_of_ids(index: IvfIndex) -> np.ndarray:
    inverse = np.empty(index.count, dtype=np.int64)
    inverse[index.ids] = np.arange(index.count)
    return inverse


def estimation_errors(index: IvfIndex, q: np.ndarray, nprobe: int) -> tuple[float, float, int]:
    """(sum of relative errors, max relative error, count) over probed candidates."""
    diff = index.centroids.astype(np.float64) - q.astype(np.float64)
    d2 = np.einsum("cd,cd->c", diff, diff)
    probe = np.lexsort((np.arange(index.nlist), d2))[:nprobe]
    state = index.store.query_state(q)
    total, worst, count = 0.0, 0.0, 0
    for cluster in probe:
        lo, hi = int(index.offsets[cluster]), int(index.offsets[cluster + 1])
        if lo == hi:
            continue
        est, _, _ = index.store.estimate_cluster(state, int(cluster), lo, hi, None)
        part = index.vectors[lo:hi].astype(np.float64) - q.astype(np.float64)
        real = np.einsum("nd,nd->n", part, part)
        mask = real > 0
        rel = np.abs(est[mask] - real[mask]) / real[mask]
        if rel.size:
            total += float(rel.sum())
            worst = max(worst, float(rel.max()))
            count += rel.size
    return total, worst, count


def _search_metrics_one(index, q, gt_row, gt_dist_row, k, nprobe, rerank, prune, m, inverse):
    res = ivf_search(index, q, k=k, nprobe=nprobe, rerank=rerank, prune=prune, m=m)
    hit = len(set(res.ids.tolist()) & set(gt_row[:k].tolist())) / k
    rows = inverse[res.ids]
    diff = index.vectors[rows].astype(np.float64) - q.astype(np.float64)
    exact = np.einsum("nd,nd->n", diff, diff)
    exact = np.sort(exact)
    ratios = []
    for slot in range(min(k, exact.shape[0])):
        true_d = gt_dist_row[slot]
        if true_d > 0:
            ratios.append(np.sqrt(exact[slot] / true_d))
        elif exact[slot] == 0:
            ratios.append(1.0)
    ratio = float(np.mean(ratios)) if ratios else 1.0
    return hit, ratio, res.stats.bits_accessed, res.stats.candidates_scanned


def evaluate_index(
    index: IvfIndex,
    queries: np.ndarray,
    gt_ids: np.ndarray,
    gt_dists: np.ndarray,
    k: int = 100,
    nprobe: int = 200,
    rerank: int | None = None,
    prune: bool = True,
    m: float | None = None,
    threads: int = 1,
) -> dict:
    """Error, recall, ratio, and bits-accessed metrics for one index."""
    nprobe = max(1, min(nprobe, index.nlist))
    inverse = _storage_rows_of_ids(index)

    err_sum, err_max, err_count = 0.0, 0.0, 0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda q: estimation_errors(index, q, nprobe), queries))
    else:
        parts = [estimation_errors(index, q, nprobe) for q in queries]
    for total, worst, count in parts:
        err_sum += total
        err_max = max(err_max, worst)
        err_count += count

    worker = lambda j: _search_metrics_one(
        index, queries[j], gt_ids[j], gt_dists[j], k, nprobe, rerank, prune, m, inverse
    )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(len(queries))))
    else:
        results = [worker(j) for j in range(len(queries))]
    hits = [r[0] for r in results]
    ratios = [r[1] for r in results]
    bits = sum(r[2] for r in results)
    scanned = sum(r[3] for r in results)
    return {
        "avg_rel_err": err_sum / err_count if err_count else 0.0,
        "max_rel_err": err_max,
        "recall_at_k": float(np.mean(hits)) if hits else 0.0,
        "avg_distance_ratio": float(np.mean(ratios)) if ratios else 1.0,
        "mean_bits_accessed": bits / scanned if scanned else 0.0,
        "candidates_scanned": scanned,
    }


def bench_qps(
    index: IvfIndex,
    queries: np.ndarray,
    k: int = 100,
    nprobe: int = 200,
    rerank: int | None = None,
    prune: bool = True,
    m: float | None = None,
    threads: int = 1,
    repeats: int = 1,
) -> float:
    """Wall-clock queries/second after a short warmup pass."""
    if len(queries) == 0:
        return 0.0
    nprobe = max(1, min(nprobe, index.nlist))
    for q in queries[: min(5, len(queries))]:
        ivf_search(index, q, k=k, nprobe=nprobe, rerank=rerank, prune=prune, m=m)
    run = lambda q: ivf_search(index, q, k=k, nprobe=nprobe, rerank=rerank, prune=prune, m=m)
    start = time.perf_counter()
    for _ in range(max(1, repeats)):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, queries))
        else:
            for q in queries:
                run(q)
    elapsed = time.perf_counter() - start
    return max(1, repeats) * len(queries) / elapsed if elapsed > 0 else float("inf")
