"""Shared oracles used across test modules.

These are deliberately naive implementations (enumeration, direct f64
arithmetic) kept independent of the library code paths they check.
"""

import itertools

import numpy as np


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def grid_codebook(v_max: float, bits: int, dim: int) -> np.ndarray:
    """All (2^bits)^dim reconstructions of the symmetric grid."""
    delta = 2.0 * v_max / (1 << bits)
    cells = np.arange(1 << bits, dtype=np.float64)
    midpoints = delta * (cells + 0.5) - v_max
    combos = np.array(list(itertools.product(midpoints, repeat=dim)))
    return combos


def exhaustive_best_cosine(o: np.ndarray, bits: int) -> float:
    """Best achievable cosine over the full grid codebook for vector o."""
    o = np.asarray(o, dtype=np.float64)
    v_max = float(np.abs(o).max())
    codebook = grid_codebook(v_max, bits, o.shape[0])
    norms = np.sqrt(np.einsum("kd,kd->k", codebook, codebook))
    cos = (codebook @ o) / (norms * np.sqrt(o @ o))
    return float(cos.max())


def exact_sq_dists(data: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = data.astype(np.float64) - np.asarray(q, dtype=np.float64)
    return np.einsum("nd,nd->n", diff, diff)


def brute_force_best_plan_error(variances, quota, bits_options) -> float:
    """Enumerate every segmentation x bit assignment (granularity 1).

    ``bits_options`` must be ascending with 0 first so the cost cut-off can
    stop the scan early. Error accumulates left to right, matching the
    plan-error convention.
    """
    import math

    variances = np.asarray(variances, dtype=np.float64)
    d = len(variances)
    prefix = np.concatenate([[0.0], np.cumsum(variances)])
    best = math.inf

    def recurse(pos, spent, acc):
        nonlocal best
        if pos == d:
            best = min(best, acc)
            return
        for j in range(pos + 1, d + 1):
            vsum = prefix[j] - prefix[pos]
            for b in bits_options:
                cost = spent + b * (j - pos)
                if cost > quota:
                    if b > 0:
                        break
                    continue
                recurse(j, cost, acc + math.ldexp(vsum, -b))

    recurse(0, 0, 0.0)
    return best
