"""Phase-space distance between packet indices and its numerical checks.

``rho(i, i') = |r_i - r_i'| + theta(i, i') + |(t_i - t_i')_1| + |(t_i - t_i')_2|``
where ``theta`` is the angular difference wrapped into ``[0, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .index_space import IndexGeometry, SystemParams, index_geometry

AXIOM_TOL = 1e-12
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DistanceBreakdown:
    r_component: float
    theta_component: float
    t1_component: float
    t2_component: float

    @property
    def total(self) -> float:
        return self.r_component + self.theta_component + self.t1_component + self.t2_component


def wrapped_angle(d):
    d = np.abs(d)
    return np.minimum(d, TWO_PI - d)


def rho_components(geo: IndexGeometry, a, b):
    """Distance components for index positions ``a`` and ``b`` (broadcastable arrays).

    Returns ``(r, theta, t1, t2)``; their sum is the distance.
    """
    r = np.abs(geo.r[a] - geo.r[b])
    th = wrapped_angle(geo.theta[a] - geo.theta[b])
    t1 = np.abs(geo.t[a, 0] - geo.t[b, 0])
    t2 = np.abs(geo.t[a, 1] - geo.t[b, 1])
    return r, th, t1, t2


def rho_total(geo: IndexGeometry, a, b):
    r, th, t1, t2 = rho_components(geo, a, b)
    # fixed summation order keeps the total bitwise symmetric
    return ((r + th) + t1) + t2


def rho(i, ip, params: SystemParams) -> DistanceBreakdown:
    geo = index_geometry([i, ip], params)
    r, th, t1, t2 = rho_components(geo, 0, 1)
    return DistanceBreakdown(float(r), float(th), float(t1), float(t2))


def _row_chunks(n: int, chunk: int):
    for start in range(0, n, chunk):
        yield start, min(n, start + chunk)


def check_metric_axioms(indices: Sequence, params: SystemParams, trials: int = 100_000,
                        seed: int = 0, tol: float = AXIOM_TOL, chunk: int = 256) -> dict:
    """Count violations of the metric axioms over ``indices``.

    Non-negativity, symmetry and the identity of indiscernibles are checked on
    every ordered pair; the triangle inequality on ``trials`` random triples.
    """
    geo = index_geometry(indices, params)
    n = len(geo)
    keys = np.array([tuple(i) for i in indices], dtype=np.int64).reshape(n, -1)
    negative = asymmetric = zero_distinct = nonzero_self = 0
    for lo, hi in _row_chunks(n, chunk):
        a = np.arange(lo, hi)[:, None]
        b = np.arange(n)[None, :]
        d = rho_total(geo, a, b)
        dt = rho_total(geo, b, a)
        negative += int(np.count_nonzero(d < -tol))
        asymmetric += int(np.count_nonzero(d != dt))
        same = np.all(keys[lo:hi, None, :] == keys[None, :, :], axis=-1)
        zero_distinct += int(np.count_nonzero((d <= tol) & ~same))
        nonzero_self += int(np.count_nonzero((d != 0) & same))
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, n, size=(trials, 3))
    lhs = rho_total(geo, tri[:, 0], tri[:, 2])
    rhs = rho_total(geo, tri[:, 0], tri[:, 1]) + rho_total(geo, tri[:, 1], tri[:, 2])
    triangle = int(np.count_nonzero(lhs > rhs + tol))
    counts = {
        "non_negativity": negative,
        "symmetry": asymmetric,
        "indiscernibility": zero_distinct + nonzero_self,
        "triangle": triangle,
    }
    return {
        "pairs_checked": n * n,
        "triangle_trials": trials,
        "violations": counts,
        "total_violations": sum(counts.values()),
        "passed": sum(counts.values()) == 0,
    }


def lattice_bound(params: SystemParams) -> float:
    """Lower bound ``delta 2^{-(alpha j_max + 1)}`` for pairs sharing a block."""
    return params.delta * 2.0 ** (-(params.alpha * params.j_max + 1.0))


def separation(indices: Sequence, params: SystemParams, chunk: int = 256) -> dict:
    """Minimum distance over distinct pairs, split by whether the blocks agree.

    ``infimum`` is the overall minimum with its attaining pair; ``c1`` is the
    minimum of ``r + theta`` over pairs in different blocks and
    ``same_block_min`` the minimum of ``rho`` over distinct pairs inside one block.
    """
    if len(indices) == 0:
        raise ValueError("separation of an empty index set is undefined")
    geo = index_geometry(indices, params)
    n = len(geo)
    best = (math.inf, None)
    c1 = math.inf
    same_min = math.inf
    for lo, hi in _row_chunks(n, chunk):
        a = np.arange(lo, hi)[:, None]
        b = np.arange(n)[None, :]
        r, th, t1, t2 = rho_components(geo, a, b)
        d = ((r + th) + t1) + t2
        distinct = a != b
        d_masked = np.where(distinct, d, np.inf)
        k = np.unravel_index(np.argmin(d_masked), d_masked.shape)
        if d_masked[k] < best[0]:
            best = (float(d_masked[k]), (lo + int(k[0]), int(k[1])))
        same = geo.block_id[a] == geo.block_id[b]
        diff_block = ~same
        if np.any(diff_block):
            c1 = min(c1, float(np.min(np.where(diff_block, r + th, np.inf))))
        sb = same & distinct
        if np.any(sb):
            same_min = min(same_min, float(np.min(np.where(sb, d, np.inf))))
    pair = None
    if best[1] is not None:
        pair = [list(map(int, indices[best[1][0]])), list(map(int, indices[best[1][1]]))]
    bound = lattice_bound(params)
    return {
        "infimum": best[0],
        "pair": pair,
        "c1": c1,
        "same_block_min": same_min,
        "lattice_bound": bound,
        "guaranteed_bound": min(c1, bound),
        "passed": bool(best[0] > 0 and best[0] >= min(c1, bound)
                       and (math.isinf(same_min) or same_min >= bound)),
    }


def summability(indices: Sequence, params: SystemParams, n: float = 6.0,
                chunk: int = 128, workers: int = 1) -> float:
    """``max_i sum_i' (1 + rho(i, i'))^{-n}`` over the given (truncated) index set."""
    if n <= 5:
        raise ValueError("summability is only guaranteed for exponents n > 5")
    geo = index_geometry(indices, params)
    size = len(geo)

    def rows(bounds):
        lo, hi = bounds
        a = np.arange(lo, hi)[:, None]
        b = np.arange(size)[None, :]
        d = rho_total(geo, a, b)
        return float(np.max(np.sum((1.0 + d) ** (-n), axis=1)))

    bounds = list(_row_chunks(size, chunk))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            sums = list(ex.map(rows, bounds))
    else:
        sums = [rows(bd) for bd in bounds]
    return max(sums)
