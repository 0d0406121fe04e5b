"""Frequency-plane tiles of the wave packet covering.

Tile ``(0, 0, 0)`` is the open disk of radius 4; every other tile is the
rotated, anisotropically scaled and shifted copy ``R (A Q + B)`` of the base
rectangle ``Q = (-eps, 1 + eps) x (-1 - eps, 1 + eps)``.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .index_space import (FrequencyIndex, SystemParams, enumerate_frequency_indices,
                          modulation_vector, rotation_matrix, scale_matrix)

DISK_RADIUS = 4.0
SAT_SLACK = 1e-12


@dataclass(frozen=True)
class Tile:
    index: FrequencyIndex
    kind: str                      # "disk" or "mapped_rectangle"
    linear: np.ndarray             # T_i = R A (identity for the disk)
    offset: np.ndarray             # b_i = R B (origin for the disk)
    epsilon: float
    radius: float = DISK_RADIUS    # only meaningful for the disk

    @property
    def is_disk(self) -> bool:
        return self.kind == "disk"

    def pull_back(self, points: np.ndarray) -> np.ndarray:
        """Base-rectangle coordinates ``T^{-1}(xi - b)`` of ``points``."""
        pts = np.asarray(points, dtype=float)
        return np.linalg.solve(self.linear, (pts - self.offset).reshape(-1, 2).T).T.reshape(pts.shape)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.is_disk:
            return np.einsum("...i,...i->...", pts, pts) < self.radius ** 2
        u = self.pull_back(pts)
        eps = self.epsilon
        return ((u[..., 0] > -eps) & (u[..., 0] < 1 + eps)
                & (u[..., 1] > -1 - eps) & (u[..., 1] < 1 + eps))

    def vertices(self) -> np.ndarray:
        eps = self.epsilon
        base = np.array([[-eps, -1 - eps], [1 + eps, -1 - eps],
                         [1 + eps, 1 + eps], [-eps, 1 + eps]])
        return base @ self.linear.T + self.offset

    def area(self) -> float:
        if self.is_disk:
            return math.pi * self.radius ** 2
        eps = self.epsilon
        return abs(np.linalg.det(self.linear)) * (1 + 2 * eps) * (2 + 2 * eps)

    def bounding_circle(self) -> tuple[np.ndarray, float]:
        if self.is_disk:
            return np.zeros(2), self.radius
        v = self.vertices()
        c = v.mean(axis=0)
        return c, float(np.max(np.hypot(*(v - c).T)))

    def radial_range(self) -> tuple[float, float]:
        """Smallest and largest distance of the (closed) tile from the origin."""
        if self.is_disk:
            return 0.0, self.radius
        v = self.vertices()
        return _point_rect_distance(np.zeros(2), self), float(np.max(np.hypot(*v.T)))


def tile(i, params: SystemParams) -> Tile:
    j, m, l = i[0], i[1], i[2]
    if j == 0:
        return Tile(FrequencyIndex(0, 0, 0), "disk", np.eye(2), np.zeros(2), params.epsilon)
    rot = rotation_matrix(j, l, params)
    lin = rot @ scale_matrix(j, params)
    off = rot @ modulation_vector(j, m, params)
    return Tile(FrequencyIndex(j, m, l), "mapped_rectangle", lin, off, params.epsilon)


def all_tiles(params: SystemParams) -> list[Tile]:
    return [tile(b, params) for b in enumerate_frequency_indices(params)]


def _rect_frame(t: Tile):
    # the linear part is rotation times positive diagonal: recover both
    sx = np.linalg.norm(t.linear[:, 0])
    sy = np.linalg.norm(t.linear[:, 1])
    axes = np.column_stack([t.linear[:, 0] / sx, t.linear[:, 1] / sy])
    eps = t.epsilon
    center = t.offset + t.linear @ np.array([0.5, 0.0])
    half = np.array([sx * (0.5 + eps), sy * (1 + eps)])
    return center, axes, half


def _point_rect_distance(p: np.ndarray, t: Tile) -> float:
    center, axes, half = _rect_frame(t)
    u = axes.T @ (p - center)
    d = np.maximum(np.abs(u) - half, 0.0)
    return float(np.hypot(d[0], d[1]))


def tiles_intersect(a: Tile, b: Tile) -> bool:
    """Whether two tiles overlap; touching boundaries count as overlapping."""
    if a.is_disk and b.is_disk:
        return float(np.linalg.norm(a.offset - b.offset)) <= a.radius + b.radius + SAT_SLACK
    if a.is_disk or b.is_disk:
        disk, rect = (a, b) if a.is_disk else (b, a)
        return _point_rect_distance(disk.offset, rect) <= disk.radius + SAT_SLACK
    va, vb = a.vertices(), b.vertices()
    for t in (a, b):
        for col in range(2):
            ax = t.linear[:, col]
            n = np.array([-ax[1], ax[0]]) / np.hypot(ax[0], ax[1])
            # rectangle edges are parallel to the columns; normals of one
            # edge family are parallel to the other column
            pa, pb = va @ n, vb @ n
            if pa.max() < pb.min() - SAT_SLACK or pb.max() < pa.min() - SAT_SLACK:
                return False
    return True


def neighbor_lists(tiles: Sequence[Tile], brute_force: bool = False) -> list[list[int]]:
    """For every tile the sorted positions of all tiles intersecting it (itself included)."""
    n = len(tiles)
    nbrs: list[list[int]] = [[] for _ in range(n)]
    if brute_force:
        for a in range(n):
            for b in range(a, n):
                if tiles_intersect(tiles[a], tiles[b]):
                    nbrs[a].append(b)
                    if b != a:
                        nbrs[b].append(a)
        return [sorted(x) for x in nbrs]

    # sweep over radial ranges, then reject by bounding circles
    ranges = np.array([t.radial_range() for t in tiles])
    circles = [t.bounding_circle() for t in tiles]
    order = np.argsort(ranges[:, 0], kind="stable")
    active: list[int] = []
    for a in order:
        lo = ranges[a, 0]
        active = [b for b in active if ranges[b, 1] >= lo - SAT_SLACK]
        ca, ra = circles[a]
        for b in active:
            cb, rb = circles[b]
            if np.hypot(*(ca - cb)) > ra + rb + SAT_SLACK:
                continue
            if tiles_intersect(tiles[a], tiles[b]):
                nbrs[a].append(b)
                nbrs[b].append(a)
        nbrs[a].append(a)
        active.append(a)
    return [sorted(x) for x in nbrs]


def neighbor_stats(params: SystemParams, brute_force: bool = False):
    """Maximum neighbour count over all tiles and the histogram of counts."""
    nbrs = neighbor_lists(all_tiles(params), brute_force=brute_force)
    counts = [len(x) for x in nbrs]
    return max(counts), dict(sorted(Counter(counts).items()))


def verify_covering(params: SystemParams, grid_resolution: int = 256, workers: int = 1) -> dict:
    """Check that every point of a uniform grid on ``B_{2^j_max}(0)`` lies in a tile.

    Returns a report with the uncovered points (expected empty) and the range
    of the cover multiplicity over the grid.
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    r1 = 2.0 ** params.j_max
    axis = np.linspace(-r1, r1, grid_resolution)
    tiles = all_tiles(params)

    def row_counts(row: int):
        pts = np.column_stack([axis, np.full_like(axis, axis[row])])
        inside = np.hypot(pts[:, 0], pts[:, 1]) <= r1
        pts = pts[inside]
        mult = np.zeros(len(pts), dtype=np.int64)
        for t in tiles:
            mult += t.contains(pts)
        return pts, mult

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(row_counts, range(grid_resolution)))
    else:
        rows = [row_counts(r) for r in range(grid_resolution)]
    pts = np.concatenate([p for p, _ in rows])
    mult = np.concatenate([m for _, m in rows])
    uncovered = pts[mult == 0]
    return {
        "params": params.to_dict(),
        "grid_resolution": grid_resolution,
        "points_checked": int(len(pts)),
        "uncovered": uncovered.tolist(),
        "min_multiplicity": int(mult.min()),
        "max_multiplicity": int(mult.max()),
    }


def weight(i, s: float) -> float:
    j = i[0]
    return 1.0 if j == 0 else 2.0 ** (j * s)


def verify_moderate(params: SystemParams, s: float | None = None) -> dict:
    """Moderateness constant of the wave packet weight on the covering.

    ``constant`` is the maximum of ``w_i / w_i'`` over intersecting tiles; the
    report also carries the largest scale gap between neighbours and the
    empirical maximum of ``||T_i^{-1} T_i'||``.
    """
    s = params.s if s is None else s
    tiles = all_tiles(params)
    nbrs = neighbor_lists(tiles)
    c = 1.0
    gap = 0
    tnorm = 0.0
    for a, lst in enumerate(nbrs):
        ta = tiles[a]
        ia = np.linalg.inv(ta.linear)
        for b in lst:
            tb = tiles[b]
            c = max(c, weight(ta.index, s) / weight(tb.index, s))
            gap = max(gap, abs(ta.index.j - tb.index.j))
            tnorm = max(tnorm, float(np.linalg.norm(ia @ tb.linear, 2)))
    return {"constant": c, "max_scale_gap": gap, "max_transition_norm": tnorm}
