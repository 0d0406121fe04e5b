"""Analysis, synthesis and norms of the wave packet system on sampled signals.

Signals live on a uniform time grid.  The packets of the system are sampled
on the same grid and stored as a sparse atom matrix ``Phi`` (one row per
packet), so that

* analysis is ``c = conj(Phi) f * cell_area`` (coefficients ``<psi_i | f>``),
* synthesis is ``Phi^T c``,
* the frame operator is ``S f = Phi^T conj(Phi) f * cell_area``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .index_space import (FrequencyIndex, PacketIndex, SystemParams, enumerate_frequency_indices,
                          enumerate_indices, parse_indices)
from .covering import DISK_RADIUS, Tile, all_tiles
from .packets import (BOUNDARY_DECAY, Grid, GridTooSmall, SampledField,
                      continuous_ft, inverse_continuous_ft, packet_time, time_box)
from .prototypes import PrototypePair, get_prototypes

log = logging.getLogger(__name__)

PARTITION_FLOOR = 1e-12
BAND_LIMIT_TAIL = 1e-10
STAGNATION_WINDOW = 50
ANALYSIS_TAIL = 1e-16     # relative level below which packet samples are dropped
STAGNATION_REDUCTION = 1e-3


class PartitionError(RuntimeError):
    """The bump functions do not cover a test point."""


class BandLimitError(ValueError):
    """A signal carries spectral mass outside the covered disk."""


class StagnationError(RuntimeError):
    """Conjugate gradients stopped making progress.

    ``result`` holds the :class:`Reconstruction` reached when the iteration stopped.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


# ----------------------------------------------------------------------------
# coefficients

@dataclass
class CoefficientSet:
    """Coefficients indexed by packet, stored as an index list plus a value array."""

    indices: list
    values: np.ndarray
    params: SystemParams

    def __post_init__(self):
        self.indices = [PacketIndex(*map(int, i)) for i in self.indices]
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.indices),):
            raise ValueError("one value per index is required")
        allowed = set(enumerate_indices(self.params))
        extra = [i for i in self.indices if i not in allowed]
        if extra:
            raise ValueError(f"index {tuple(extra[0])} is not in the enumerated index set")

    @classmethod
    def zeros(cls, params: SystemParams, indices: Sequence | None = None) -> "CoefficientSet":
        idx = enumerate_indices(params) if indices is None else list(indices)
        return cls(idx, np.zeros(len(idx), dtype=complex), params)

    @classmethod
    def unit(cls, i, params: SystemParams) -> "CoefficientSet":
        c = cls.zeros(params)
        c.values[c.position(i)] = 1.0
        return c

    def position(self, i) -> int:
        return self.indices.index(PacketIndex(*map(int, i)))

    def __getitem__(self, i) -> complex:
        return complex(self.values[self.position(i)])

    def __len__(self) -> int:
        return len(self.indices)

    def as_dict(self) -> dict:
        return dict(zip(self.indices, self.values.tolist()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "m", "l", "k1", "k2", "re", "im"])
            for i, v in zip(self.indices, self.values):
                w.writerow([*i, repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def read_csv(cls, path, params: SystemParams) -> "CoefficientSet":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        idx = parse_indices([[r["j"], r["m"], r["l"], r["k1"], r["k2"]] for r in rows])
        vals = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
        return cls(idx, vals, params)


def _lp(x: np.ndarray, p: float) -> float:
    x = np.abs(np.asarray(x))
    if x.size == 0:
        return 0.0
    if math.isinf(p):
        return float(x.max())
    return float(np.sum(x ** p) ** (1.0 / p))


def coefficient_norm(c: CoefficientSet, s: float, p: float, q: float,
                     params: SystemParams | None = None) -> float:
    """Weighted mixed quasi-norm: inner ``l^p`` over ``k``, outer ``l^q`` over blocks.

    Block ``(j, m, l)`` is weighted by ``2^{j (s + (alpha + beta)(1/2 - 1/p))}``;
    the low-pass block has weight 1.
    """
    params = c.params if params is None else params
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    exponent = s + (params.alpha + params.beta) * (0.5 - (0.0 if math.isinf(p) else 1.0 / p))
    groups: dict[FrequencyIndex, list[int]] = {}
    for pos, i in enumerate(c.indices):
        groups.setdefault(i.block, []).append(pos)
    outer = []
    for b in sorted(groups, key=lambda b: (b.j, b.l, b.m)):
        w = 1.0 if b.j == 0 else 2.0 ** (b.j * exponent)
        outer.append(w * _lp(c.values[groups[b]], p))
    return _lp(np.array(outer), q)


# ----------------------------------------------------------------------------
# atoms, analysis and synthesis

def grid_for(params: SystemParams, protos: PrototypePair | None = None, step: float = 1.0 / 16,
             tail: float = 1e-16, indices: Sequence | None = None) -> Grid:
    """Smallest symmetric grid of the given step holding every packet to ``tail``."""
    if indices is None:
        # the lattice corners are the extreme packets of every block
        kr = params.k_radius
        indices = [PacketIndex(*b, k1, k2) for b in enumerate_frequency_indices(params)
                   for k1 in (-kr, kr) for k2 in (-kr, kr)]
    half = 0.0
    for i in indices:
        lo, hi = time_box(i, params, protos, tail)
        half = max(half, float(np.max(np.abs(lo))), float(np.max(np.abs(hi))))
    n = 2 * int(math.ceil(half / step)) + 1
    return Grid.centered((0.0, 0.0), (n - 1) * step / 2, n)


def _grid_box(grid: Grid):
    x, y = grid.axes()
    return np.array([x[0], y[0]]), np.array([x[-1], y[-1]])


def _check_fits(i, grid: Grid, params, protos) -> None:
    lo, hi = time_box(i, params, protos, BOUNDARY_DECAY)
    glo, ghi = _grid_box(grid)
    if np.any(lo < glo) or np.any(hi > ghi):
        raise GridTooSmall(f"packet {tuple(i)} does not decay to {BOUNDARY_DECAY:g} inside the grid; enlarge it")


class AtomMatrix:
    """Sampled packets of an index list on one grid, as a CSR matrix.

    With ``tail > 0`` samples below ``tail`` times the packet's peak are
    dropped; ``tail = 0`` keeps every grid point, so rows are exact samples.
    """

    def __init__(self, indices: Sequence, grid: Grid, params: SystemParams,
                 protos: PrototypePair | None = None, tail: float = 0.0, workers: int = 1):
        self.indices = [PacketIndex(*map(int, i)) for i in indices]
        self.grid = grid
        self.params = params
        self.protos = get_prototypes() if protos is None else protos
        self.tail = tail
        for i in self.indices:
            _check_fits(i, grid, params, self.protos)
        n0, n1 = grid.counts
        rows = list(range(len(self.indices)))
        chunks = [rows[a:a + 64] for a in range(0, len(rows), 64)]

        def build(chunk):
            return [self._row(self.indices[r]) for r in chunk]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(build, chunks))
        else:
            parts = [build(ch) for ch in chunks]
        cols, vals, ptr = [], [], [0]
        for part in parts:
            for cc, vv in part:
                cols.append(cc)
                vals.append(vv)
                ptr.append(ptr[-1] + len(cc))
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(vals) if vals else np.zeros(0, dtype=complex)
        self.matrix = sparse.csr_matrix((vals, cols, np.asarray(ptr)), shape=(len(self.indices), n0 * n1))
        self._conj = self.matrix.conj().tocsr()

    def _row(self, i: PacketIndex):
        g = self.grid
        if self.tail <= 0:
            vals = packet_time(i, g.points(), self.params, self.protos).ravel()
            return np.arange(vals.size), vals
        lo, hi = time_box(i, self.params, self.protos, self.tail)
        origin = np.asarray(g.origin)
        step = np.asarray(g.step)
        a = np.maximum(np.floor((lo - origin) / step).astype(int), 0)
        b = np.minimum(np.ceil((hi - origin) / step).astype(int), np.asarray(g.counts) - 1)
        ix = np.arange(a[0], b[0] + 1)
        iy = np.arange(a[1], b[1] + 1)
        xx, yy = np.meshgrid(origin[0] + step[0] * ix, origin[1] + step[1] * iy, indexing="ij")
        vals = packet_time(i, np.stack([xx, yy], axis=-1), self.params, self.protos)
        flat = (ix[:, None] * g.counts[1] + iy[None, :]).ravel()
        vals = vals.ravel()
        keep = np.abs(vals) >= self.tail * np.abs(vals).max()
        return flat[keep], vals[keep]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        return (self._conj @ np.asarray(values, dtype=complex).ravel()) * self.grid.cell_area

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return (self.matrix.T @ np.asarray(coeffs, dtype=complex)).reshape(self.grid.counts)

    def frame_apply(self, values: np.ndarray) -> np.ndarray:
        return self.synthesize(self.analyze(values))


def analyze(f: SampledField, params: SystemParams, protos: PrototypePair | None = None,
            indices: Sequence | None = None, atoms: AtomMatrix | None = None) -> CoefficientSet:
    """Coefficients ``<psi_i | f>`` by Riemann sums on the signal's grid."""
    idx = enumerate_indices(params) if indices is None else list(indices)
    if atoms is None:
        atoms = AtomMatrix(idx, f.grid, params, protos, tail=ANALYSIS_TAIL)
    elif atoms.grid != f.grid:
        raise ValueError("atom matrix and signal use different grids")
    return CoefficientSet(atoms.indices, atoms.analyze(f.values), params)


def synthesize(c: CoefficientSet, grid: Grid, protos: PrototypePair | None = None,
               atoms: AtomMatrix | None = None) -> SampledField:
    """``sum_i c_i psi_i`` sampled on ``grid``.

    Without a prepared atom matrix only packets with non-zero coefficients are
    evaluated, each on the full grid.
    """
    if atoms is not None:
        if atoms.indices != c.indices:
            raise ValueError("atom matrix and coefficients use different index lists")
        return SampledField(grid, atoms.synthesize(c.values))
    out = np.zeros(grid.counts, dtype=complex)
    pts = grid.points()
    for i, v in zip(c.indices, c.values):
        if v != 0:
            out += v * packet_time(i, pts, c.params, protos)
    return SampledField(grid, out)


def frame_operator_apply(f: SampledField, params: SystemParams, protos: PrototypePair | None = None,
                         atoms: AtomMatrix | None = None) -> SampledField:
    """``S f = sum_i <psi_i | f> psi_i``."""
    if atoms is None:
        atoms = AtomMatrix(enumerate_indices(params), f.grid, params, protos, tail=ANALYSIS_TAIL)
    return SampledField(f.grid, atoms.frame_apply(f.values))


@dataclass
class Reconstruction:
    estimate: SampledField
    relative_error: float
    iterations: int
    residuals: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    coefficients: CoefficientSet | None = None

    def to_dict(self) -> dict:
        return {"relative_error": self.relative_error, "iterations": self.iterations,
                "final_residual": self.residuals[-1] if self.residuals else None}


def reconstruct(f: SampledField, params: SystemParams, protos: PrototypePair | None = None,
                max_iterations: int = 200, tol: float = 1e-8, atoms: AtomMatrix | None = None,
                band_check: bool = True) -> Reconstruction:
    """Recover ``f`` through the frame operator by conjugate gradients started at zero.

    The iteration is the least-squares form of CG: coefficients ``c_k`` solve
    ``G c = analyze(f)`` and ``f_k = synthesize(c_k)`` ranges over the Krylov
    space of ``S`` generated by ``S f``, which is where CG on ``S f~ = S f``
    searches too.  This form minimises ``||f_k - f||`` over that space, so the
    reported error decreases monotonically.  ``residuals`` tracks
    ``||analyze(f - f_k)|| / ||analyze(f)||``.

    Raises:
        StagnationError: the smallest residual so far shrank by less than 0.1% over
            50 iterations; the partial result is attached.
    """
    if band_check:
        check_band_limit(f, params)
    if atoms is None:
        atoms = AtomMatrix(enumerate_indices(params), f.grid, params, protos, tail=1e-14)
    area = f.grid.cell_area
    fv = f.values.ravel()
    f_norm = float(np.linalg.norm(fv))
    c = np.zeros(len(atoms.indices), dtype=complex)
    r = fv.copy()                      # f - f_k on the grid
    s = atoms.analyze(r)
    d = s.copy()
    gamma = float(np.vdot(s, s).real)
    s0 = math.sqrt(gamma)
    residuals = [1.0]
    errors = [1.0] if f_norm else [0.0]
    best = [1.0]
    stalled = False
    it = 0
    while s0 > 0 and it < max_iterations and residuals[-1] > tol:
        q = atoms.synthesize(d).ravel()
        qq = area * float(np.vdot(q, q).real)
        if qq <= 0:
            break
        a = gamma / qq
        c += a * d
        r -= a * q
        s = atoms.analyze(r)
        gamma_new = float(np.vdot(s, s).real)
        d = s + (gamma_new / gamma) * d
        gamma = gamma_new
        it += 1
        residuals.append(math.sqrt(gamma) / s0)
        errors.append(float(np.linalg.norm(r)) / f_norm)
        best.append(min(best[-1], residuals[-1]))
        if it > STAGNATION_WINDOW and residuals[-1] > tol:
            if best[-1] > best[-1 - STAGNATION_WINDOW] * (1.0 - STAGNATION_REDUCTION):
                stalled = True
                break
    est = atoms.synthesize(c)
    err = float(np.linalg.norm(est - f.values) / f_norm) if f_norm else 0.0
    rec = Reconstruction(SampledField(f.grid, est), err, it, residuals, errors,
                         CoefficientSet(atoms.indices, c, params))
    if stalled:
        raise StagnationError(
            f"conjugate gradients stagnated at relative residual {residuals[-1]:.3g} "
            f"(reconstruction error {err:.3g}) after {it} iterations; try a smaller delta", rec)
    return rec


# ----------------------------------------------------------------------------
# partition of unity

def _ramp(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        y = 1.0 - x
        b = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
    return a / (a + b)


def _plateau(u, lo, hi, width):
    """1 on ``[lo, hi]``, 0 outside ``(lo - width, hi + width)``, smooth between."""
    return _ramp((u - (lo - width)) / width) * _ramp(((hi + width) - u) / width)


@dataclass
class PartitionOfUnity:
    """Smooth functions ``phi_i = eta_i / sum eta`` with ``supp phi_i`` inside tile ``Q_i``.

    Each ``eta_i`` equals 1 on the tile shrunk to ``epsilon = 0`` (a disk of
    radius ``disk_core`` for the low-pass tile) and vanishes outside the tile
    shrunk by half its margin.
    """

    tiles: list
    params: SystemParams
    disk_core: float
    disk_outer: float

    @property
    def blocks(self) -> list:
        return [t.index for t in self.tiles]

    def bump(self, t: Tile, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if t.is_disk:
            r = np.hypot(xi[..., 0], xi[..., 1])
            return _ramp((self.disk_outer - r) / (self.disk_outer - self.disk_core))
        u = t.pull_back(xi)
        w = self.params.epsilon / 2
        return _plateau(u[..., 0], 0.0, 1.0, w) * _plateau(u[..., 1], -1.0, 1.0, w)

    def bumps(self, xi: np.ndarray) -> np.ndarray:
        return np.stack([self.bump(t, xi) for t in self.tiles])

    def evaluate(self, xi: np.ndarray, check: bool = True) -> np.ndarray:
        """All ``phi_i`` at ``xi``; leading axis runs over the tiles."""
        eta = self.bumps(xi)
        den = eta.sum(axis=0)
        if check:
            inside = np.hypot(np.asarray(xi)[..., 0], np.asarray(xi)[..., 1]) <= 2.0 ** self.params.j_max
            if np.any(den[inside] < PARTITION_FLOOR):
                raise PartitionError(f"bump sum {den[inside].min():.3g} below {PARTITION_FLOOR:g}; the covering is violated")
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, eta / np.where(den > 0, den, 1.0), 0.0)

    def phi(self, position: int, xi: np.ndarray) -> np.ndarray:
        return self.evaluate(xi)[position]

    def denominator_floor(self, points: np.ndarray) -> float:
        return float(self.bumps(points).sum(axis=0).min())


def build_partition(params: SystemParams, disk_core: float = DISK_RADIUS - 0.5,
                    test_points: int = 20000, seed: int = 0) -> PartitionOfUnity:
    """Partition of unity subordinate to the covering, checked on random points of ``B_{2^j_max}``."""
    if not 0 < disk_core < DISK_RADIUS:
        raise ValueError("disk_core must lie in (0, 4)")
    pou = PartitionOfUnity(all_tiles(params), params, disk_core,
                           DISK_RADIUS - params.epsilon / 2)
    rng = np.random.default_rng(seed)
    pts = random_disk_points(test_points, 2.0 ** params.j_max, rng)
    floor = pou.denominator_floor(pts)
    if floor < PARTITION_FLOOR:
        raise PartitionError(f"bump sum {floor:.3g} below {PARTITION_FLOOR:g}; the covering is violated")
    return pou


def random_disk_points(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    a = 2 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


# ----------------------------------------------------------------------------
# decomposition norm

def check_band_limit(f: SampledField, params: SystemParams, tail: float = BAND_LIMIT_TAIL) -> SampledField:
    """Spectrum of ``f`` on the FFT grid; raises unless it lives in ``B_{2^j_max}``."""
    F = continuous_ft(f, _freq_origin(f.grid))
    pts = F.grid.points()
    radius = np.hypot(pts[..., 0], pts[..., 1])
    mod = np.abs(F.values)
    peak = mod.max()
    if peak == 0:
        return F
    r1 = 2.0 ** params.j_max
    outside = mod[radius > r1]
    ratio = float(outside.max() / peak) if outside.size else 0.0
    if ratio > tail:
        raise BandLimitError(f"spectral mass outside |xi| <= {r1:g} reaches {ratio:.3g} of the peak (limit {tail:g})")
    return F


def _freq_origin(grid: Grid):
    n = np.asarray(grid.counts)
    dxi = 1.0 / (n * np.asarray(grid.step))
    return tuple(-(n // 2) * dxi)


def decomposition_norm(f: SampledField, pou: PartitionOfUnity, s: float, p: float, q: float,
                       params: SystemParams | None = None) -> float:
    """``|| (w_i ||F^{-1}(phi_i f^)||_{L^p})_i ||_{l^q}`` with ``w_i = 2^{j s}``."""
    params = pou.params if params is None else params
    F = check_band_limit(f, params)
    if not np.any(F.values):
        return 0.0
    phis = pou.evaluate(F.grid.points(), check=False)
    terms = []
    for t, phi in zip(pou.tiles, phis):
        if not np.any(phi):
            terms.append(0.0)
            continue
        piece = inverse_continuous_ft(SampledField(F.grid, phi * F.values, "freq"), f.grid.origin)
        w = 1.0 if t.index.j == 0 else 2.0 ** (t.index.j * s)
        terms.append(w * piece.norm(p))
    return _lp(np.array(terms), q)


# ----------------------------------------------------------------------------
# test signals and reports

def gaussian_signal(grid: Grid, sigma: float = 0.8, center=(0.0, 0.0)) -> SampledField:
    """``exp(-pi |t - center|^2 / sigma^2)``; its transform is ``sigma^2 exp(-pi sigma^2 |xi|^2)`` up to phase."""
    pts = grid.points() - np.asarray(center)
    vals = np.exp(-math.pi * np.einsum("...i,...i->...", pts, pts) / sigma ** 2)
    return SampledField(grid, vals.astype(complex), "time", {"signal": "gaussian", "sigma": sigma})


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
