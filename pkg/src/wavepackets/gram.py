"""Gram matrix of the wave packet system and its decay diagnostics.

Inner products ``<psi_i | psi_i'> = int conj(psi_i) psi_i'`` are evaluated on
the frequency side, where every packet is a single smooth lobe.  All packets
of one block share the envelope and differ only by a plane-wave phase, so the
entries of a block pair are one matrix product
``(phase_i * envelope_product) @ conj(phase_i')^T``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .index_space import FrequencyIndex, PacketIndex, SystemParams, index_geometry
from .metric import DistanceBreakdown, rho_components
from .packets import (block_geometry, freq_box, freq_envelope, packet_time, time_box)
from .prototypes import PrototypePair, get_prototypes

FREQ_TAIL = 1e-18        # envelope level at the edge of a frequency box
ALIAS_TAIL = 1e-12       # time-side level used to space the quadrature nodes
EDGE_CHECK = 1e-14       # admissible integrand level on the box boundary
DEFAULT_THRESHOLD = 1e-14


class QuadratureError(RuntimeError):
    """The quadrature box does not contain the integrand to the required tail."""


@dataclass(frozen=True)
class GramRecord:
    i: PacketIndex
    ip: PacketIndex
    rho: DistanceBreakdown
    value: complex
    pruned: bool = False

    @property
    def inner_product_modulus(self) -> float:
        return abs(self.value)


def _sort_key(i) -> tuple:
    # enumeration order (j, l, m, k1, k2)
    return (i[0], i[2], i[1], i[3], i[4])


def _lattice_positions(block, ks: np.ndarray, params: SystemParams) -> np.ndarray:
    return ks @ block_geometry(block, params).lattice.T


class _PairQuadrature:
    """Frequency-side quadrature nodes shared by all packets of two blocks."""

    def __init__(self, b: FrequencyIndex, bp: FrequencyIndex, max_shift: np.ndarray,
                 params: SystemParams, protos: PrototypePair):
        lo_a, hi_a = freq_box(b, params, protos, FREQ_TAIL)
        lo_b, hi_b = freq_box(bp, params, protos, FREQ_TAIL)
        lo = np.maximum(lo_a, lo_b)
        hi = np.minimum(hi_a, hi_b)
        self.empty = bool(np.any(lo >= hi))
        if self.empty:
            return
        ta = time_box(PacketIndex(*b, 0, 0), params, protos, ALIAS_TAIL)
        tb = time_box(PacketIndex(*bp, 0, 0), params, protos, ALIAS_TAIL)
        width = (ta[1] - ta[0]) / 2 + (tb[1] - tb[0]) / 2 + np.abs((ta[1] + ta[0]) / 2 - (tb[1] + tb[0]) / 2)
        # the Riemann sum is exact up to aliases of the time-side correlation
        # displaced by multiples of 1/h; keep them outside its support
        inv_h = width + max_shift + 1.0
        counts = np.ceil((hi - lo) * inv_h).astype(int) + 1
        self.h = (hi - lo) / (counts - 1)
        ax0 = lo[0] + self.h[0] * np.arange(counts[0])
        ax1 = lo[1] + self.h[1] * np.arange(counts[1])
        xx, yy = np.meshgrid(ax0, ax1, indexing="ij")
        self.points = np.column_stack([xx.ravel(), yy.ravel()])
        ea = freq_envelope(b, self.points, params, protos)
        eb = freq_envelope(bp, self.points, params, protos)
        env = np.conj(ea) * eb
        scale = np.max(np.abs(ea), initial=0.0) * np.max(np.abs(eb), initial=0.0)
        edge = np.abs(env.reshape(counts[0], counts[1]))
        edge_max = max(edge[0].max(), edge[-1].max(), edge[:, 0].max(), edge[:, -1].max())
        peak_bound = _peak_product_bound(b, bp, params, protos)
        if edge_max > EDGE_CHECK * max(peak_bound, scale):
            raise QuadratureError(
                f"blocks {tuple(b)}, {tuple(bp)}: integrand at the box edge is {edge_max:.3g}")
        self.weights = env * (self.h[0] * self.h[1])
        self.c = block_geometry(b, params).modulation
        self.cp = block_geometry(bp, params).modulation

    def evaluate(self, tau: np.ndarray, tau_p: np.ndarray) -> np.ndarray:
        """Matrix of inner products for packets at time positions ``tau`` x ``tau_p``."""
        if self.empty:
            return np.zeros((len(tau), len(tau_p)), dtype=complex)
        pa = np.exp(2j * math.pi * ((self.points - self.c) @ tau.T)).T
        pb = np.exp(2j * math.pi * ((self.points - self.cp) @ tau_p.T)).T
        return (pa * self.weights) @ np.conj(pb).T


def _peak_product_bound(b, bp, params, protos) -> float:
    ga = block_geometry(b, params)
    gb = block_geometry(bp, params)
    pa = protos.gamma if ga.is_zero else protos.psi
    pb = protos.gamma if gb.is_zero else protos.psi
    fa = abs(pa.freq_eval(np.asarray(pa.freq_center, dtype=float))) / ga.amp
    fb = abs(pb.freq_eval(np.asarray(pb.freq_center, dtype=float))) / gb.amp
    return float(fa * fb)


def _ordered(i, ip):
    return _sort_key(i) <= _sort_key(ip)


def inner_product(i, ip, params: SystemParams, protos: PrototypePair | None = None) -> complex:
    """``<psi_i | psi_i'>`` by frequency-side quadrature.

    The pair is always evaluated in enumeration order and conjugated when
    swapped, so ``inner_product(a, b) == conj(inner_product(b, a))`` exactly.
    """
    protos = get_prototypes() if protos is None else protos
    if not _ordered(i, ip):
        return complex(np.conj(inner_product(ip, i, params, protos)))
    b = FrequencyIndex(i[0], i[1], i[2])
    bp = FrequencyIndex(ip[0], ip[1], ip[2])
    tau = _lattice_positions(b, np.array([[i[3], i[4]]], dtype=float), params)
    tau_p = _lattice_positions(bp, np.array([[ip[3], ip[4]]], dtype=float), params)
    quad = _PairQuadrature(b, bp, np.abs(tau[0] - tau_p[0]), params, protos)
    return complex(quad.evaluate(tau, tau_p)[0, 0])


def inner_product_time(i, ip, params: SystemParams, protos: PrototypePair | None = None,
                       tail: float = 1e-18) -> complex:
    """Time-side quadrature of ``<psi_i | psi_i'>``, used as an independent cross-check."""
    protos = get_prototypes() if protos is None else protos
    lo_a, hi_a = time_box(i, params, protos, tail)
    lo_b, hi_b = time_box(ip, params, protos, tail)
    lo = np.maximum(lo_a, lo_b)
    hi = np.minimum(hi_a, hi_b)
    if np.any(lo >= hi):
        return 0j
    fa = freq_box(i, params, protos, 1e-12)
    fb = freq_box(ip, params, protos, 1e-12)
    # spectrum of conj(psi_i) psi_i' lives in box_b - box_a
    band = np.maximum(np.abs(fb[1] - fa[0]), np.abs(fb[0] - fa[1]))
    inv_h = band + 1.0
    counts = np.ceil((hi - lo) * inv_h).astype(int) + 1
    h = (hi - lo) / (counts - 1)
    ax0 = lo[0] + h[0] * np.arange(counts[0])
    ax1 = lo[1] + h[1] * np.arange(counts[1])
    xx, yy = np.meshgrid(ax0, ax1, indexing="ij")
    pts = np.stack([xx, yy], axis=-1)
    va = packet_time(i, pts, params, protos)
    vb = packet_time(ip, pts, params, protos)
    return complex(np.sum(np.conj(va) * vb) * h[0] * h[1])


@dataclass
class GramTable:
    """All pairs ``i <= i'`` of an index list, in enumeration order."""

    indices: list
    first: np.ndarray          # positions into `indices`
    second: np.ndarray
    values: np.ndarray         # complex, zero where pruned
    pruned: np.ndarray         # bool
    r: np.ndarray
    theta: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    threshold: float

    def __len__(self) -> int:
        return len(self.first)

    @property
    def rho(self) -> np.ndarray:
        return ((self.r + self.theta) + self.t1) + self.t2

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def __iter__(self) -> Iterator[GramRecord]:
        for n in range(len(self)):
            yield self.record(n)

    def record(self, n: int) -> GramRecord:
        return GramRecord(
            self.indices[self.first[n]], self.indices[self.second[n]],
            DistanceBreakdown(float(self.r[n]), float(self.theta[n]), float(self.t1[n]), float(self.t2[n])),
            complex(self.values[n]), bool(self.pruned[n]))

    def write_csv(self, path) -> None:
        cols = "j,m,l,k1,k2,j',m',l',k1',k2',r,theta,t1,t2,rho,re,im,abs"
        idx = np.array([tuple(map(int, i)) for i in self.indices], dtype=np.int64)
        rho = self.rho
        with open(path, "w", newline="\n") as fh:
            fh.write(cols + "\n")
            for n in range(len(self)):
                a, b = idx[self.first[n]], idx[self.second[n]]
                v = self.values[n]
                fields = [*map(str, a), *map(str, b),
                          *(repr(float(x)) for x in (self.r[n], self.theta[n], self.t1[n], self.t2[n], rho[n],
                                                      v.real, v.imag, abs(v)))]
                fh.write(",".join(fields) + "\n")


def read_gram_csv(path, threshold: float = DEFAULT_THRESHOLD) -> GramTable:
    """Load a table written by :meth:`GramTable.write_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 18:
        raise ValueError(f"{path}: expected 18 columns, found {data.shape[1]}")
    keys = data[:, :10].astype(np.int64)
    lookup: dict[PacketIndex, int] = {}
    for row in keys:
        for i in (PacketIndex(*map(int, row[:5])), PacketIndex(*map(int, row[5:]))):
            lookup.setdefault(i, 0)
    indices = sorted(lookup, key=_sort_key)
    pos = {i: n for n, i in enumerate(indices)}
    first = np.array([pos[PacketIndex(*map(int, r[:5]))] for r in keys], dtype=np.int64)
    second = np.array([pos[PacketIndex(*map(int, r[5:]))] for r in keys], dtype=np.int64)
    values = data[:, 15] + 1j * data[:, 16]
    return GramTable(indices, first, second, values, np.abs(values) == 0,
                     data[:, 10], data[:, 11], data[:, 12], data[:, 13], threshold)


def _block_groups(indices: Sequence):
    groups: dict[FrequencyIndex, list[int]] = {}
    for pos, i in enumerate(indices):
        groups.setdefault(FrequencyIndex(i[0], i[1], i[2]), []).append(pos)
    return groups


def gram_matrix(indices: Sequence, params: SystemParams, protos: PrototypePair | None = None,
                threshold: float = DEFAULT_THRESHOLD, workers: int = 1) -> GramTable:
    """Every entry ``<psi_i | psi_i'>`` with ``i <= i'`` in enumeration order.

    Block pairs are independent jobs; results are merged in a fixed order, so
    the output does not depend on ``workers``.
    """
    protos = get_prototypes() if protos is None else protos
    indices = sorted(indices, key=_sort_key)
    n = len(indices)
    groups = _block_groups(indices)
    blocks = list(groups)
    ks = {b: np.array([[indices[p][3], indices[p][4]] for p in groups[b]], dtype=float) for b in blocks}
    taus = {b: _lattice_positions(b, ks[b], params) for b in blocks}

    jobs = [(x, y) for x in range(len(blocks)) for y in range(x, len(blocks))]

    def run(job):
        x, y = job
        b, bp = blocks[x], blocks[y]
        ta, tb = taus[b], taus[bp]
        shift = np.max(np.abs(ta), axis=0) + np.max(np.abs(tb), axis=0)
        return _PairQuadrature(b, bp, shift, params, protos).evaluate(ta, tb)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks_out = list(ex.map(run, jobs))
    else:
        blocks_out = [run(job) for job in jobs]

    full = np.zeros((n, n), dtype=complex) if n <= 4096 else None
    first_parts, second_parts, value_parts = [], [], []
    for (x, y), mat in zip(jobs, blocks_out):
        pa = np.asarray(groups[blocks[x]])
        pb = np.asarray(groups[blocks[y]])
        if full is not None:
            full[np.ix_(pa, pb)] = mat
        else:
            aa, bb = np.meshgrid(pa, pb, indexing="ij")
            keep = aa <= bb
            first_parts.append(aa[keep])
            second_parts.append(bb[keep])
            value_parts.append(mat[keep])
    if full is not None:
        first, second = np.triu_indices(n)
        values = full[first, second]
    else:
        first = np.concatenate(first_parts)
        second = np.concatenate(second_parts)
        values = np.concatenate(value_parts)
        order = np.lexsort((second, first))
        first, second, values = first[order], second[order], values[order]

    pruned = np.abs(values) < threshold
    values = np.where(pruned, 0j, values)
    geo = index_geometry(indices, params)
    r, th, t1, t2 = rho_components(geo, first, second)
    return GramTable(list(indices), first, second, values, pruned, r, th, t1, t2, threshold)


def decay_report(table: GramTable, n: float = 6.0, rho_sweep: Sequence[float] | None = None,
                 floor: float = 1e-14) -> dict:
    """Polynomial envelope statistics of the Gram entries.

    ``c_emp`` is ``max |G| (1 + rho)^n``; ``envelope`` lists the same maximum
    restricted to ``rho >= rho0``; ``slope`` is the least-squares slope of
    ``log|G|`` against ``log(1 + rho)`` over entries above ``floor``.
    """
    if len(table) == 0:
        raise ValueError("decay_report needs at least one record")
    mod = table.modulus
    rho = table.rho
    scaled = mod * (1.0 + rho) ** n
    k = int(np.argmax(scaled))
    c_emp = float(scaled[k])
    if rho_sweep is None:
        top = float(rho.max())
        rho_sweep = [float(x) for x in np.linspace(0.0, top, 41)]
    order = np.argsort(rho, kind="stable")
    rho_sorted = rho[order]
    # suffix maxima give max over rho >= rho0 for all thresholds at once
    suffix = np.maximum.accumulate(scaled[order][::-1])[::-1]
    envelope = []
    for r0 in rho_sweep:
        pos = int(np.searchsorted(rho_sorted, r0, side="left"))
        envelope.append([float(r0), float(suffix[pos]) if pos < len(suffix) else 0.0])
    monotone = all(envelope[q + 1][1] <= envelope[q][1] + 1e-12 for q in range(len(envelope) - 1))
    sel = mod > floor
    x = np.log1p(rho[sel])
    y = np.log(mod[sel])
    if sel.sum() >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
    else:
        slope, intercept = float("nan"), float("nan")
    return {
        "exponent": n,
        "records": int(len(table)),
        "records_above_floor": int(sel.sum()),
        "floor": floor,
        "c_emp": c_emp,
        "c_emp_rho": float(rho[k]),
        "c_emp_pair": [list(map(int, table.indices[table.first[k]])),
                       list(map(int, table.indices[table.second[k]]))],
        "envelope": envelope,
        "envelope_non_increasing": bool(monotone),
        "slope": float(slope),
        "intercept": float(intercept),
        "slope_ok": bool(slope <= -n),
        "max_modulus": float(mod.max()),
    }


def intrinsic_localization_check(table: GramTable, n: float = 6.0, constant: float | None = None,
                                 dimension: int = 5) -> dict:
    """Whether ``|G| <= C (1 + rho)^{-n}`` holds for every stored pair.

    ``constant`` defaults to the empirical ``c_emp`` of :func:`decay_report`
    for the same exponent.  The witness is the pair with the largest ratio
    ``|G| (1 + rho)^n / C``.
    """
    if n <= dimension:
        raise ValueError(f"the exponent must exceed the index dimension {dimension}")
    mod = table.modulus
    scaled = mod * (1.0 + table.rho) ** n
    if constant is None:
        constant = float(scaled.max())
    k = int(np.argmax(scaled))
    holds = bool(np.all(scaled <= constant))
    witness = {
        "pair": [list(map(int, table.indices[table.first[k]])),
                 list(map(int, table.indices[table.second[k]]))],
        "modulus": float(mod[k]),
        "rho": float(table.rho[k]),
        "ratio": float(scaled[k] / constant) if constant > 0 else math.inf,
    }
    return {"holds": holds, "constant": float(constant), "exponent": n, "witness": witness}


def time_envelope(table: GramTable, kappa0: float = 24.0) -> dict:
    """Maximum of ``|G| (1 + t1 + t2)^{kappa0 / 2}`` over pairs in the same block."""
    same = (table.r == 0) & (table.theta == 0)
    if not np.any(same):
        return {"pairs": 0, "max": 0.0, "at_t": 0.0}
    t = table.t1[same] + table.t2[same]
    vals = table.modulus[same] * (1.0 + t) ** (kappa0 / 2)
    k = int(np.argmax(vals))
    return {"pairs": int(same.sum()), "max": float(vals[k]), "at_t": float(t[k]),
            "finite": bool(np.isfinite(vals).all())}
