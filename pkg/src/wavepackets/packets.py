"""Evaluation and sampling of individual wave packets.

For a block ``(j, m, l) != (0, 0, 0)`` with ``A = A_j``, ``R = R_jl``,
modulation ``c = R B_jm`` and time position ``tau = delta R A^{-1} k``::

    psi_i(t)     = |det A|^{1/2}  exp(2 pi i <c, t>)        psi(A R^{-1} (t - tau))
    psi_i^(xi)   = |det A|^{-1/2} exp(-2 pi i <tau, xi - c>) psi^(A^{-1} R^{-1} (xi - c))

with the Fourier transform ``f^(xi) = int f(t) exp(-2 pi i <t, xi>) dt``.  The
zero block is ``gamma(t - delta k)`` with transform ``exp(-2 pi i <delta k, xi>) gamma^(xi)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .index_space import (FrequencyIndex, SystemParams, modulation_vector, rotation_matrix,
                          scale_matrix, time_step_matrix)
from .prototypes import PrototypePair, get_prototypes

BOUNDARY_DECAY = 1e-10
_HEADER = struct.Struct("<IIdd")


class GridTooSmall(ValueError):
    """The sampled values do not decay to the required level at the grid boundary."""


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid ``origin + (n0 * step0, n1 * step1)``, axis 0 first."""

    origin: tuple[float, float]
    step: tuple[float, float]
    counts: tuple[int, int]

    def __post_init__(self):
        if min(self.counts) < 2:
            raise ValueError("a grid needs at least 2 points per axis")
        if min(self.step) <= 0:
            raise ValueError("grid steps must be positive")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.origin[0] + self.step[0] * np.arange(self.counts[0]),
                self.origin[1] + self.step[1] * np.arange(self.counts[1]))

    def points(self) -> np.ndarray:
        x, y = self.axes()
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    @property
    def cell_area(self) -> float:
        return self.step[0] * self.step[1]

    @classmethod
    def centered(cls, center, half_width, counts) -> "Grid":
        """Grid of ``counts`` points per axis whose nodes span ``center +- half_width``."""
        cx, cy = center
        hx, hy = (half_width, half_width) if np.isscalar(half_width) else half_width
        n0, n1 = (counts, counts) if np.isscalar(counts) else counts
        return cls((cx - hx, cy - hy), (2 * hx / (n0 - 1), 2 * hy / (n1 - 1)), (int(n0), int(n1)))

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "step": list(self.step), "counts": list(self.counts)}


@dataclass
class SampledField:
    grid: Grid
    values: np.ndarray
    domain: str = "time"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != tuple(self.grid.counts):
            raise ValueError(f"values of shape {self.values.shape} do not match grid {self.grid.counts}")

    def norm(self, p: float = 2.0) -> float:
        """Riemann-sum ``L^p`` norm (``p = inf`` gives the maximum modulus)."""
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max())
        return float((np.sum(a ** p) * self.grid.cell_area) ** (1.0 / p))

    def inner(self, other: "SampledField") -> complex:
        """``int conj(self) * other`` by the Riemann sum on the common grid."""
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        return complex(np.vdot(self.values, other.values) * self.grid.cell_area)

    def save(self, path) -> None:
        """Write the binary layout plus a ``.json`` sidecar with the grid metadata.

        Header: two little-endian uint32 counts and two float64 steps, then
        interleaved float64 real/imaginary parts in row-major order.
        """
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.grid.counts[0], self.grid.counts[1],
                                  self.grid.step[0], self.grid.step[1]))
            fh.write(np.ascontiguousarray(self.values, dtype="<c16").tobytes())
        meta = {"grid": self.grid.to_dict(), "domain": self.domain, "metadata": self.metadata}
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SampledField":
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        n0, n1, h0, h1 = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size:]
        if len(body) != 16 * n0 * n1:
            raise ValueError(f"{path}: expected {16 * n0 * n1} payload bytes, found {len(body)}")
        values = np.frombuffer(body, dtype="<c16").reshape(n0, n1).astype(complex)
        origin = (-(n0 - 1) * h0 / 2, -(n1 - 1) * h1 / 2)
        domain, metadata = "time", {}
        side = path.with_name(path.name + ".json")
        if side.exists():
            meta = json.loads(side.read_text())
            g = meta.get("grid", {})
            origin = tuple(g.get("origin", origin))
            if tuple(g.get("counts", (n0, n1))) != (n0, n1):
                raise ValueError(f"{side}: counts disagree with the binary header")
            domain = meta.get("domain", "time")
            metadata = meta.get("metadata", {})
        return cls(Grid(origin, (h0, h1), (n0, n1)), values, domain, metadata)


@dataclass(frozen=True)
class BlockGeometry:
    """Affine data shared by all packets of one frequency block."""

    block: FrequencyIndex
    amp: float                 # |det A|^{1/2}
    modulation: np.ndarray     # c = R B
    time_map: np.ndarray       # A R^{-1}
    freq_map: np.ndarray       # A^{-1} R^{-1}
    lattice: np.ndarray        # delta R A^{-1}
    spread: np.ndarray         # R A: frequency-side scaling of the prototype

    @property
    def is_zero(self) -> bool:
        return self.block.j == 0


@lru_cache(maxsize=4096)
def _block_geometry(block: FrequencyIndex, params: SystemParams) -> BlockGeometry:
    j, m, l = block
    if j == 0:
        eye = np.eye(2)
        return BlockGeometry(block, 1.0, np.zeros(2), eye, eye, params.delta * eye, eye)
    a = scale_matrix(j, params)
    rot = rotation_matrix(j, l, params)
    a_inv = np.diag(1.0 / np.diag(a))
    return BlockGeometry(
        block,
        amp=math.sqrt(a[0, 0] * a[1, 1]),
        modulation=rot @ modulation_vector(j, m, params),
        time_map=a @ rot.T,
        freq_map=a_inv @ rot.T,
        lattice=time_step_matrix(block, params),
        spread=rot @ a,
    )


def block_geometry(block, params: SystemParams) -> BlockGeometry:
    return _block_geometry(FrequencyIndex(int(block[0]), int(block[1]), int(block[2])), params)


def _apply(mat: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ mat.T


def _protos(protos):
    return get_prototypes() if protos is None else protos


def packet_time(i, t, params: SystemParams, protos: PrototypePair | None = None) -> np.ndarray:
    """Values ``psi_i(t)`` for points ``t`` of shape ``(..., 2)``."""
    protos = _protos(protos)
    g = block_geometry(i, params)
    t = np.asarray(t, dtype=float)
    tau = g.lattice @ np.array([i[3], i[4]], dtype=float)
    if g.is_zero:
        return protos.gamma.time_eval(t - tau)
    phase = np.exp(2j * math.pi * (t @ g.modulation))
    return g.amp * phase * protos.psi.time_eval(_apply(g.time_map, t - tau))


def packet_freq(i, xi, params: SystemParams, protos: PrototypePair | None = None) -> np.ndarray:
    """Values of the Fourier transform of ``psi_i`` at points ``xi`` of shape ``(..., 2)``."""
    protos = _protos(protos)
    g = block_geometry(i, params)
    xi = np.asarray(xi, dtype=float)
    tau = g.lattice @ np.array([i[3], i[4]], dtype=float)
    if g.is_zero:
        return np.exp(-2j * math.pi * (xi @ tau)) * protos.gamma.freq_eval(xi)
    d = xi - g.modulation
    return (np.exp(-2j * math.pi * (d @ tau)) / g.amp) * protos.psi.freq_eval(_apply(g.freq_map, d))


def freq_envelope(block, xi, params: SystemParams, protos: PrototypePair | None = None) -> np.ndarray:
    """Transform of the ``k = 0`` packet of ``block`` without its lattice phase."""
    protos = _protos(protos)
    g = block_geometry(block, params)
    xi = np.asarray(xi, dtype=float)
    if g.is_zero:
        return protos.gamma.freq_eval(xi)
    return protos.psi.freq_eval(_apply(g.freq_map, xi - g.modulation)) / g.amp


def _box_of_ellipse(center, lin, radius):
    # bounding box of {center + lin v : |v| <= radius}
    half = radius * np.hypot(lin[:, 0], lin[:, 1])
    return np.asarray(center) - half, np.asarray(center) + half


def freq_box(block, params: SystemParams, protos: PrototypePair | None = None,
             tail: float = 1e-18) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box outside which ``|psi_i^|`` is below ``tail`` times its peak."""
    protos = _protos(protos)
    g = block_geometry(block, params)
    proto = protos.gamma if g.is_zero else protos.psi
    center = g.modulation + g.spread @ np.asarray(proto.freq_center)
    return _box_of_ellipse(center, g.spread, proto.freq_radius(tail))


def time_box(i, params: SystemParams, protos: PrototypePair | None = None,
             tail: float = 1e-18) -> tuple[np.ndarray, np.ndarray]:
    protos = _protos(protos)
    g = block_geometry(i, params)
    proto = protos.gamma if g.is_zero else protos.psi
    tau = g.lattice @ np.array([i[3], i[4]], dtype=float)
    inv = np.linalg.inv(g.time_map)
    center = tau + inv @ np.asarray(proto.time_center)
    return _box_of_ellipse(center, inv, proto.time_radius(tail))


def freq_peak(block, params: SystemParams, protos: PrototypePair | None = None) -> np.ndarray:
    """Location of the modulus peak of the block's transform."""
    protos = _protos(protos)
    g = block_geometry(block, params)
    proto = protos.gamma if g.is_zero else protos.psi
    return g.modulation + g.spread @ np.asarray(proto.freq_center)


def _check_boundary(values: np.ndarray, what: str) -> float:
    a = np.abs(values)
    peak = a.max()
    edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
    ratio = float(edge / peak) if peak > 0 else 0.0
    if ratio >= BOUNDARY_DECAY:
        raise GridTooSmall(
            f"{what}: boundary modulus is {ratio:.3g} of the peak (needs < {BOUNDARY_DECAY:g}); "
            "enlarge the grid")
    return ratio


def sample_packet(i, domain: str, grid: Grid, params: SystemParams,
                  protos: PrototypePair | None = None, check: bool = True) -> SampledField:
    pts = grid.points()
    if domain == "time":
        vals = packet_time(i, pts, params, protos)
    elif domain == "freq":
        vals = packet_freq(i, pts, params, protos)
    else:
        raise ValueError(f"domain must be 'time' or 'freq', got {domain!r}")
    meta = {"index": list(map(int, i))}
    if check:
        meta["boundary_ratio"] = _check_boundary(vals, f"packet {tuple(i)}")
    return SampledField(grid, vals, domain, meta)


def packet_grids(i, params: SystemParams, protos: PrototypePair | None = None,
                 n: int = 256, tail: float = 1e-13) -> tuple[Grid, Grid]:
    """Matched time and frequency grids for FFT-based transforms of one packet.

    The time grid is centred on the packet's position and the frequency grid
    on its spectral peak; the step is the geometric balance between covering
    the time support and resolving the frequency support.
    """
    tb = time_box(i, params, protos, tail)
    fb = freq_box(i, params, protos, tail)
    t_half = (tb[1] - tb[0]) / 2
    f_half = (fb[1] - fb[0]) / 2
    h = np.sqrt(t_half / (n * f_half))
    if np.any(n * h < 2 * t_half) or np.any(1 / h < 2 * f_half):
        raise GridTooSmall(f"packet {tuple(i)}: {n} points per axis cannot hold its time-frequency support")
    tc = (tb[0] + tb[1]) / 2
    fc = (fb[0] + fb[1]) / 2
    time_grid = Grid(tuple(tc - h * (n // 2)), tuple(h), (n, n))
    freq_grid = Grid(tuple(fc - (n // 2) / (n * h)), tuple(1 / (n * h)), (n, n))
    return time_grid, freq_grid


def continuous_ft(f: SampledField, freq_origin=(0.0, 0.0)) -> SampledField:
    """Riemann-sum approximation of the continuous Fourier transform via the FFT.

    The output grid has the same counts, step ``1 / (n h)`` per axis and the
    given origin.
    """
    g = f.grid
    n = np.array(g.counts)
    h = np.array(g.step)
    t0 = np.array(g.origin)
    x0 = np.asarray(freq_origin, dtype=float)
    dxi = 1.0 / (n * h)
    pre = [np.exp(-2j * math.pi * np.arange(n[a]) * h[a] * x0[a]) for a in range(2)]
    post = [np.exp(-2j * math.pi * t0[a] * (x0[a] + np.arange(n[a]) * dxi[a])) for a in range(2)]
    v = f.values * pre[0][:, None] * pre[1][None, :]
    v = np.fft.fft2(v)
    v = v * post[0][:, None] * post[1][None, :] * (h[0] * h[1])
    return SampledField(Grid(tuple(x0), tuple(dxi), tuple(g.counts)), v, "freq")


def inverse_continuous_ft(F: SampledField, time_origin) -> SampledField:
    """Exact inverse of :func:`continuous_ft` for the matching time origin."""
    g = F.grid
    n = np.array(g.counts)
    dxi = np.array(g.step)
    x0 = np.array(g.origin)
    t0 = np.asarray(time_origin, dtype=float)
    h = 1.0 / (n * dxi)
    pre = [np.exp(-2j * math.pi * np.arange(n[a]) * h[a] * x0[a]) for a in range(2)]
    post = [np.exp(-2j * math.pi * t0[a] * (x0[a] + np.arange(n[a]) * dxi[a])) for a in range(2)]
    v = F.values / (post[0][:, None] * post[1][None, :] * (h[0] * h[1]))
    v = np.fft.ifft2(v)
    v = v / (pre[0][:, None] * pre[1][None, :])
    return SampledField(Grid(tuple(t0), tuple(h), tuple(g.counts)), v, "time")


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
