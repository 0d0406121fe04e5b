"""Index set of a wave packet system and the per-index geometry.

Every wave packet is labelled by ``(j, m, l, k1, k2)``: ``j`` is the dyadic
scale, ``m`` the radial slot inside the scale ring, ``l`` the angular slot
and ``k`` a point of the (truncated) time lattice.  ``(0, 0, 0)`` is the
low-pass block generated from the isotropic prototype.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# tolerance of the integrality test deciding whether an angle survives to the
# next scale
ANGLE_TOL = 1e-9


class ParamError(ValueError):
    """Raised for inadmissible parameters or out-of-range indices."""


@dataclass(frozen=True)
class SystemParams:
    alpha: float = 0.5
    beta: float = 0.5
    s: float = 0.0
    p: float = 2.0
    q: float = 2.0
    epsilon: float = 0.01
    n_sectors: int = 10
    j_max: int = 2
    delta: float = 0.25
    k_radius: int = 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0.0 <= self.beta <= self.alpha < 1.0):
            raise ParamError(
                f"need 0 <= beta <= alpha < 1, got alpha={self.alpha}, beta={self.beta}")
        if not (0.0 < self.epsilon < 1.0 / 32.0):
            raise ParamError(f"epsilon must lie in (0, 1/32), got {self.epsilon}")
        if self.n_sectors != 10:
            raise ParamError(f"n_sectors is fixed to 10, got {self.n_sectors}")
        if not (isinstance(self.j_max, (int, np.integer)) and self.j_max >= 1):
            raise ParamError(f"j_max must be a positive integer, got {self.j_max!r}")
        if not (isinstance(self.k_radius, (int, np.integer)) and self.k_radius >= 0):
            raise ParamError(f"k_radius must be a non-negative integer, got {self.k_radius!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ParamError(f"delta must be positive, got {self.delta}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not v > 0:
                raise ParamError(f"{name} must lie in (0, inf], got {v}")
        if not math.isfinite(self.s):
            raise ParamError(f"s must be finite, got {self.s}")

    def replace(self, **changes) -> "SystemParams":
        d = asdict(self)
        d.update(changes)
        return SystemParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("p", "q"):
            if math.isinf(d[name]):
                d[name] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown parameter fields: {sorted(unknown)}")
        kw = dict(d)
        for name in ("p", "q"):
            if name in kw:
                kw[name] = _parse_exponent(kw[name])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class CoveringParams:
    """Parameters of the frequency covering alone.

    The covering admits ``0 <= beta <= alpha <= 1``; the packet system needs
    ``alpha < 1`` on top, which :class:`SystemParams` enforces.  Every
    geometric function of this module accepts either type.
    """

    alpha: float = 0.5
    beta: float = 0.5
    epsilon: float = 0.01
    n_sectors: int = 10
    j_max: int = 2

    def __post_init__(self):
        if not (0.0 <= self.beta <= self.alpha <= 1.0):
            raise ParamError(f"need 0 <= beta <= alpha <= 1, got alpha={self.alpha}, beta={self.beta}")
        if not (0.0 < self.epsilon < 1.0 / 32.0):
            raise ParamError(f"epsilon must lie in (0, 1/32), got {self.epsilon}")
        if self.n_sectors != 10:
            raise ParamError(f"n_sectors is fixed to 10, got {self.n_sectors}")
        if not (isinstance(self.j_max, (int, np.integer)) and self.j_max >= 1):
            raise ParamError(f"j_max must be a positive integer, got {self.j_max!r}")


def _parse_exponent(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(v)
    if v is None:
        return math.inf
    return float(v)


class FrequencyIndex(NamedTuple):
    j: int
    m: int
    l: int

    @property
    def is_zero_block(self) -> bool:
        return self.j == 0


class PacketIndex(NamedTuple):
    j: int
    m: int
    l: int
    k1: int
    k2: int

    @property
    def block(self) -> FrequencyIndex:
        return FrequencyIndex(self.j, self.m, self.l)

    @property
    def k(self) -> tuple[int, int]:
        return (self.k1, self.k2)

    @property
    def is_zero_block(self) -> bool:
        return self.j == 0


def _check_scale(j: int, params: SystemParams) -> None:
    if not (1 <= j <= params.j_max):
        raise ParamError(f"scale j={j} outside 1..{params.j_max}")


def l_max(j: int, params: SystemParams) -> int:
    """Largest angular slot at scale ``j``: ``ceil(N 2^{(1-beta) j}) - 1``."""
    _check_scale(j, params)
    return math.ceil(params.n_sectors * 2.0 ** ((1.0 - params.beta) * j)) - 1


def theta_jl(j: int, l: int, params: SystemParams) -> float:
    _check_scale(j, params)
    if not (0 <= l <= l_max(j, params)):
        raise ParamError(f"angular slot l={l} outside 0..{l_max(j, params)} at j={j}")
    return 2.0 * math.pi * 2.0 ** ((params.beta - 1.0) * j) * l / params.n_sectors


def _angle_survives(j: int, l: int, params: SystemParams) -> bool:
    # theta_{j,l} == theta_{j+1,l'}  <=>  l' = l * 2^{1-beta} is an integer
    x = l * 2.0 ** (1.0 - params.beta)
    lp = round(x)
    if abs(x - lp) > ANGLE_TOL:
        return False
    n_next = math.ceil(params.n_sectors * 2.0 ** ((1.0 - params.beta) * (j + 1))) - 1
    return lp <= n_next


def m_max(j: int, l: int, params: SystemParams) -> int:
    """Largest radial slot of the block ``(j, ., l)``.

    The ring at scale ``j`` ends one slot earlier when its angle reappears at
    scale ``j + 1`` (or when ``j`` is the last scale), because the next ring
    then continues the same ray.
    """
    _check_scale(j, params)
    if not (0 <= l <= l_max(j, params)):
        raise ParamError(f"angular slot l={l} outside 0..{l_max(j, params)} at j={j}")
    base = math.ceil(2.0 ** ((1.0 - params.alpha) * j - 1.0))
    if j == params.j_max or _angle_survives(j, l, params):
        return base - 1
    return base


def enumerate_frequency_indices(params: SystemParams) -> list[FrequencyIndex]:
    out = [FrequencyIndex(0, 0, 0)]
    for j in range(1, params.j_max + 1):
        for l in range(l_max(j, params) + 1):
            for m in range(m_max(j, l, params) + 1):
                out.append(FrequencyIndex(j, m, l))
    return out


def lattice(k_radius: int) -> list[tuple[int, int]]:
    r = range(-k_radius, k_radius + 1)
    return [(k1, k2) for k1 in r for k2 in r]


def enumerate_indices(params: SystemParams) -> list[PacketIndex]:
    ks = lattice(params.k_radius)
    return [PacketIndex(b.j, b.m, b.l, k1, k2)
            for b in enumerate_frequency_indices(params) for (k1, k2) in ks]


def scale_matrix(j: int, params: SystemParams) -> np.ndarray:
    return np.diag([2.0 ** (params.alpha * j), 2.0 ** (params.beta * j)])


def modulation_vector(j: int, m: int, params: SystemParams) -> np.ndarray:
    return np.array([2.0 ** (j - 1) + m * 2.0 ** (params.alpha * j), 0.0])


def rotation_matrix(j: int, l: int, params: SystemParams) -> np.ndarray:
    th = theta_jl(j, l, params)
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s], [s, c]])


def _block_of(i) -> FrequencyIndex:
    return FrequencyIndex(i[0], i[1], i[2])


def _k_of(i) -> tuple[int, int]:
    if len(i) == 5:
        return (i[3], i[4])
    return (0, 0)


def freq_center(i, params: SystemParams) -> np.ndarray:
    j, m, l = _block_of(i)
    if j == 0:
        return np.zeros(2)
    return rotation_matrix(j, l, params) @ modulation_vector(j, m, params)


def freq_radius(i, params: SystemParams) -> float:
    j, m, l = _block_of(i)
    if j == 0:
        return 0.0
    return 2.0 ** (j - 1) + m * 2.0 ** (params.alpha * j)


def freq_angle(i, params: SystemParams) -> float:
    j, m, l = _block_of(i)
    if j == 0:
        return 0.0
    return theta_jl(j, l, params)


def time_step_matrix(block, params: SystemParams) -> np.ndarray:
    """Linear map ``k -> t`` of the time lattice of a block (``delta R A^{-1}``)."""
    j, m, l = block
    if j == 0:
        return params.delta * np.eye(2)
    a_inv = np.diag([2.0 ** (-params.alpha * j), 2.0 ** (-params.beta * j)])
    return params.delta * rotation_matrix(j, l, params) @ a_inv


def time_center(i, params: SystemParams) -> np.ndarray:
    return time_step_matrix(_block_of(i), params) @ np.asarray(_k_of(i), dtype=float)


@dataclass
class IndexGeometry:
    """Column arrays of the phase-space coordinates of an index list."""

    indices: list
    r: np.ndarray
    theta: np.ndarray
    t: np.ndarray                      # shape (n, 2)
    block_id: np.ndarray               # position of each index's block in `blocks`
    blocks: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.indices)


def index_geometry(indices: Sequence, params: SystemParams) -> IndexGeometry:
    """Vectorised phase-space coordinates ``r_i, theta_i, t_i`` of ``indices``."""
    blocks: dict[FrequencyIndex, int] = {}
    block_list: list[FrequencyIndex] = []
    n = len(indices)
    r = np.empty(n)
    th = np.empty(n)
    t = np.empty((n, 2))
    bid = np.empty(n, dtype=np.int64)
    cache = {}
    for pos, i in enumerate(indices):
        b = _block_of(i)
        if b not in blocks:
            blocks[b] = len(block_list)
            block_list.append(b)
            cache[b] = (freq_radius(b, params), freq_angle(b, params),
                        time_step_matrix(b, params))
        rb, thb, tm = cache[b]
        k1, k2 = _k_of(i)
        r[pos] = rb
        th[pos] = thb
        t[pos, 0] = tm[0, 0] * k1 + tm[0, 1] * k2
        t[pos, 1] = tm[1, 0] * k1 + tm[1, 1] * k2
        bid[pos] = blocks[b]
    return IndexGeometry(list(indices), r, th, t, bid, block_list)


def validate_index(i, params: SystemParams) -> None:
    j, m, l = _block_of(i)
    if j == 0:
        if (m, l) != (0, 0):
            raise ParamError(f"zero block must be (0, 0, 0), got {(j, m, l)}")
    else:
        _check_scale(j, params)
        if not (0 <= l <= l_max(j, params)):
            raise ParamError(f"l={l} out of range at j={j}")
        if not (0 <= m <= m_max(j, l, params)):
            raise ParamError(f"m={m} out of range at (j, l)={(j, l)}")
    k1, k2 = _k_of(i)
    if max(abs(k1), abs(k2)) > params.k_radius:
        raise ParamError(f"k={(k1, k2)} outside the lattice radius {params.k_radius}")


def parse_indices(rows: Iterable[Sequence[int]]) -> list[PacketIndex]:
    return [PacketIndex(*map(int, r)) for r in rows]
