"""Prototype functions generating the wave packet system.

The built-in prototypes are Gaussians: ``gamma(t) = exp(-pi |t|^2)`` for the
low-pass block and, for all other blocks, the function ``psi`` whose Fourier
transform is the Gaussian centred at the middle ``(1/2, 0)`` of the base
rectangle.  Both decay faster than any polynomial, so every decay exponent
required of an admissible prototype is met.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Prototype:
    """Evaluable pair ``(f, f_hat)`` with the metadata quadrature needs.

    ``time_eval`` and ``freq_eval`` take arrays of shape ``(..., 2)``.
    ``time_radius(tail)`` / ``freq_radius(tail)`` return the radius around
    ``time_center`` / ``freq_center`` outside which the modulus stays below
    ``tail`` times its maximum.
    """

    label: str
    time_eval: Evaluator
    freq_eval: Evaluator
    kappa0: float
    kappa: float
    time_center: tuple[float, float]
    freq_center: tuple[float, float]
    time_radius: Callable[[float], float]
    freq_radius: Callable[[float], float]
    norm_sq: float


def _gauss_radius(tail: float) -> float:
    return math.sqrt(math.log(1.0 / tail) / math.pi)


def _gamma_time(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-math.pi * np.einsum("...i,...i->...", t, t)).astype(complex)


def _psi_time(t):
    t = np.asarray(t, dtype=float)
    r2 = np.einsum("...i,...i->...", t, t)
    return np.exp(-math.pi * r2 + 1j * math.pi * t[..., 0])


def _psi_freq(xi):
    xi = np.asarray(xi, dtype=float)
    d0 = xi[..., 0] - 0.5
    d1 = xi[..., 1]
    return np.exp(-math.pi * (d0 * d0 + d1 * d1)).astype(complex)


def default_gamma() -> Prototype:
    return Prototype(
        label="gaussian",
        time_eval=_gamma_time,
        freq_eval=_gamma_time,
        kappa0=math.inf,
        kappa=math.inf,
        time_center=(0.0, 0.0),
        freq_center=(0.0, 0.0),
        time_radius=_gauss_radius,
        freq_radius=_gauss_radius,
        norm_sq=0.5,
    )


def default_psi() -> Prototype:
    return Prototype(
        label="gaussian",
        time_eval=_psi_time,
        freq_eval=_psi_freq,
        kappa0=math.inf,
        kappa=math.inf,
        time_center=(0.0, 0.0),
        freq_center=(0.5, 0.0),
        time_radius=_gauss_radius,
        freq_radius=_gauss_radius,
        norm_sq=0.5,
    )


@dataclass(frozen=True)
class PrototypePair:
    gamma: Prototype
    psi: Prototype

    @property
    def label(self) -> str:
        return self.psi.label


BUILTIN = {"gaussian": lambda: PrototypePair(default_gamma(), default_psi())}


def get_prototypes(label: str = "gaussian") -> PrototypePair:
    try:
        pair = BUILTIN[label]()
    except KeyError:
        raise ValueError(f"unknown prototype label {label!r}; available: {sorted(BUILTIN)}") from None
    if label != "gaussian":
        log.warning("prototype %r: derivative decay hypotheses are not verified", label)
    return pair


def verify_decay(proto: Prototype, exponent: float, sample_count: int = 20000,
                 domain: str = "time", r_max: float = 50.0) -> tuple[float, float]:
    """Estimate ``sup_r (1 + r)^exponent |f|`` on a log-spaced radial grid.

    The modulus is sampled along the ray through the prototype's centre in the
    direction of slowest decay among 16 directions.  Returns the supremum and
    the radius at which it is attained.
    """
    if exponent < 0:
        raise ValueError("exponent must be non-negative")
    f = proto.time_eval if domain == "time" else proto.freq_eval
    center = np.asarray(proto.time_center if domain == "time" else proto.freq_center)
    radii = np.concatenate([[0.0], np.geomspace(1e-6, r_max, sample_count - 1)])
    best, at = -1.0, 0.0
    for ang in np.linspace(0.0, 2 * math.pi, 16, endpoint=False):
        d = np.array([math.cos(ang), math.sin(ang)])
        pts = center + radii[:, None] * d
        # measure |t| from the origin, the convention of the decay condition
        rr = np.hypot(pts[:, 0], pts[:, 1])
        with np.errstate(over="ignore", under="ignore"):
            vals = np.exp(exponent * np.log1p(rr)) * np.abs(f(pts))
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, at = float(vals[k]), float(rr[k])
    return best, at


def verify_nonvanishing(proto: Prototype, region: str, grid: int = 401,
                        epsilon: float = 0.01) -> float:
    """Minimum modulus of ``freq_eval`` over the closed disk of radius 4 or the base rectangle."""
    if region == "disk4":
        ax = np.linspace(-4.0, 4.0, grid)
        x, y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([x, y], axis=-1)
        inside = np.hypot(x, y) <= 4.0
        # include the boundary circle itself
        ang = np.linspace(0, 2 * math.pi, 4 * grid, endpoint=False)
        ring = 4.0 * np.column_stack([np.cos(ang), np.sin(ang)])
        vals = np.concatenate([np.abs(proto.freq_eval(pts[inside])), np.abs(proto.freq_eval(ring))])
    elif region == "base_rectangle":
        x = np.linspace(-epsilon, 1 + epsilon, grid)
        y = np.linspace(-1 - epsilon, 1 + epsilon, grid)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        vals = np.abs(proto.freq_eval(np.stack([xx, yy], axis=-1)))
    else:
        raise ValueError(f"unknown region {region!r}")
    return float(vals.min())
