import math

import numpy as np
import pytest

from wavepackets.index_space import PacketIndex, SystemParams, enumerate_indices
from wavepackets.metric import (check_metric_axioms, lattice_bound, rho, separation, summability,
                                wrapped_angle)


def test_rho_examples(ref_params):
    i = PacketIndex(1, 0, 3, 1, -1)
    d = rho(i, i, ref_params)
    assert d.total == 0 and d.r_component == d.theta_component == d.t1_component == d.t2_component == 0
    d = rho(PacketIndex(0, 0, 0, 0, 0), PacketIndex(0, 0, 0, 1, 0), ref_params)
    assert d.total == 0.25 and d.t1_component == 0.25
    d = rho(PacketIndex(1, 0, 0, 0, 0), PacketIndex(2, 0, 0, 0, 0), ref_params)
    assert (d.r_component, d.theta_component, d.total) == (1.0, 0.0, 1.0)


def test_wrapped_angle():
    assert wrapped_angle(1.5 * math.pi) == pytest.approx(0.5 * math.pi)
    assert wrapped_angle(-0.1) == pytest.approx(0.1)
    x = np.linspace(-2 * math.pi, 2 * math.pi, 101)
    assert np.all((wrapped_angle(x) >= 0) & (wrapped_angle(x) <= math.pi))


def test_axioms_small():
    p = SystemParams(alpha=0.75, beta=0.25, j_max=2, k_radius=1)
    rep = check_metric_axioms(enumerate_indices(p), p, trials=20000, seed=5)
    assert rep["total_violations"] == 0


def test_translation_invariance(ref_params):
    a = rho(PacketIndex(2, 0, 7, -1, 0), PacketIndex(2, 0, 7, 1, 1), ref_params)
    b = rho(PacketIndex(2, 0, 7, 0, 1), PacketIndex(2, 0, 7, 2, 2), ref_params)
    assert a.total == pytest.approx(b.total, abs=1e-15)


def test_separation_lattice_bound():
    p = SystemParams()
    assert lattice_bound(p) == 0.0625
    p1 = SystemParams(j_max=1, k_radius=1)
    s1 = separation(enumerate_indices(p1), p1)
    p2 = p1.replace(delta=p1.delta / 2)
    s2 = separation(enumerate_indices(p2), p2)
    assert s1["infimum"] > 0 and s1["passed"]
    assert s2["same_block_min"] == s1["same_block_min"] / 2
    with pytest.raises(ValueError):
        separation([], p1)


def test_summability_basics():
    p = SystemParams(j_max=1, k_radius=0)
    assert summability([PacketIndex(1, 0, 2, 0, 0)], p) == 1.0
    with pytest.raises(ValueError):
        summability(enumerate_indices(p), p, n=5)
    vals = [summability(enumerate_indices(p.replace(k_radius=k)), p.replace(k_radius=k)) for k in (0, 1, 2, 4)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_summability_parallel_same():
    p = SystemParams(j_max=1, k_radius=2)
    idx = enumerate_indices(p)
    assert summability(idx, p, workers=3, chunk=17) == summability(idx, p)
