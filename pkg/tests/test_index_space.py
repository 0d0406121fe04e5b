import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavepackets.index_space import (CoveringParams, FrequencyIndex, PacketIndex, ParamError,
                                     SystemParams, enumerate_frequency_indices, enumerate_indices,
                                     freq_angle, freq_center, freq_radius, l_max, m_max,
                                     modulation_vector, rotation_matrix, scale_matrix, theta_jl,
                                     time_center, validate_index)


def test_theta_examples():
    assert theta_jl(1, 0, SystemParams(beta=0.3)) == 0.0
    assert theta_jl(1, 1, CoveringParams(alpha=1.0, beta=1.0, j_max=1)) == pytest.approx(math.pi / 5, abs=1e-15)
    assert theta_jl(2, 3, SystemParams()) == pytest.approx(3 * math.pi / 10, abs=1e-15)


def test_theta_range_errors():
    p = SystemParams()
    with pytest.raises(ParamError):
        theta_jl(3, 0, p)
    with pytest.raises(ParamError):
        theta_jl(1, l_max(1, p) + 1, p)


def test_l_max_examples():
    assert l_max(1, CoveringParams(alpha=1.0, beta=1.0, j_max=1)) == 9
    assert l_max(2, SystemParams()) == 19
    # 10 * 2^0.7 = 16.2450479...
    assert l_max(1, SystemParams(alpha=0.5, beta=0.3)) == 16
    with pytest.raises(ParamError):
        l_max(0, SystemParams())


def test_m_max_cases():
    p = SystemParams(j_max=4)
    # last scale forces the shorter ring
    assert m_max(4, 5, p) == math.ceil(2 ** (0.5 * 4 - 1)) - 1
    # zero angle persists to the next scale: first case, ceil(2^{1/2}) - 1
    assert m_max(3, 0, p) == 1
    assert m_max(3, 1, p) == 2
    # 1 * 2^{1/2} is irrational: the ring keeps its extra slot
    assert m_max(2, 1, SystemParams(j_max=3)) == 1


def _count_brute(alpha, beta, j_max):
    n = 1
    for j in range(1, j_max + 1):
        lm = math.ceil(10 * 2 ** ((1 - beta) * j)) - 1
        for l in range(lm + 1):
            base = math.ceil(2 ** ((1 - alpha) * j - 1))
            lp = l * 2 ** (1 - beta)
            nxt = math.ceil(10 * 2 ** ((1 - beta) * (j + 1))) - 1
            same = abs(lp - round(lp)) < 1e-9 and round(lp) <= nxt
            n += (base - 1 if (j == j_max or same) else base) + 1
    return n


@pytest.mark.parametrize("alpha,beta,j_max", [(0.0, 0.0, 1), (0.5, 0.5, 2), (0.75, 0.25, 3), (0.9, 0.3, 2)])
def test_enumeration_count(alpha, beta, j_max):
    p = SystemParams(alpha=alpha, beta=beta, j_max=j_max)
    idx = enumerate_frequency_indices(p)
    assert len(idx) == _count_brute(alpha, beta, j_max)
    assert idx[0] == FrequencyIndex(0, 0, 0)
    assert len(set(idx)) == len(idx)


def test_enumeration_order_and_slots():
    p = SystemParams(j_max=1)
    idx = enumerate_frequency_indices(p)
    assert sorted(idx, key=lambda b: (b.j, b.l, b.m)) == idx
    assert max(b.l for b in idx if b.j == 1) == 14


def test_packet_enumeration():
    p = SystemParams(j_max=1, k_radius=1)
    idx = enumerate_indices(p)
    assert len(idx) == 9 * len(enumerate_frequency_indices(p))
    assert len(set(idx)) == len(idx)
    assert all(i.k == (0, 0) for i in enumerate_indices(p.replace(k_radius=0)))


def test_matrices():
    a = scale_matrix(2, CoveringParams(alpha=1.0, beta=0.0))
    np.testing.assert_array_equal(a, np.diag([4.0, 1.0]))
    np.testing.assert_allclose(modulation_vector(3, 1, SystemParams(j_max=3)), [4 + 2 ** 1.5, 0.0], atol=1e-14)
    p = SystemParams(j_max=3)
    for j in range(1, 4):
        np.testing.assert_array_equal(rotation_matrix(j, 0, p), np.eye(2))
        for l in range(l_max(j, p) + 1):
            r = rotation_matrix(j, l, p)
            np.testing.assert_allclose(r @ r.T, np.eye(2), atol=1e-14)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-14)


def test_phase_space_positions():
    p = SystemParams()
    i = PacketIndex(1, 0, 0, 0, 0)
    np.testing.assert_allclose(freq_center(i, p), [1.0, 0.0])
    assert freq_radius(i, p) == 1.0 and freq_angle(i, p) == 0.0
    np.testing.assert_allclose(time_center(PacketIndex(0, 0, 0, 2, -1), p), [0.5, -0.25])


def test_polar_consistency():
    p = SystemParams(j_max=3, k_radius=1)
    idx = enumerate_indices(p)
    rng = np.random.default_rng(3)
    for n in rng.choice(len(idx), 20, replace=False):
        i = idx[n]
        if i.is_zero_block:
            continue
        xi = freq_center(i, p)
        assert np.hypot(*xi) == pytest.approx(freq_radius(i, p), abs=1e-12)
        d = (math.atan2(xi[1], xi[0]) - freq_angle(i, p)) % (2 * math.pi)
        assert min(d, 2 * math.pi - d) < 1e-12


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (0.0, 0.0), (0.75, 0.25), (0.9, 0.3)])
def test_radius_and_angle_ranges(alpha, beta):
    p = SystemParams(alpha=alpha, beta=beta, j_max=3)
    for b in enumerate_frequency_indices(p)[1:]:
        r = freq_radius(b, p)
        assert 2 ** (b.j - 1) <= r < 2 ** b.j + 2 ** (alpha * b.j)
        assert 0 <= freq_angle(b, p) < 2 * math.pi


def test_injective_tiles():
    for jm in (1, 2, 3):
        p = SystemParams(j_max=jm)
        seen = {}
        for b in enumerate_frequency_indices(p):
            key = (tuple(np.round(freq_center(b, p), 12)), b.j)
            assert key not in seen
            seen[key] = b


@pytest.mark.parametrize("kw", [dict(alpha=0.3, beta=0.5), dict(epsilon=0.04), dict(epsilon=0.0),
                                dict(n_sectors=12), dict(j_max=0), dict(delta=0.0), dict(delta=-1.0),
                                dict(p=0.0), dict(k_radius=-1), dict(alpha=1.0, beta=0.5)])
def test_invalid_params(kw):
    with pytest.raises(ParamError):
        SystemParams(**kw)


def test_json_roundtrip():
    p = SystemParams(p=math.inf, q=1.0, s=-0.5)
    d = p.to_dict()
    assert d["p"] == "inf"
    assert SystemParams.from_dict(d) == p
    with pytest.raises(ParamError):
        SystemParams.from_dict({"gamma": 1})


def test_validate_index():
    p = SystemParams()
    validate_index(PacketIndex(2, 0, 19, 2, -2), p)
    for bad in [(0, 1, 0, 0, 0), (3, 0, 0, 0, 0), (1, 0, 0, 3, 0), (1, 5, 0, 0, 0)]:
        with pytest.raises(ParamError):
            validate_index(bad, p)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.0, 1.0), st.integers(1, 3))
def test_l_and_m_bounds(alpha, ratio, j_max):
    p = SystemParams(alpha=alpha, beta=alpha * ratio, j_max=j_max)
    for j in range(1, j_max + 1):
        assert l_max(j, p) >= 9
        for l in range(l_max(j, p) + 1):
            assert m_max(j, l, p) >= 0
