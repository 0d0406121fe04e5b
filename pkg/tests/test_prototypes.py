import math

import numpy as np
import pytest

from wavepackets.packets import Grid, SampledField, continuous_ft, relative_l2
from wavepackets.prototypes import (default_gamma, default_psi, get_prototypes, verify_decay,
                                    verify_nonvanishing)

# maximiser of (1 + r)^24 exp(-pi r^2): root of 2 pi r (1 + r) = 24
R_STAR = (-1.0 + math.sqrt(1.0 + 48.0 / math.pi)) / 2.0


def test_centres():
    assert default_gamma().freq_eval(np.zeros(2)) == 1.0
    assert default_psi().freq_eval(np.array([0.5, 0.0])) == 1.0


@pytest.mark.parametrize("proto", [default_gamma(), default_psi()])
def test_norm_is_half(proto):
    g = Grid.centered((0.0, 0.0), 6.0, 241)
    vals = proto.time_eval(g.points())
    assert SampledField(g, vals).norm(2) ** 2 == pytest.approx(0.5, abs=1e-12)
    assert proto.norm_sq == 0.5


def test_decay_argmax():
    assert R_STAR == pytest.approx(1.51735, abs=1e-5)
    sup, at = verify_decay(default_gamma(), 24)
    assert at == pytest.approx(R_STAR, rel=2e-3)
    assert sup == pytest.approx((1 + R_STAR) ** 24 * math.exp(-math.pi * R_STAR ** 2), rel=1e-5)


def test_decay_exponent_zero_and_refinement():
    sup, at = verify_decay(default_gamma(), 0)
    assert sup == 1.0 and at == 0.0
    a, _ = verify_decay(default_psi(), 24, sample_count=20000)
    b, _ = verify_decay(default_psi(), 24, sample_count=40000)
    assert abs(a - b) / b < 1e-3


@pytest.mark.parametrize("exponent", [24, 30])
def test_decay_finite(exponent):
    for proto in (default_gamma(), default_psi()):
        for domain in ("time", "freq"):
            assert math.isfinite(verify_decay(proto, exponent, domain=domain)[0])


def test_nonvanishing():
    g = verify_nonvanishing(default_gamma(), "disk4")
    assert g == pytest.approx(math.exp(-16 * math.pi), rel=1e-9)
    m = verify_nonvanishing(default_psi(), "base_rectangle", epsilon=0.01)
    assert m == pytest.approx(math.exp(-math.pi * (0.51 ** 2 + 1.01 ** 2)), rel=1e-12)
    with pytest.raises(ValueError):
        verify_nonvanishing(default_psi(), "square")


@pytest.mark.parametrize("proto", [default_gamma(), default_psi()])
def test_transform_pair(proto):
    n, h = 256, 8.0 / 256
    tg = Grid((-n // 2 * h, -n // 2 * h), (h, h), (n, n))
    f = SampledField(tg, proto.time_eval(tg.points()))
    dxi = 1.0 / (n * h)
    F = continuous_ft(f, (-n // 2 * dxi + 0.5, -n // 2 * dxi))
    assert relative_l2(F.values, proto.freq_eval(F.grid.points())) < 1e-6


def test_labels():
    assert get_prototypes().label == "gaussian"
    with pytest.raises(ValueError):
        get_prototypes("mexican-hat")
