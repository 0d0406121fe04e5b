import math

import numpy as np
import pytest

from wavepackets.frame_ops import (AtomMatrix, BandLimitError, CoefficientSet, PartitionError,
                                   PartitionOfUnity, StagnationError, analyze, build_partition,
                                   coefficient_norm, decomposition_norm, frame_operator_apply,
                                   gaussian_signal, grid_for, random_disk_points, reconstruct,
                                   synthesize)
from wavepackets.gram import inner_product
from wavepackets.index_space import PacketIndex, SystemParams, enumerate_indices
from wavepackets.packets import Grid, GridTooSmall, SampledField, inverse_continuous_ft, packet_time, sample_packet


@pytest.fixture(scope="module")
def setup():
    p = SystemParams(j_max=1, k_radius=1)
    grid = grid_for(p, step=1 / 32)
    atoms = AtomMatrix(enumerate_indices(p), grid, p, tail=1e-16)
    return p, grid, atoms


def _random_field(grid, seed):
    rng = np.random.default_rng(seed)
    pts = grid.points()
    env = np.exp(-math.pi * np.sum(pts ** 2, axis=-1) / 4)
    return SampledField(grid, env * (rng.normal(size=grid.counts) + 1j * rng.normal(size=grid.counts)))


def test_analyze_column(setup):
    p, grid, atoms = setup
    idx = atoms.indices
    i0 = idx[40]
    c = analyze(sample_packet(i0, "time", grid, p), p, atoms=atoms)
    for k in range(0, len(idx), 7):
        assert abs(c.values[k] - inner_product(idx[k], i0, p)) < 1e-8


def test_analyze_linear(setup):
    p, grid, atoms = setup
    f, g = _random_field(grid, 1), _random_field(grid, 2)
    a, b = 0.3 - 1.2j, 2.0 + 0.5j
    lhs = analyze(SampledField(grid, a * f.values + b * g.values), p, atoms=atoms).values
    rhs = a * analyze(f, p, atoms=atoms).values + b * analyze(g, p, atoms=atoms).values
    assert np.max(np.abs(lhs - rhs)) < 1e-10
    zero = analyze(SampledField(grid, np.zeros(grid.counts)), p, atoms=atoms)
    assert not zero.values.any()


def test_analyze_default_atoms(setup):
    p, grid, atoms = setup
    f = _random_field(grid, 3)
    np.testing.assert_allclose(analyze(f, p).values, analyze(f, p, atoms=atoms).values, atol=1e-14)


def test_grid_too_small():
    p = SystemParams(j_max=1, k_radius=1)
    f = SampledField(Grid.centered((0.0, 0.0), 1.0, 33), np.zeros((33, 33)))
    with pytest.raises(GridTooSmall, match=r"packet \("):
        analyze(f, p)


def test_synthesize_unit_and_zero(setup):
    p, grid, _ = setup
    i0 = PacketIndex(1, 0, 5, 1, -1)
    out = synthesize(CoefficientSet.unit(i0, p), grid)
    assert np.array_equal(out.values, packet_time(i0, grid.points(), p))
    assert not synthesize(CoefficientSet.zeros(p), grid).values.any()


def test_frame_operator_composition(setup):
    p, grid, atoms = setup
    f = _random_field(grid, 4)
    s1 = frame_operator_apply(f, p, atoms=atoms).values
    s2 = synthesize(analyze(f, p, atoms=atoms), grid, atoms=atoms).values
    assert np.array_equal(s1, s2)


def test_adjointness_and_positivity(setup):
    p, grid, atoms = setup
    rng = np.random.default_rng(5)
    c = CoefficientSet(atoms.indices, rng.normal(size=len(atoms.indices)) + 1j * rng.normal(size=len(atoms.indices)), p)
    f, g = _random_field(grid, 6), _random_field(grid, 7)
    lhs = synthesize(c, grid, atoms=atoms).inner(f)
    rhs = np.vdot(c.values, analyze(f, p, atoms=atoms).values)
    assert abs(lhs - rhs) < 1e-8 * max(1.0, abs(lhs))
    sf = frame_operator_apply(f, p, atoms=atoms)
    sg = frame_operator_apply(g, p, atoms=atoms)
    assert abs(sf.inner(g) - f.inner(sg)) < 1e-8 * max(1.0, abs(sf.inner(g)))
    assert f.inner(sf).real >= 0 and abs(f.inner(sf).imag) < 1e-10


def test_coefficient_norm_examples():
    p = SystemParams(j_max=3, k_radius=1)
    c = CoefficientSet.unit(PacketIndex(2, 0, 4, 0, 1), p)
    assert coefficient_norm(c, 0, 2, 2) == 1.0
    assert coefficient_norm(c, 1, 2, 1) == 4.0
    rng = np.random.default_rng(0)
    c = CoefficientSet(c.indices, rng.normal(size=len(c)) + 1j * rng.normal(size=len(c)), p)
    w = np.array([1.0 if i.j == 0 else 2.0 ** (i.j * (0.5 + 0.5)) for i in c.indices])
    assert coefficient_norm(c, 0.5, math.inf, math.inf) == pytest.approx(np.max(w * np.abs(c.values)), rel=1e-14)
    n1, n2, ninf = (coefficient_norm(c, 0.3, 1.5, q) for q in (1, 2, math.inf))
    assert n1 >= n2 >= ninf
    with pytest.raises(ValueError):
        coefficient_norm(c, 0, 0, 1)


def test_coefficient_csv(tmp_path):
    p = SystemParams(j_max=1, k_radius=1)
    c = CoefficientSet(enumerate_indices(p), np.arange(len(enumerate_indices(p))) * (1 - 0.5j), p)
    c.write_csv(tmp_path / "c.csv")
    back = CoefficientSet.read_csv(tmp_path / "c.csv", p)
    assert back.indices == c.indices and np.array_equal(back.values, c.values)
    with pytest.raises(ValueError):
        CoefficientSet([PacketIndex(1, 0, 0, 5, 0)], [1.0], p)


@pytest.mark.parametrize("alpha,beta,j_max", [(0.5, 0.5, 2), (0.0, 0.0, 2), (0.75, 0.25, 3), (0.9, 0.3, 2)])
def test_partition_sums(alpha, beta, j_max):
    p = SystemParams(alpha=alpha, beta=beta, j_max=j_max)
    pou = build_partition(p)
    pts = random_disk_points(10_000, 2.0 ** j_max, np.random.default_rng(1))
    assert np.max(np.abs(pou.evaluate(pts).sum(axis=0) - 1)) < 1e-10


def test_partition_support():
    p = SystemParams()
    pou = build_partition(p)
    ax = np.linspace(-4.2, 4.2, 301)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    phis = pou.evaluate(pts, check=False)
    for t, phi in zip(pou.tiles, phis):
        assert not np.any((phi != 0) & ~t.contains(pts))
    assert pou.evaluate(np.zeros((1, 2)))[0, 0] == 1.0


def test_partition_detects_gap():
    p = SystemParams()
    pou = build_partition(p)
    holey = PartitionOfUnity([t for t in pou.tiles if t.index.j != 2], p, pou.disk_core, pou.disk_outer)
    with pytest.raises(PartitionError):
        holey.evaluate(random_disk_points(2000, 4.0, np.random.default_rng(0)))


def _bandlimited(grid, radius=0.45):
    n = np.array(grid.counts)
    dxi = 1.0 / (n * np.array(grid.step))
    fg = Grid(tuple(-(n // 2) * dxi), tuple(dxi), tuple(grid.counts))
    xi = fg.points()
    r = np.hypot(xi[..., 0], xi[..., 1]) / radius
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(r < 1, np.exp(-1 / np.maximum(1 - r ** 2, 1e-300)), 0.0)
    F = SampledField(fg, bump * np.exp(-2j * math.pi * xi[..., 0] * 0.3), "freq")
    return inverse_continuous_ft(F, grid.origin)


def test_decomposition_norm_low_band():
    p = SystemParams()
    pou = build_partition(p)
    grid = Grid.centered((0.0, 0.0), 8.0, 129)
    f = _bandlimited(grid)
    for s in (-1.0, 0.0, 2.0):
        for pp in (1.0, 2.0, math.inf):
            assert decomposition_norm(f, pou, s, pp, 1.0) == pytest.approx(f.norm(pp), rel=1e-12)
    assert decomposition_norm(SampledField(grid, np.zeros(grid.counts)), pou, 0, 2, 2) == 0.0
    a = decomposition_norm(gaussian_signal(grid, 0.9), pou, 0.5, 2, 1)
    b = decomposition_norm(SampledField(grid, -3j * gaussian_signal(grid, 0.9).values), pou, 0.5, 2, 1)
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_band_limit_error():
    grid = Grid.centered((0.0, 0.0), 4.0, 129)
    with pytest.raises(BandLimitError):
        decomposition_norm(gaussian_signal(grid, 0.2), build_partition(SystemParams()), 0, 2, 2)


def test_reconstruct_small():
    p = SystemParams(j_max=2, k_radius=1)
    grid = grid_for(p, step=1 / 16)
    f = gaussian_signal(grid, 0.9)
    try:
        rec = reconstruct(f, p, max_iterations=60)
    except StagnationError as exc:
        rec = exc.result
    assert rec.relative_error < 0.05
    assert all(b <= a + 1e-12 for a, b in zip(rec.errors, rec.errors[1:]))
    assert rec.relative_error == pytest.approx(rec.errors[-1], rel=1e-8)


def test_reconstruct_stagnation_diagnostic():
    # the reference system stalls on this signal well before 400 iterations
    p = SystemParams()
    f = gaussian_signal(grid_for(p), 0.8)
    with pytest.raises(StagnationError, match="smaller delta") as exc:
        reconstruct(f, p, max_iterations=400, tol=1e-14)
    rec = exc.value.result
    assert 50 < rec.iterations < 400 and rec.relative_error < 0.05
