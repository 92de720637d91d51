import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairlindblad import continuum, ensemble, meanfield
from pairlindblad.continuum import Density, PointMasses

unit = st.floats(0, 1)
times = st.floats(0, 50)


def beta44(x):
    return 140 * x**3 * (1 - x) ** 3


def test_characteristic_examples():
    assert continuum.characteristic(0.0, 17.0) == 0.0
    assert continuum.characteristic(1.0, 1.0) == 0.5
    assert continuum.characteristic(0.5, 2.0) == 0.25


@given(unit, unit, times)
def test_characteristics_never_cross(a, b, t):
    lo, hi = sorted((a, b))
    if lo < hi:
        assert continuum.characteristic(lo, t) < continuum.characteristic(hi, t)


@given(st.floats(1e-6, 1), times, st.floats(1e-3, 50))
def test_characteristic_decreases_in_time(x0, t, dt):
    assert continuum.characteristic(x0, t + dt) < continuum.characteristic(x0, t)


def test_point_mass_examples():
    p = continuum.evolve_density(PointMasses.single(1.0), 3.0)
    np.testing.assert_array_equal(p.positions, [0.25])
    assert p.time == 3.0
    assert continuum.mean_excited(PointMasses.single(0.37)) == 0.37
    for t in (0.5, 2.0, 9.0):
        assert continuum.mean_excited(continuum.evolve_density(PointMasses.single(1.0), t)) == pytest.approx(1 / (1 + t), abs=1e-15)


def test_large_time_mean_matches_decay_law():
    # 2x = 1 - u_z
    for t in (50.0, 500.0):
        x = continuum.mean_excited(continuum.evolve_density(PointMasses.single(1.0), t))
        uz = meanfield.decay_uz_exact(-1.0, 1.0, t)
        assert 2 * x == pytest.approx(1 - uz, rel=1e-12)
        assert x == pytest.approx(1 / t, rel=2 / t)


@given(st.lists(unit, min_size=1, max_size=5), times, times)
def test_point_mass_semigroup(xs, t1, t2):
    w = np.full(len(xs), 1 / len(xs))
    p0 = PointMasses(np.array(xs), w)
    two = continuum.evolve_density(continuum.evolve_density(p0, t1), t2)
    one = continuum.evolve_density(p0, t1 + t2)
    assert np.max(np.abs(two.positions - one.positions)) <= 1e-14
    np.testing.assert_array_equal(two.weights, w)


def test_zero_time_is_identity():
    d = Density.from_pdf(beta44)
    assert continuum.evolve_density(d, 0.0) is d


def test_uniform_density_at_unit_time():
    grid = np.linspace(0, 1, 4097)
    p = continuum.evolve_density(Density.from_pdf(np.ones_like, grid), 1.0)
    lower = grid <= 0.5
    np.testing.assert_allclose(p.values[lower], (1 - grid[lower]) ** -2, rtol=1e-14)
    np.testing.assert_array_equal(p.values[~lower], 0)
    # the support ends on a grid node, so quadrature over it avoids the jump
    assert abs(continuum.trapezoid(p.values[lower], grid[lower]) - 1) < 1e-6


@pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
def test_mass_conservation_for_smooth_data(t):
    p = continuum.evolve_density(Density.from_pdf(beta44), t)
    assert abs(p.mass - 1) <= 1e-6


@pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
def test_support_bound(t):
    p = continuum.evolve_density(Density.from_pdf(beta44), t)
    assert np.all(p.values[p.grid > 1 / (1 + t)] == 0)
    assert np.all(p.values >= 0)


def test_density_semigroup_with_pdf():
    d = Density.from_pdf(beta44)
    two = continuum.evolve_density(continuum.evolve_density(d, 0.7), 1.8)
    one = continuum.evolve_density(d, 2.5)
    np.testing.assert_allclose(two.values, one.values, rtol=1e-12, atol=1e-12)


def test_tabulated_density_is_interpolated():
    grid = np.linspace(0, 1, 2049)
    tabulated = Density(grid, beta44(grid))
    p = continuum.evolve_density(tabulated, 1.0)
    exact = continuum.evolve_density(Density.from_pdf(beta44, grid), 1.0)
    np.testing.assert_allclose(p.values, exact.values, atol=1e-4)


def test_pullback_guards_the_singular_point():
    x = np.array([0.25, 0.5, 0.75, 1.0])
    out = continuum.pullback_density(np.ones_like, x, 2.0)
    np.testing.assert_array_equal(out[1:], 0)
    assert np.all(np.isfinite(out))


def test_validation():
    with pytest.raises(ValueError):
        Density(np.linspace(0, 1, 5), np.ones(5) * 2)
    with pytest.raises(ValueError):
        Density(np.array([0, 0.6, 0.5]), np.ones(3))
    with pytest.raises(ValueError):
        PointMasses(np.array([0.2, 0.4]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        PointMasses(np.array([1.2]), np.array([1.0]))
    with pytest.raises(ValueError):
        continuum.evolve_density(PointMasses.single(1.0), -1.0)


def test_agreement_with_large_ensemble():
    ts = np.linspace(0, 10, 101)
    limit = continuum.mean_curve_point_mass(1.0, ts)
    gap = {n: np.max(np.abs(ensemble.survival_curve(n, ts) - limit)) for n in (64, 256)}
    assert gap[256] < gap[64] < 0.01
