import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marcus_snls.grid import (
    AdmissiblePair,
    ComplexField,
    Grid,
    Trajectory,
    boundary_mass_fraction,
    l2_norm,
    lr_norm,
    make_admissible_pair,
    mixed_norm,
    running_y_norms,
    space_time_norm,
    trajectory_from_values,
    y_norm,
)
from marcus_snls.propagator import free_trajectory, uniform_times


@pytest.mark.parametrize("n, N, L", [(1, 4, 1.0), (1, 12, 1.0), (3, 8, 1.0), (1, 8, 0.0), (2, 8, -1.0)])
def test_grid_rejects_bad_parameters(n, N, L):
    with pytest.raises(ValueError):
        Grid(n, N, L)


def test_grid_geometry():
    g = Grid(2, 16, 2.0)
    assert g.spacing == 0.25
    assert g.shape == (16, 16)
    assert g.cell_volume == 0.0625
    assert g.axis()[0] == -2.0 and g.axis()[-1] == 2.0 - 0.25


def test_wavenumbers_are_integer_multiples_of_pi_over_L():
    g = Grid(1, 16, 3.0)
    idx = g.wavenumber_axis() * g.half_length / np.pi
    np.testing.assert_allclose(np.sort(idx), np.arange(-8, 8), atol=1e-12)


def test_field_rejects_non_finite_and_wrong_size():
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError, match="corrupt field"):
        ComplexField(g, np.array([np.nan] + [0.0] * 7))
    with pytest.raises(ValueError):
        ComplexField(g, np.zeros(9))


def test_norms_reject_corrupted_values():
    g = Grid(1, 8, 1.0)
    f = ComplexField(g, np.ones(8))
    f.values[3] = np.inf
    with pytest.raises(ValueError, match="corrupt field"):
        l2_norm(f)


def test_l2_zero_and_constant():
    g = Grid(1, 64, np.pi)
    assert l2_norm(ComplexField.zeros(g)) == 0.0
    assert l2_norm(ComplexField(g, np.ones(64))) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)


def test_l2_gaussian_analytic():
    g = Grid(1, 1024, 20.0)
    f = ComplexField(g, np.exp(-g.axis() ** 2))
    assert abs(l2_norm(f) - (math.pi / 2) ** 0.25) < 1e-8


def test_lr_examples():
    g = Grid(1, 64, np.pi)
    assert lr_norm(ComplexField(g, np.ones(64)), 4) == pytest.approx((2 * math.pi) ** 0.25, rel=1e-14)
    for r in (1, 3, 7.5, math.inf):
        assert lr_norm(ComplexField.zeros(g), r) == 0.0
    g = Grid(1, 1024, 20.0)
    f = ComplexField(g, np.exp(-g.axis() ** 2))
    assert abs(lr_norm(f, 4) - (math.sqrt(math.pi) / 2) ** 0.25) < 1e-6


def test_lr_inf_is_max_modulus_and_bad_exponent():
    g = Grid(1, 8, 1.0)
    v = np.array([1, -3j, 2, 0, 0, 0, 0, 1 + 1j])
    assert lr_norm(ComplexField(g, v), math.inf) == 3.0
    with pytest.raises(ValueError, match="invalid exponent"):
        lr_norm(ComplexField(g, v), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 64), (2, 16)]))
def test_discrete_parseval(seed, shape):
    n, N = shape
    g = Grid(n, N, 3.0)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    f = ComplexField(g, v)
    coeffs = np.fft.fftn(v)
    parseval = math.sqrt(g.cell_volume * np.sum(np.abs(coeffs) ** 2) / N**n)
    assert l2_norm(f) == pytest.approx(parseval, rel=1e-12)


def test_boundary_mass_of_centered_packet_is_negligible(gaussian):
    assert boundary_mass_fraction(gaussian) < 1e-4
    g = gaussian.grid
    edge = ComplexField(g, np.exp(-((g.axis() + g.half_length) ** 2)))
    assert boundary_mass_fraction(edge) > 0.4


@pytest.mark.parametrize("n", [1, 2, 3])
def test_r_two_is_energy_pair(n):
    pair = make_admissible_pair(n, 2.0)
    assert math.isinf(pair.p) and pair.r == 2.0


@pytest.mark.parametrize("n, r, p", [(1, 4.0, 8.0), (2, 4.0, 4.0), (1, 6.0, 6.0), (3, 6.0, 2.0)])
def test_admissible_examples(n, r, p):
    assert make_admissible_pair(n, r).p == pytest.approx(p, rel=1e-15)


@pytest.mark.parametrize("n, r", [(1, 1.5), (2, math.inf), (3, 7.0), (2, 1.0)])
def test_not_admissible(n, r):
    with pytest.raises(ValueError, match="not admissible"):
        make_admissible_pair(n, r)


def test_pair_constructor_checks_scaling():
    with pytest.raises(ValueError, match="not admissible"):
        AdmissiblePair(4.0, 4.0, 1)
    assert AdmissiblePair(8.0, 4.0, 1).dual == pytest.approx((8 / 7, 4 / 3))


@given(st.sampled_from([1, 2]), st.floats(2.0, 200.0))
def test_scaling_relation_holds(n, r):
    pair = make_admissible_pair(n, r)
    lhs = 0.0 if math.isinf(pair.p) else 2.0 / pair.p
    assert lhs == pytest.approx(n * (0.5 - 1.0 / r), abs=1e-15)


def _constant_traj(g, c, T, steps, pair=None):
    times = np.linspace(0.0, T, steps + 1)
    return trajectory_from_values(g, times, [c] * times.size, pair)


def test_mixed_norm_single_snapshot_is_zero():
    g = Grid(1, 16, 1.0)
    traj = _constant_traj(g, np.ones(16), 1.0, 0)
    assert mixed_norm(traj, make_admissible_pair(1, 4.0)) == 0.0


@pytest.mark.parametrize("r", [4.0, 6.0])
def test_time_constant_field_norms(r):
    g = Grid(1, 32, 2.0)
    rng = np.random.default_rng(1)
    c = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    pair = make_admissible_pair(1, r)
    T = 0.7
    traj = _constant_traj(g, c, T, 20)
    f = ComplexField(g, c)
    assert mixed_norm(traj, pair) == pytest.approx(T ** (1 / pair.p) * lr_norm(f, r), rel=1e-12)
    assert y_norm(traj, pair) == pytest.approx(l2_norm(f) + T ** (1 / pair.p) * lr_norm(f, r), rel=1e-12)


def test_energy_pair_mixed_norm_is_sup_l2():
    g = Grid(1, 32, 2.0)
    rng = np.random.default_rng(2)
    vals = rng.standard_normal((5, 32))
    traj = trajectory_from_values(g, np.arange(5) * 0.1, vals)
    assert mixed_norm(traj, make_admissible_pair(1, 2.0)) == max(l2_norm(f) for f in traj.fields)


def test_zero_trajectory_y_norm():
    g = Grid(1, 16, 1.0)
    traj = _constant_traj(g, np.zeros(16), 1.0, 4)
    assert y_norm(traj, make_admissible_pair(1, 4.0)) == 0.0


def test_empty_trajectory_raises():
    g = Grid(1, 16, 1.0)
    with pytest.raises(ValueError):
        mixed_norm(Trajectory(g), make_admissible_pair(1, 4.0))


def test_mixed_norm_of_free_packet_matches_richardson():
    g = Grid(1, 512, 8 * np.pi)
    phi = ComplexField(g, np.exp(-g.axis() ** 2))
    pair = make_admissible_pair(1, 4.0)

    def integral(dt):
        return mixed_norm(free_trajectory(phi, uniform_times(1.0, dt)), pair) ** pair.p

    # left rule is first order, so 2 I(h/2) - I(h) removes the leading error
    fine = 2 * integral(2.5e-3) - integral(5e-3)
    coarse = integral(1e-2) ** (1 / pair.p)
    assert coarse == pytest.approx(fine ** (1 / pair.p), rel=1e-2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_y_norm_monotone_under_extension(seed, steps):
    g = Grid(1, 16, 1.0)
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.uniform(0.01, 0.2, steps))
    times -= times[0]
    pair = make_admissible_pair(1, 4.0)
    traj = trajectory_from_values(g, times, rng.standard_normal((steps, 16)) * rng.uniform(0, 3, (steps, 1)), pair)
    half = traj.restricted(times[steps // 2])
    assert y_norm(half, pair) <= y_norm(traj, pair)
    ys = running_y_norms(traj, pair)
    assert np.all(np.diff(ys) >= 0)
    assert ys[-1] == pytest.approx(y_norm(traj, pair), rel=1e-12)
    # accumulators kept by append agree with the batch quadrature
    assert traj.running_lp_lr_integral == pytest.approx(space_time_norm(traj, pair.p, pair.r) ** pair.p, rel=1e-12)


def test_trajectory_time_order_and_lookup():
    g = Grid(1, 8, 1.0)
    traj = Trajectory(g)
    traj.append(0.0, ComplexField.zeros(g))
    traj.append(0.5, ComplexField.zeros(g))
    with pytest.raises(ValueError):
        traj.append(0.5, ComplexField.zeros(g))
    assert traj.index_of(0.5) == 1
    with pytest.raises(ValueError):
        traj.index_of(0.25)
