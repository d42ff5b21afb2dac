import math

import numpy as np
import pytest

from marcus_snls.grid import ComplexField, Grid, l2_norm, make_admissible_pair, trajectory_from_values
from marcus_snls.noise import FiniteAtoms, SamplePath, sample_path
from marcus_snls.propagator import uniform_times
from marcus_snls.strichartz import (
    XiProfile,
    det_inhomogeneous_probe,
    stochastic_convolution,
    stochastic_strichartz_probe,
)

PAIR = make_admissible_pair(1, 4.0)
ENERGY = make_admissible_pair(1, 2.0)


def forcing(grid, T=1.0, dt=1e-2, scale=1.0):
    x = grid.axis()
    times = uniform_times(T, dt)
    vals = [scale * np.exp(-((x - 2 * t) ** 2)) * np.cos(3 * t) for t in times]
    return trajectory_from_values(grid, times, vals)


def test_det_probe_is_finite_and_scale_invariant(grid1):
    a = det_inhomogeneous_probe(forcing(grid1), PAIR, PAIR)
    b = det_inhomogeneous_probe(forcing(grid1, scale=-4.2), PAIR, PAIR)
    assert np.isfinite(a.ratio_lp_lr) and a.ratio_lp_lr > 0
    assert b.ratio_lp_lr == pytest.approx(a.ratio_lp_lr, rel=1e-12)
    assert b.ratio_linf_l2 == pytest.approx(a.ratio_linf_l2, rel=1e-12)


def test_det_probe_is_stable_under_refinement(grid1):
    coarse = det_inhomogeneous_probe(forcing(grid1, dt=1e-2), PAIR, PAIR)
    fine = det_inhomogeneous_probe(forcing(grid1, dt=5e-3), PAIR, PAIR)
    assert fine.ratio_lp_lr == pytest.approx(coarse.ratio_lp_lr, rel=0.05)


@pytest.mark.parametrize("rule", ["left", "trapezoid"])
def test_energy_pair_ratio_is_at_most_one(grid1, rule):
    # ||int S f||_2 <= int ||f||_2, the dual norm of (inf, 2) is L^1 L^2
    res = det_inhomogeneous_probe(forcing(grid1), ENERGY, ENERGY, rule)
    assert res.ratio_linf_l2 <= 1.0 + 1e-12


def test_det_probe_rejects_zero_forcing(grid1):
    with pytest.raises(ValueError, match="degenerate"):
        det_inhomogeneous_probe(forcing(grid1, scale=0.0), PAIR, PAIR)


@pytest.fixture
def sym():
    return FiniteAtoms(np.array([[0.5], [-0.5]]), np.array([2.5, 2.5]))


@pytest.fixture
def asym():
    return FiniteAtoms(np.array([[0.5], [-0.3]]), np.array([3.0, 2.0]))


def test_xi_profile_validation(grid1):
    with pytest.raises(ValueError):
        XiProfile(ComplexField.zeros(grid1), modulation="cubic")


def test_zero_profile_gives_zero_convolution(grid1, asym):
    xi = XiProfile(ComplexField.zeros(grid1))
    X = stochastic_convolution(sample_path(asym, 1.0, seed=0), xi, asym, 1.0, 0.1)
    assert all(np.all(f.values == 0) for f in X.fields)


def test_empty_path_leaves_only_the_compensator(grid1, asym):
    A = 0.6 + 0.1j
    xi = XiProfile(ComplexField(grid1, np.full(grid1.shape, A)), scale=2.0)
    X = stochastic_convolution(SamplePath.empty(1.0), xi, asym, 1.0, 0.125)
    mu = 0.5 * 3.0 - 0.3 * 2.0
    for t, f in zip(X.times, X.fields):
        np.testing.assert_allclose(f.values, -t * mu * 2.0 * A, atol=1e-14)


def test_three_events_by_hand(grid1, sym):
    # symmetric atoms and linear modulation: no compensator, only free waves
    k = 0.5
    x = grid1.axis()
    xi = XiProfile(ComplexField(grid1, np.exp(1j * k * x)))
    path = SamplePath(1.0, [0.05, 0.31, 0.8], [[0.5], [-0.5], [0.5]])
    X = stochastic_convolution(path, xi, sym, 1.0, 0.1)
    for t, f in zip(X.times, X.fields):
        amp = sum(z[0] * np.exp(-1j * k * k * (t - s)) for s, z in zip(path.times, path.marks) if s <= t)
        np.testing.assert_allclose(f.values, amp * np.exp(1j * k * x), atol=1e-13)


def test_quadratic_modulation_weights(grid1):
    xi = XiProfile(ComplexField.zeros(grid1), modulation="quadratic")
    np.testing.assert_allclose(xi.weights(np.array([[0.3, 0.4], [0.0, 1.0]])), [0.25, 1.0])


def test_probe_with_zero_profile_has_zero_ratio(grid1, sym):
    rep = stochastic_strichartz_probe(sym, XiProfile(ComplexField.zeros(grid1)), PAIR, 4.0, 10, seed=0)
    assert rep.ratio == 0.0 and rep.lhs == 0.0


def test_probe_argument_checks(grid1, sym):
    xi = XiProfile(ComplexField.zeros(grid1))
    with pytest.raises(ValueError):
        stochastic_strichartz_probe(sym, xi, PAIR, 1.5, 20, seed=0)
    with pytest.raises(ValueError):
        stochastic_strichartz_probe(sym, xi, PAIR, 4.0, 5, seed=0)


@pytest.mark.parametrize("q", [2.0, 4.0])
def test_probe_ratio_is_homogeneous_in_xi(grid1, asym, q):
    profile = ComplexField(grid1, np.exp(-(grid1.axis() ** 2)))
    xi = XiProfile(profile)
    a = stochastic_strichartz_probe(asym, xi, PAIR, q, 20, seed=3, dt=5e-2)
    b = stochastic_strichartz_probe(asym, xi.scaled(1.7), PAIR, q, 20, seed=3, dt=5e-2)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)
    assert b.lhs == pytest.approx(1.7**q * a.lhs, rel=1e-12)


def test_probe_json_is_serializable(grid1, asym):
    import json

    xi = XiProfile(ComplexField(grid1, np.exp(-(grid1.axis() ** 2))))
    rep = stochastic_strichartz_probe(asym, xi, ENERGY, 2.0, 10, seed=1, dt=0.1)
    d = json.loads(json.dumps(rep.to_json()))
    assert d["pair"][0] == "inf" and d["trials"] == 10


def test_terminal_second_moment_matches_isometry(grid1, asym):
    # E ||X_T||^2 = T int ||xi||^2 nu plus the squared quadrature error of the
    # left-endpoint compensator, which is O(dt^2) and covered by dt * (mu ||xi||)^2
    xi = XiProfile(ComplexField(grid1, np.exp(-(grid1.axis() ** 2))))
    dt = 1e-2
    rep = stochastic_strichartz_probe(asym, xi, PAIR, 2.0, 400, seed=2, dt=dt)
    mu_part = (asym.first_moment()[0] * l2_norm(xi.profile)) ** 2
    bias = dt * mu_part
    assert abs(rep.terminal_l2_second_moment - rep.isometry_prediction) <= 3 * rep.isometry_stderr + bias
