import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marcus_snls.marcus import (
    BOUNDS,
    G,
    H,
    JumpBoundConstants,
    _second_order_rest,
    jump_phase,
    marcus_jump,
    marcus_jump_ode,
    verify_jump_bounds,
    verify_marcus_flow,
)
from marcus_snls.noise import Constant, NoiseCoefficients, Rational, Saturating

FAMILIES = {
    "constant": NoiseCoefficients([Constant(1.0)]),
    "rational": NoiseCoefficients([Rational(1.0, 1.0)]),
    "saturating": NoiseCoefficients([Saturating(1.0)]),
    "mixed_m2": NoiseCoefficients([Rational(-0.8, 3.0), Saturating(0.6)]),
}

complexes = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


def test_zero_mark_is_identity():
    co = FAMILIES["rational"]
    y = np.array([1 + 2j, -0.3j, 0])
    out = marcus_jump(y, np.zeros(1), co)
    assert np.array_equal(out.value, y)
    assert np.array_equal(marcus_jump_ode(y, np.zeros(1), co), y)


def test_half_turn():
    co = NoiseCoefficients([Constant(1.0)])
    out = marcus_jump(1.0 + 0j, np.array([math.pi]), co)
    assert out.value == pytest.approx(-1.0, abs=1e-15)
    assert out.phase == pytest.approx(math.pi)
    ode = marcus_jump_ode(1.0 + 0j, np.array([math.pi]), co, steps=2048)
    assert ode == pytest.approx(-1.0, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(complexes, st.floats(-1, 1), st.sampled_from(sorted(FAMILIES)))
def test_modulus_is_preserved(y, z1, name):
    co = FAMILIES[name]
    z = np.full(co.count, z1 / math.sqrt(co.count))
    out = marcus_jump(y, z, co)
    assert abs(abs(out.value) - abs(y)) <= 1e-14 * max(1.0, abs(y))


def test_closed_form_matches_ode_oracle():
    rep = verify_marcus_flow(10_000, radius=10.0, seed=1)
    assert rep.max_abs_error <= 1e-10
    assert rep.max_modulus_drift <= 1e-10
    assert rep.violations == 0


def test_ode_oracle_is_fourth_order():
    co = FAMILIES["saturating"]
    y, z = 2.0 - 1.0j, np.array([0.9])
    exact = marcus_jump(y, z, co).value
    e16 = abs(marcus_jump_ode(y, z, co, 16) - exact)
    e32 = abs(marcus_jump_ode(y, z, co, 32) - exact)
    assert e16 / e32 == pytest.approx(16.0, rel=0.1)


def test_ode_needs_enough_steps():
    with pytest.raises(ValueError):
        marcus_jump_ode(1.0, np.array([0.5]), FAMILIES["constant"], steps=8)


def test_mark_dimension_checked():
    with pytest.raises(ValueError):
        jump_phase(np.array([1.0]), np.array([0.1, 0.2]), FAMILIES["rational"])


@settings(max_examples=100, deadline=None)
@given(complexes, st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-3, 3))
def test_constant_phases_add_along_a_ray(y, z1, z2, c):
    co = NoiseCoefficients([Constant(c)])
    once = marcus_jump(y, np.array([z1 + z2]), co).value
    twice = marcus_jump(marcus_jump(y, np.array([z1]), co).value, np.array([z2]), co).value
    assert abs(once - twice) <= 1e-14 * max(1.0, abs(y))


def test_g_h_vanish_at_zero_mark():
    y = np.array([3 - 1j, 0.1j])
    for co in FAMILIES.values():
        z = np.zeros(co.count)
        assert np.all(G(z, y, co) == 0) and np.all(H(z, y, co) == 0)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_g_h_definitions(name):
    co = FAMILIES[name]
    rng = np.random.default_rng(4)
    y = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    z = rng.uniform(-1, 1, (50, co.count)) / co.count
    jump = marcus_jump(y, z, co).value
    np.testing.assert_allclose(G(z, y, co), jump - y, atol=1e-14)
    gsum = sum(z[:, j] * co.g(j, y) for j in range(co.count))
    np.testing.assert_allclose(H(z, y, co), jump - y + 1j * gsum, atol=1e-13)


@pytest.mark.parametrize("a", [1e-8, 1e-3, 0.05, 0.0999, 0.1, 0.2, -0.07, 1.3])
def test_second_order_rest_is_accurate_across_the_series_switch(a):
    # the Taylor tail has no cancellation for |a| < 2, so it is a clean reference
    ref = sum((-1j * a) ** k / math.factorial(k) for k in range(2, 40))
    got = complex(_second_order_rest(np.array(a)))
    assert abs(got - ref) <= 1e-14 * abs(ref)


def test_constants_follow_documented_formulas():
    co = FAMILIES["mixed_m2"]
    c = JumpBoundConstants.for_coefficients(co)
    s = math.sqrt(2) * co.L1
    assert c.C1 == pytest.approx(s * math.exp(s)) and c.C2 == c.C1
    M, D = co.sup_abs, co.sup_weighted_derivative
    assert c.C3 == pytest.approx(M * M) and c.C4 == pytest.approx(2 * (M * M / 2 + M * D))


def test_zero_trials_gives_empty_report():
    rep = verify_jump_bounds(FAMILIES["constant"], 0)
    assert rep.trials == 0 and rep.total_violations == 0 and rep.max_ratio == {}


def test_equal_points_have_zero_lipschitz_difference():
    co = FAMILIES["rational"]
    y = np.array([1.5 - 2j, 0.0, 7j])
    z = np.array([[0.3], [0.9], [-1.0]])
    assert np.all(G(z, y, co) - G(z, y.copy(), co) == 0)
    assert np.all(H(z, y, co) - H(z, y.copy(), co) == 0)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_lemma_bounds_certified(name):
    rep = verify_jump_bounds(FAMILIES[name], 100_000, radius=10.0, seed=2)
    assert set(rep.max_ratio) == set(BOUNDS)
    assert rep.total_violations == 0, rep.max_ratio


def test_h_is_quadratically_small():
    co = FAMILIES["rational"]
    y = np.array([2.0 + 1j])
    vals = [abs(H(np.array([z]), y, co)[0]) for z in (1e-2, 1e-3)]
    assert vals[0] / vals[1] == pytest.approx(100.0, rel=1e-3)
