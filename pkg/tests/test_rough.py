from __future__ import annotations

import math

import numpy as np
import pytest

from rieszlab import grid, rough
from rieszlab import potentials as P
from rieszlab.sphere import ball_volume, make_symbol, project_mean_zero


@pytest.fixture(scope="module")
def bump64():
    return grid.sample("bump", resolution=64)


@pytest.fixture(scope="module")
def dipole64():
    return grid.sample("dipole", resolution=64)


def mean_zero(name, **params):
    return project_mean_zero(make_symbol(name, 2, **params))


def test_singular_integral_needs_mean_zero(bump64):
    with pytest.raises(ValueError):
        rough.rough_singular(bump64, make_symbol("one", 2), 1.0)
    with pytest.raises(ValueError):
        rough.rough_singular(bump64, mean_zero("cos1"), 2.5)
    with pytest.raises(ValueError):
        rough.rough_singular(bump64, mean_zero("cos1"), 1.0, mode="other")


def test_adding_a_constant_to_the_symbol_changes_nothing(dipole64):
    base = mean_zero("power")
    moved = project_mean_zero(base.shifted(2.5))
    a = rough.rough_singular(dipole64, base, 1.0).values
    b = rough.rough_singular(dipole64, moved, 1.0).values
    assert np.max(np.abs(a - b)) <= 1e-10 * max(np.abs(a).max(), 1.0)


def test_cancellation_modes_agree(bump64):
    sym = mean_zero("sign")
    a = rough.rough_singular(bump64, sym, 1.5, mode="subtract_ball_average").values
    b = rough.rough_singular(bump64, sym, 1.5, mode="subtract_center_value").values
    assert np.array_equal(a, b)


def test_zero_symbol_and_zero_function_give_zero(bump64):
    zero_sym = mean_zero("one")
    assert np.abs(rough.rough_singular(bump64, zero_sym, 1.0).values).max() < 1e-12
    z = grid.sample("zero", resolution=64)
    assert not rough.rough_singular(z, mean_zero("cos1"), 1.0).values.any()


def test_odd_symbol_on_even_function_is_odd(bump64):
    sym = mean_zero("cos1")
    t = rough.rough_singular(bump64, sym, 1.0).values
    # bump is even and cos1 is odd in the first coordinate, so T f flips sign
    interior = t[1:, 1:]
    assert np.allclose(interior, -interior[::-1, :], atol=1e-10 * np.abs(t).max())


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_polar_quadrature_agrees_with_the_convolution(alpha):
    f = grid.sample("bump", resolution=128)
    sym = mean_zero("cos1")
    points = [(64, 64), (80, 60), (50, 90)]
    fast = rough.rough_singular(f, sym, alpha).values
    slow = rough.rough_singular_polar(f, sym, alpha, points)
    scale = np.abs(fast).max()
    for p, v in zip(points, slow):
        assert abs(fast[p] - v) <= 0.02 * scale


def test_hypersingular_integral_is_bounded_by_the_derivative(dipole64):
    alpha = 0.5
    for name in ("cos1", "sign", "cos2"):
        sym = mean_zero(name)
        t = rough.rough_singular(dipole64, sym, alpha).values
        d = rough.nonlinear_frac_derivative(dipole64, alpha).values
        assert np.all(np.abs(t) <= sym.sup() * d * (1 + 1e-9) + 1e-12)


def test_derivative_scales_and_vanishes_on_zero(bump64):
    d = rough.nonlinear_frac_derivative(bump64, 0.6).values
    d3 = rough.nonlinear_frac_derivative(bump64.with_values(-3 * bump64.values), 0.6).values
    assert np.allclose(d3, 3 * d, rtol=1e-12)
    z = grid.sample("zero", resolution=64)
    assert not rough.nonlinear_frac_derivative(z, 0.6).values.any()
    pts = [(32, 32), (5, 9)]
    assert np.allclose(rough.nonlinear_frac_derivative(bump64, 0.6, pts), d[(32, 5), (32, 9)])
    with pytest.raises(ValueError):
        rough.nonlinear_frac_derivative(bump64, 1.0)


def test_constant_symbol_weights_average_to_one():
    h = 1 / 16
    for t in (0.25, 0.5, 1.0):
        window = int(math.ceil(t / h)) + 1
        w = rough.ball_weights(make_symbol("one", 2), "abs", t, h, window, 2)
        assert w.sum() / (ball_volume(2) * t**2) == pytest.approx(1.0, rel=1e-6)


def test_constant_symbol_maximal_is_the_ball_maximal(dipole64):
    one = make_symbol("one", 2)
    out, stack = rough.rough_maximal(dipole64, one, 1.0, per_radius=True)
    radii = rough.dyadic_radii(dipole64)
    _, ball = P.ball_fractional_maximal(dipole64, 0.0, radii)
    assert np.allclose(stack, ball, atol=1e-12)


def test_maximal_operators_on_zero_and_their_ranges(bump64):
    z = grid.sample("zero", resolution=64)
    sym = mean_zero("sign")
    assert not rough.rough_maximal(z, sym, 1.0).values.any()
    assert not rough.natural_rough_maximal(z, sym, 1.0).values.any()
    assert not rough.sharp_rough_maximal(z, sym, 1.0).values.any()
    with pytest.raises(ValueError):
        rough.rough_maximal(bump64, sym, 0.5)
    with pytest.raises(ValueError):
        rough.natural_rough_maximal(bump64, make_symbol("one", 2), 1.0)


def test_natural_maximal_is_below_rough_maximal(dipole64):
    sym = mean_zero("power")
    for alpha in (1.0, 1.5):
        nat = rough.natural_rough_maximal(dipole64, sym, alpha).values
        full = rough.rough_maximal(dipole64, sym, alpha).values
        assert np.all(nat <= full * (1 + 1e-9) + 1e-14)


def test_sharp_maximal_of_constant_vanishes_at_small_radii():
    f = grid.sample("constant", resolution=64, enforce_margin=False)
    sym = make_symbol("sign", 2)
    points = [(32, 32), (28, 36)]
    _, stack, centres, radii = rough.sharp_rough_maximal(f, sym, 1.0, points=points,
                                                         per_radius=True)
    small = [i for i, t in enumerate(radii) if t <= 0.5]
    assert np.abs(stack[small]).max() < 1e-12
    assert np.allclose(centres[small], 1.0, rtol=1e-9)


def test_sharp_and_plain_maximal_differ_by_the_lower_order_term(dipole64):
    sym = mean_zero("power")
    alpha = 1.5
    sharp, s_stack, centres, radii = rough.sharp_rough_maximal(dipole64, sym, alpha,
                                                                per_radius=True)
    _, m_stack = rough.rough_maximal(dipole64, sym, alpha, per_radius=True)
    _, ball = P.ball_fractional_maximal(dipole64, alpha - 1.0, radii)
    bound = sym.l1() / (2 * math.pi) * ball
    flat = s_stack.reshape(m_stack.shape)
    assert np.all(np.abs(m_stack - flat) <= bound + 1e-3 * m_stack.max())


@pytest.mark.parametrize("lam", [2.0])
def test_singular_integral_scales_with_dilation(lam):
    alpha = 1.5
    sym = mean_zero("cos1")
    wide = grid.sample("bump", resolution=256)
    narrow = grid.sample("bump", {"radius": 0.5}, resolution=256)
    tw = rough.rough_singular(wide, sym, alpha).values
    tn = rough.rough_singular(narrow, sym, alpha).values
    idx = np.arange(64, 192)
    doubled = 2 * idx - 128
    lhs = tn[np.ix_(idx, idx)]
    rhs = lam ** (1 - alpha) * tw[np.ix_(doubled, doubled)]
    assert np.max(np.abs(lhs - rhs)) <= 0.02 * np.max(np.abs(rhs))


def test_spherical_maximal_of_constant_at_the_centre():
    f = grid.sample("constant", {"value": 1.5}, resolution=64, enforce_margin=False)
    out, radius = rough.spherical_maximal(f, 0.0, return_radius=True)
    assert out.values[32, 32] == pytest.approx(1.5, rel=1e-12)
    assert radius[32, 32] > 0


def test_spherical_maximal_zero_and_range(bump64):
    z = grid.sample("zero", resolution=64)
    assert not rough.spherical_maximal(z, 0.5).values.any()
    with pytest.raises(ValueError):
        rough.spherical_maximal(bump64, 1.0)
    assert rough.spherical_maximal(bump64, 0.5).values.min() >= 0


def test_spherical_maximal_dominates_small_sphere_averages(bump64):
    out = rough.spherical_maximal(bump64, 0.0).values
    assert np.all(out >= bump64.values * (1 - 0.05))
