from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszlab import dyadic, grid, sparse
from rieszlab import potentials as P
from rieszlab.grid import Box


def unit_grid(values):
    values = np.asarray(values, dtype=float)
    return grid.GridFunction(Box((0.0,) * values.ndim, float(values.shape[0])),
                             values.shape[0], values)


def test_riesz_constants():
    assert P.riesz_constant(2, 1.0) == pytest.approx(1 / (2 * math.pi))
    assert P.riesz_constant(3, 2.0) == pytest.approx(1 / (4 * math.pi))
    with pytest.raises(ValueError):
        P.riesz_constant(2, 2.0)


def test_fractional_parameters():
    fp = P.FracParams.from_r(2, 1.0, 1.5)
    assert fp.s == pytest.approx(1.2)
    assert P.FracParams(3, 1.0).sobolev_exponent(1.5) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        P.FracParams(2, 1.0, 2.0)
    with pytest.raises(ValueError):
        P.FracParams(2, 0.0)
    with pytest.raises(ValueError):
        P.FracParams(2, 1.0, 0.5)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_potential_of_unit_ball_at_its_centre(alpha):
    f = grid.sample("ball_indicator", resolution=256)
    val = P.riesz_potential(f, alpha).values[f.index_of((0.0, 0.0))]
    exact = P.riesz_constant(2, alpha) * 2 * math.pi / alpha
    assert val == pytest.approx(exact, rel=0.01)


def test_potential_of_unit_ball_in_three_dimensions():
    f = grid.sample("ball_indicator", resolution=64, n=3)
    val = P.riesz_potential(f, 1.0).values[f.index_of((0.0, 0.0, 0.0))]
    exact = P.riesz_constant(3, 1.0) * 4 * math.pi / 1.0
    assert val == pytest.approx(exact, rel=0.02)


def test_potential_of_zero_is_zero():
    f = grid.sample("zero", resolution=32)
    assert not P.riesz_potential(f, 1.0).values.any()


def test_direct_sums_match_the_fft():
    f = grid.sample("dipole", resolution=64)
    points = [(32, 32), (10, 50), (0, 0), (63, 17)]
    fast = P.riesz_potential(f, 0.7)
    direct = P.riesz_potential(f, 0.7, method="direct", points=points)
    scale = np.abs(fast.values).max()
    for p, v in zip(points, direct):
        assert abs(fast.values[p] - v) <= 1e-8 * scale


def test_potential_is_linear_and_positive():
    f = grid.sample("bump", resolution=64)
    g = grid.sample("tensor_bump", {"radius": 0.5}, resolution=64)
    combo = f.with_values(2 * f.values - 3 * g.values)
    lhs = P.riesz_potential(combo, 1.2).values
    rhs = 2 * P.riesz_potential(f, 1.2).values - 3 * P.riesz_potential(g, 1.2).values
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert P.riesz_potential(f, 1.2).values.min() >= 0


def test_unnormalized_weights_drop_the_constant():
    f = grid.sample("bump", resolution=64)
    a = P.riesz_potential(f, 1.0).values
    b = P.riesz_potential(f, 1.0, normalized=False).values
    assert np.allclose(a, P.riesz_constant(2, 1.0) * b)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_origin_weight_is_the_hat_integral(alpha):
    from scipy import integrate

    h = 0.125

    def along(t):
        reach = h / max(math.cos(t), math.sin(t))
        return integrate.quad(
            lambda r: (1 - r * math.cos(t) / h) * (1 - r * math.sin(t) / h) * r ** (alpha - 1),
            0, reach, epsabs=0, epsrel=1e-12)[0]

    exact = 4 * integrate.quad(along, 0, math.pi / 2, points=[math.pi / 4], epsabs=0,
                               epsrel=1e-12)[0]
    w = P.riesz_weights(2, alpha, h, 4, normalized=False)
    assert w[4, 4] == pytest.approx(exact, rel=1e-6)
    lo, hi = P.self_cell_bracket(2, alpha, h)
    assert 0 < lo < hi


@pytest.mark.parametrize("gamma,beta", [(0.25, 0.25), (0.5, 0.5), (0.5, 1.0)])
def test_composition_differs_from_sum_order_only_by_box_truncation(gamma, beta):
    f = grid.sample("bump", resolution=256)
    lhs = P.riesz_potential(P.riesz_potential(f, beta), gamma).values
    rhs = P.riesz_potential(f, gamma + beta).values
    mass = float(f.values.sum()) * f.h**2
    r = np.linalg.norm(f.points(), axis=-1)
    gap = rhs - lhs
    for x in (0.0, 0.5, 1.0):
        ring = np.abs(r - x) <= f.h
        bound = P.composition_truncation_bound(2, gamma, beta, mass, x, 2.0, 1.0)
        assert gap[ring].max() <= bound + 1e-3 * rhs.max()
        assert gap[ring].min() >= -1e-3 * rhs.max()


def test_composition_within_two_percent():
    f = grid.sample("bump", resolution=256)
    lhs = P.riesz_potential(P.riesz_potential(f, 0.25), 0.25).values
    rhs = P.riesz_potential(f, 0.5).values
    assert np.linalg.norm(lhs - rhs) <= 0.02 * np.linalg.norm(rhs)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_potential_of_gradient_scales_with_dilation(alpha):
    wide = grid.gradient(grid.sample("bump", resolution=256)).magnitude()
    narrow = grid.gradient(grid.sample("bump", {"radius": 0.5}, resolution=256)).magnitude()
    i_wide = P.riesz_potential(wide, alpha).values
    i_narrow = P.riesz_potential(narrow, alpha).values
    idx = np.arange(64, 192)
    doubled = 2 * idx - 128
    lhs = i_narrow[np.ix_(idx, idx)]
    rhs = 2 ** (1 - alpha) * i_wide[np.ix_(doubled, doubled)]
    assert np.max(np.abs(lhs - rhs)) <= 0.01 * np.max(rhs)


def test_dyadic_sum_of_zero_and_of_single_level():
    z = grid.sample("zero", resolution=16)
    assert not P.dyadic_fractional(z, 1.0, (0, 0)).values.any()
    f = unit_grid(np.full((16, 16), 3.0))
    out = P.dyadic_fractional(f, 0.5, (0, 0), levels=(2, 2)).values
    assert np.allclose(out, 2.0 ** (2 * 0.5) * 3.0)


def test_sparse_sum_counts_repeated_cubes():
    f = unit_grid(np.ones((16, 16)))
    q = dyadic.dyadic_cube((0, 0), 2, (0, 0))
    once = P.sparse_sum(f, 1.0, 1.0, [q])
    twice = P.sparse_sum(f, 1.0, 1.0, [q, q])
    assert once[0, 0] == 4.0 and twice[0, 0] == 8.0 and once[8, 8] == 0.0


def test_sparse_sum_is_below_the_dyadic_sum():
    f = grid.sample("dipole", resolution=128)
    fam = sparse.build_sparse_family(f, 1.0, 1.2, (1, 0))
    lo = dyadic.level_range(f.h, f.box.side)[0]
    full = P.dyadic_fractional(f, 1.0, (1, 0), 1.2, levels=(lo, fam.clamp["top_level"])).values
    part = P.sparse_fractional(f, 1.0, 1.2, fam).values
    assert np.all(part <= full * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dyadic_operators_are_monotone(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16))
    b = a + rng.random((16, 16))
    fa, fb = unit_grid(a), unit_grid(b)
    assert np.all(P.dyadic_fractional(fa, 0.7, (1, 1)).values
                  <= P.dyadic_fractional(fb, 0.7, (1, 1)).values + 1e-12)
    assert np.all(P.fractional_maximal(fa, 0.7).values <= P.fractional_maximal(fb, 0.7).values + 1e-12)


def test_maximal_function_of_constant():
    f = grid.sample("constant", {"value": 2.0}, resolution=32, enforce_margin=False)
    assert np.allclose(P.fractional_maximal(f).values, 2.0)
    best, side = P.fractional_maximal(grid.sample("bump", resolution=32), 1.0, return_argmax=True)
    assert np.all(side[best.values > 0] > 0)


@pytest.mark.parametrize("alpha,s", [(0.5, 1.5), (1.0, 1.2), (0.25, 3.0)])
def test_power_maximal_function_identity(alpha, s):
    f = grid.sample("dipole", resolution=64)
    lhs = P.fractional_maximal(f, alpha, s).values
    powered = f.with_values(np.abs(f.values) ** s)
    rhs = P.fractional_maximal(powered, alpha * s).values ** (1 / s)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(lhs)


def test_lorentz_maximal_of_constant():
    f = grid.sample("constant", resolution=32, enforce_margin=False)
    out = P.lorentz_maximal(f, 2.0, 1.0).values
    assert np.allclose(out, 2.0)
    assert np.allclose(P.lorentz_maximal(f, 3.0, 3.0).values, 1.0)


def test_diagonal_lorentz_maximal_is_the_power_maximal():
    f = grid.sample("bump", resolution=32)
    a = P.lorentz_maximal(f, 2.5, 2.5).values
    b = P.fractional_maximal(f, 0.0, 2.5).values
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_lorentz_maximal_orders_in_second_index():
    f = grid.sample("dipole", resolution=32)
    assert np.all(P.lorentz_maximal(f, 2.0, 2.0).values
                  <= P.lorentz_maximal(f, 2.0, 1.0).values * (1 + 1e-12))


def test_ball_maximal_of_constant_inside_the_box():
    f = grid.sample("constant", resolution=64, enforce_margin=False)
    best, stack = P.ball_fractional_maximal(f, 0.0, [0.25, 0.5])
    assert stack[:, 32, 32] == pytest.approx([1.0, 1.0], rel=1e-3)
