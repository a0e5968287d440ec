import numpy as np
from hypothesis import given, settings, strategies as st

from vortexlab.numerics import (ShapeCubic, cumulative_trapezoid_from_right, derivative,
                                first_difference, gauss_legendre_cumulative, graded_grid,
                                interp_in_time, layered_spacing, loglog_fit, max_neighbour_ratio,
                                second_difference, solve_tridiagonal, trapezoid_weights)


def test_tridiagonal_matches_dense_solve():
    rng = np.random.default_rng(0)
    n = 40
    lower, upper = rng.normal(size=n), rng.normal(size=n)
    diag = 4 + rng.random(n)
    rhs = rng.normal(size=n)
    M = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    assert np.allclose(solve_tridiagonal(lower, diag, upper, rhs), np.linalg.solve(M, rhs), atol=1e-12)


def test_derivative_exact_for_quartics_on_nonuniform_grid():
    x = np.sort(np.random.default_rng(1).random(30)) * 3
    y = x**4 - 2 * x**3 + x
    assert np.allclose(derivative(x, y), 4 * x**3 - 6 * x**2 + 1, atol=1e-9)


def test_three_point_differences_exact_for_quadratics():
    x = np.cumsum(np.linspace(0.1, 0.3, 20))
    y = 3 * x**2 - x
    assert np.allclose(first_difference(x, y), 6 * x[1:-1] - 1)
    assert np.allclose(second_difference(x, y), 6.0)


def test_gauss_legendre_cumulative_polynomial():
    nodes = np.linspace(0, 2, 5)
    got = gauss_legendre_cumulative(lambda s: s**5, nodes)
    assert np.allclose(got, nodes**6 / 6, atol=1e-13)


def test_trapezoid_helpers():
    x = np.linspace(0, 1, 11)
    assert np.isclose(np.sum(trapezoid_weights(x) * x), 0.5)
    tail = cumulative_trapezoid_from_right(np.ones_like(x), x)
    assert np.allclose(tail, 1 - x)


def test_time_interpolation_exact_for_cubics():
    t = np.linspace(0, 1, 9)
    vals = t**3 - t
    assert np.isclose(interp_in_time(t, vals, 0.37), 0.37**3 - 0.37, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 5), min_size=6, max_size=25))
def test_shape_cubic_preserves_strictly_monotone_data(increments):
    # plateaus count as extrema for this limiter, so the data are strictly increasing
    y = np.cumsum(increments)
    x = np.linspace(0, 1, y.size)
    q = np.linspace(0, 1, 400)
    vals = ShapeCubic(x, y)(q)
    assert np.all(np.diff(vals) >= -1e-9 * (1 + np.abs(y).max()))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(0.5, 3.0), st.floats(1.02, 1.1))
def test_graded_grid_respects_neighbour_ratio(fine, length, ratio):
    spacing = layered_spacing(fine, 0.05, [(0.0, 0.1)], ratio - 1.0)
    x = graded_grid(0.0, length, spacing, ratio)
    assert x[0] == 0.0 and np.isclose(x[-1], length)
    assert np.all(np.diff(x) > 0)
    assert max_neighbour_ratio(x) <= ratio * (1 + 2e-2)


def test_loglog_fit_recovers_power_law():
    eps = np.array([1e-2, 1e-3, 1e-4])
    fit = loglog_fit(eps, 3 * eps**0.5)
    assert np.isclose(fit.slope, 0.5) and np.isclose(fit.r2, 1.0)
    assert np.isclose(np.exp(fit.intercept), 3.0)
