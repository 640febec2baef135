import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quenchlab.errors import ConvergenceError
from quenchlab.numerics import (
    adaptive_gauss_legendre,
    bracketed_newton,
    gauss_legendre,
    log_grid,
    loglog_fit,
    panel_quadrature,
)


@given(st.floats(-5, 5), st.floats(0.1, 3))
def test_newton_finds_cubic_root(r, k):
    f = lambda x: k * (x - r) ** 3 + (x - r)
    df = lambda x: 3 * k * (x - r) ** 2 + 1
    x, res = bracketed_newton(f, df, -10.0, 10.0)
    assert abs(x - r) < 1e-12
    assert res < 1e-12


def test_newton_survives_flat_derivative():
    # df = 0 at the start point; bisection takes over
    x, _ = bracketed_newton(lambda x: x**3 - 1e-3, lambda x: 3 * x**2, -1.0, 1.0, x0=0.0)
    assert x == pytest.approx(0.1, abs=1e-12)


def test_newton_requires_bracket():
    with pytest.raises(ConvergenceError):
        bracketed_newton(lambda x: x * x + 1, lambda x: 2 * x, -1.0, 1.0)


def test_gauss_legendre_exact_for_polynomials():
    nodes, weights = gauss_legendre(8)
    for deg in range(16):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert weights @ nodes**deg == pytest.approx(exact, abs=1e-14)


def test_panel_quadrature_sine():
    assert panel_quadrature(np.sin, np.linspace(0, math.pi, 9)) == pytest.approx(2.0, abs=1e-14)


def test_adaptive_quadrature_sharp_peak():
    val, change = adaptive_gauss_legendre(lambda x: 1.0 / (1e-4 + x * x), -1.0, 1.0)
    assert val == pytest.approx(2 * math.atan(1 / 1e-2) / 1e-2, rel=1e-10)
    assert change < 1e-6


@given(st.floats(-4, 4), st.floats(-3, 3))
def test_loglog_fit_recovers_power_law(p, logc):
    x = np.geomspace(1, 1e4, 30)
    fit = loglog_fit(x, math.exp(logc) * x**p)
    assert fit.exponent == pytest.approx(p, abs=1e-10)
    assert fit.intercept == pytest.approx(logc, abs=1e-9)


def test_loglog_fit_drops_nonpositive():
    fit = loglog_fit([1, 2, 3, 4], [1, 0, 1 / 9, -1])
    assert fit.n_points == 2
    assert fit.exponent == pytest.approx(-2.0)


@given(st.integers(1, 1000), st.integers(0, 10_000), st.integers(2, 80))
def test_log_grid_is_sorted_and_bounded(lo, span, num):
    g = log_grid(lo, lo + span, num)
    assert np.all(np.diff(g) > 0)
    assert g[0] >= lo and g[-1] <= lo + span
