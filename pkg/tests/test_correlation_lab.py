import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchlab.correlation_lab import (
    DensityApprox,
    Observable,
    constant_observable,
    correlation_curve,
    correlation_future,
    correlation_past,
    correlations_over_omega,
    decay_fit,
    deterministic_rate,
    equivariance_residual,
    equivariant_density,
    identity_observable,
    quenched_rate,
    sign_observable,
    square_observable,
)
from quenchlab.errors import ValidationError, WindowRangeError
from quenchlab.map_families import DEFAULT_GH, GHParams
from quenchlab.random_cocycle import ParamDistribution, constant_window, sample_omega, shift

PAIR = ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.5)])
X = identity_observable()


def doubling_autocorrelation(n):
    """Exact E[x * T^n x] for the odd doubling extension under normalised Lebesgue on [-1, 1].

    T^n is affine with slope 2^n on each of the 2^(n+1) dyadic intervals of length 2^-n;
    every piece is integrated exactly in rational arithmetic.
    """
    total = Fraction(0)
    pieces = 2 ** (n + 1)
    width = Fraction(2, pieces)
    for k in range(pieces):
        a = Fraction(-1) + k * width
        b = a + width
        mid = (a + b) / 2
        y = mid
        for _ in range(n):
            y = 2 * y - 1 if y > 0 else 2 * y + 1
        slope = Fraction(2**n)
        c = y - slope * mid  # T^n(x) = slope x + c on this piece
        total += slope * (b**3 - a**3) / 3 + c * (b**2 - a**2) / 2
    return total / 2


class TestObservables:
    def test_defaults_satisfy_declared_regularity(self):
        for obs in (identity_observable(), sign_observable(), square_observable(), constant_observable(3.0)):
            assert obs.verify()

    def test_false_claim_detected(self):
        lying = Observable("x^2", lambda x: x * x, "holder", 1.0, 0.5)
        assert not lying.verify()

    def test_invalid_kind(self):
        with pytest.raises(ValidationError):
            Observable("f", lambda x: x, "smooth")
        with pytest.raises(ValidationError):
            Observable("f", lambda x: x, "holder", eta=1.5)

    def test_sign_observable_is_centred(self):
        assert sign_observable()(np.array([-0.5, 0.0, 0.5])).tolist() == [-0.5, 0.5, 0.5]


class TestDoublingOracle:
    def test_oracle_closed_form(self):
        for n in range(8):
            assert doubling_autocorrelation(n) == Fraction(1, 3 * 2**n)

    @pytest.mark.parametrize("n", range(11))
    def test_quadrature_matches_oracle(self, n):
        w = constant_window(1.0, 0, 12, sanity=True)
        est = correlation_future("pik", w, n, X, X)
        exact = float(doubling_autocorrelation(n))
        assert est.value == pytest.approx(exact, rel=5e-4)


@pytest.fixture(scope="module")
def window():
    return sample_omega(PAIR, 20, 20, 5)


class TestCorrelationIdentities:
    def test_constant_observable(self, window):
        est = correlation_future("pik", window, 4, constant_observable(2.5), X, panels=2**10)
        assert abs(est.value) < 1e-12

    def test_variance_at_lag_zero(self, window):
        assert correlation_future("pik", window, 0, X, X, panels=2**10).value == pytest.approx(1 / 3, rel=1e-12)

    def test_centering(self, window):
        a = correlation_future("pik", window, 3, sign_observable(), X, panels=2**12)
        b = correlation_future("pik", window, 3, sign_observable().plus(7.0), X, panels=2**12)
        assert a.value == pytest.approx(b.value, abs=1e-10)

    @settings(max_examples=25)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 5))
    def test_bilinearity(self, a, b, n):
        w = sample_omega(PAIR, 0, 8, 3)
        f, g = sign_observable(), square_observable()
        kw = dict(panels=2**10, max_panels=2**10)
        lhs = correlation_future("pik", w, n, f.combine(a, g, b), X, **kw).value
        rhs = a * correlation_future("pik", w, n, f, X, **kw).value + b * correlation_future("pik", w, n, g, X, **kw).value
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_past_is_shifted_future(self, window):
        p = correlation_past("pik", window, 4, sign_observable(), X, panels=2**12)
        f = correlation_future("pik", shift(window, -4), 4, sign_observable(), X, panels=2**12)
        assert p.value == f.value

    def test_mc_agrees_with_quadrature(self, window):
        q = correlation_future("pik", window, 3, sign_observable(), X, panels=2**14)
        m = correlation_future("pik", window, 3, sign_observable(), X, method="mc", samples=4 * 10**5, seed=2)
        assert abs(q.value - m.value) < 4 * m.error + 1e-4

    def test_curve_matches_pointwise(self, window):
        v, e = correlation_curve("pik", window, 5, sign_observable(), X, samples=2 * 10**5, seed=4)
        for n in (0, 2, 5):
            q = correlation_future("pik", window, n, sign_observable(), X, panels=2**14).value
            assert abs(v[n] - q) < 5 * e[n] + 1e-4

    def test_past_curve(self, window):
        v, _ = correlation_curve("pik", window, 3, sign_observable(), X, samples=10**5, seed=4, past=True)
        assert v.shape == (4,)

    def test_window_guard(self):
        w = sample_omega(PAIR, 0, 3, 0)
        with pytest.raises(WindowRangeError):
            correlation_future("pik", w, 6, X, X)
        with pytest.raises(WindowRangeError):
            correlation_past("pik", w, 2, X, X)
        with pytest.raises(ValidationError):
            correlation_future("pik", w, 1, X, X, method="magic")

    def test_series_over_omega(self, tmp_path):
        s = correlations_over_omega("pik", PAIR, 6, 3, 5 * 10**4, 1)
        assert s.per_omega.shape == (3, 7)
        s.to_csv(tmp_path / "c.csv")
        head = (tmp_path / "c.csv").read_text().splitlines()[0]
        assert head == "n,mean_abs_cor,stderr,per_omega_min,per_omega_max"


class TestDensity:
    def test_depth_zero_is_uniform(self):
        d = equivariant_density("gh", constant_window(DEFAULT_GH, 5, 5), 0, bins=64, samples=64 * 1000)
        np.testing.assert_allclose(d.masses, 1 / 64, atol=1e-12)

    def test_mass_validation(self):
        with pytest.raises(ValidationError):
            DensityApprox(np.linspace(-1, 1, 3), np.array([0.3, 0.3]), 0, 0, 0, 0)

    def test_inverse_cdf_reproduces_masses(self):
        rng = np.random.default_rng(0)
        m = rng.dirichlet(np.ones(16))
        d = DensityApprox(np.linspace(-1, 1, 17), m, 0, 0, 0, 0)
        x = d.inverse_cdf((np.arange(10**5) + 0.5) / 10**5)
        h, _ = np.histogram(x, bins=d.edges)
        np.testing.assert_allclose(h / 10**5, m, atol=2e-5)

    def test_csv(self, tmp_path):
        DensityApprox.lebesgue(4).to_csv(tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "bin_left,bin_right,mass,depth"

    def test_residual_shrinks_with_samples(self):
        w = constant_window(DEFAULT_GH, 30, 5)
        res = []
        for n in (2 * 10**4, 2 * 10**5):
            d = equivariant_density("gh", w, 20, bins=128, samples=n)
            res.append(equivariance_residual("gh", w, d, samples=n))
        assert res[1] < res[0] / 2

    @pytest.mark.parametrize(
        "params, peaks",
        [(DEFAULT_GH, False), (GHParams(1.8, 0.7, 1.0, 1.0), True)],
    )
    def test_neutral_point_profile(self, params, peaks):
        # near -1 the density behaves like (1 + x)^(1/k - gamma): it blows up when k gamma > 1
        # and vanishes when k gamma < 1; near +1 (fed from the singular point) it always vanishes
        d = equivariant_density("gh", constant_window(params, 45, 5), 40, bins=256, samples=4 * 10**5)
        rho = d.density
        bulk = rho[118:138].mean()
        left = rho[2:6].mean()
        right = rho[-4:].mean()
        assert (left > bulk) == peaks
        assert right < 0.5 * bulk

    def test_cauchy_flag(self):
        w = constant_window(DEFAULT_GH, 45, 5)
        d = equivariant_density("gh", w, 40, bins=64, samples=10**5, cauchy_depth=30, tol=1e-9)
        assert d.cauchy_increment is not None and d.flagged

    def test_pullback_range(self):
        with pytest.raises(WindowRangeError):
            equivariant_density("gh", constant_window(DEFAULT_GH, 5, 5), 10)


class TestDecayFit:
    def test_power_law_identity(self):
        n = np.arange(1, 200)
        fit = decay_fit(n, n ** -2.0)
        assert abs(fit.exponent + 2) < 1e-12
        assert not fit.super_polynomial
        assert abs(fit.envelope_exponent + 2) < 1e-12

    def test_exponential_flagged(self):
        n = np.arange(1, 60)
        assert decay_fit(n, 2.0 ** -n).super_polynomial

    @given(st.floats(-4, -0.3), st.floats(0.1, 10))
    def test_envelope_dominates(self, p, c):
        n = np.arange(1, 400)
        vals = c * n**p * np.cos(n)
        fit = decay_fit(n, vals)
        assert fit.sign_changes > 0
        assert fit.envelope_exponent >= p - 0.5

    def test_needs_range(self):
        with pytest.raises(ValidationError):
            decay_fit(np.arange(4, 20), np.ones(16))
        fit = decay_fit(np.arange(4, 65), np.arange(4, 65) ** -1.5, min_decades=1.2)
        assert fit.exponent == pytest.approx(-1.5)

    def test_rates(self):
        assert deterministic_rate(1.5) == -2.0
        assert quenched_rate(1.5) == -1.0
        assert quenched_rate(1.5, 0.2) == pytest.approx(-0.8)
