import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from quenchlab.errors import OrbitError, ValidationError, WindowRangeError
from quenchlab.map_families import DEFAULT_GH, GH_PARAMETER_GRID, PikParams, gh_build, gh_forward, pik_forward
from quenchlab.random_cocycle import (
    ParamDistribution,
    cocycle_apply,
    constant_window,
    counter_uniforms,
    derive_seeds,
    expect_nu,
    sample_omega,
    shift,
)

PAIR = ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.5)])


class TestDistribution:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.6)])

    def test_atoms_must_be_legal(self):
        with pytest.raises(ValidationError):
            ParamDistribution.discrete([(3.5, 1.0)])

    def test_reversed_interval_rejected(self):
        with pytest.raises(ValidationError):
            ParamDistribution.uniform(2.5, 1.5)

    def test_mixed_families_rejected(self):
        with pytest.raises(ValidationError):
            ParamDistribution.discrete([(1.5, 0.5), (DEFAULT_GH, 0.5)])

    def test_bounds_and_lowest_mass(self):
        d = ParamDistribution.discrete([(2.5, 0.3), (1.5, 0.7)])
        assert d.bounds() == (1.5, 2.5)
        assert d.lowest_atom_probability() == 0.7


class TestSampling:
    def test_point_mass_gives_constant_window(self):
        w = sample_omega(ParamDistribution.point(1.5), 5, 20, 3)
        assert np.all(w.alphas(-5, 26) == 1.5)

    def test_degenerate_interval(self):
        w = sample_omega(ParamDistribution.uniform(1.5, 1.5), 0, 50, 1)
        assert np.all(w.alphas(0, 51) == 1.5)

    def test_law_of_large_numbers(self):
        w = sample_omega(PAIR, 0, 10**6 - 1, 12345)
        freq = np.mean(w.alphas(0, 10**6) == 1.5)
        assert 0.499 <= freq <= 0.501

    def test_uniform_draws_fill_interval(self):
        w = sample_omega(ParamDistribution.uniform(1.2, 2.8), 0, 20_000, 9)
        a = w.alphas(0, 20_001)
        assert a.min() >= 1.2 and a.max() < 2.8
        assert stats.kstest((a - 1.2) / 1.6, "uniform").pvalue > 1e-3

    @given(st.integers(0, 2**63), st.integers(0, 50), st.integers(0, 50))
    def test_reproducible_and_extendable(self, seed, past, future):
        w1 = sample_omega(PAIR, past, future, seed)
        w2 = sample_omega(PAIR, past, future, seed)
        assert w1 == w2
        wide = sample_omega(PAIR, past + 7, future + 11, seed)
        np.testing.assert_array_equal(wide.alphas(-past, past + future + 1), w1.alphas(-past, past + future + 1))

    def test_counter_stream_depends_on_index_only(self):
        a = counter_uniforms(5, -10, 10)
        b = counter_uniforms(5, 0, 3)
        np.testing.assert_array_equal(a[10:14], b)

    def test_negative_extent_rejected(self):
        with pytest.raises(ValidationError):
            sample_omega(PAIR, -1, 3, 0)

    def test_child_seeds_distinct(self):
        s = derive_seeds(7, 1000)
        assert len(set(s.tolist())) == 1000
        np.testing.assert_array_equal(s, derive_seeds(7, 1000))


class TestShift:
    def test_identity_and_group_action(self):
        w = sample_omega(PAIR, 10, 10, 4)
        assert shift(w, 0) == w
        assert shift(shift(w, 2), -2) == w

    def test_projection(self):
        w = sample_omega(PAIR, 10, 10, 4)
        assert shift(w, 3).param(0) == w.param(3)
        assert shift(w, -4).param(1) == w.param(-3)

    def test_out_of_range(self):
        w = sample_omega(PAIR, 2, 3, 4)
        with pytest.raises(WindowRangeError):
            shift(w, 4)
        with pytest.raises(WindowRangeError):
            w.param(-3)
        with pytest.raises(WindowRangeError):
            shift(w, 3).param(1)


class TestCocycle:
    def test_zero_steps_is_identity(self):
        w = sample_omega(PAIR, 0, 5, 0)
        assert cocycle_apply("pik", w, 0, 0.3) == 0.3

    def test_doubling(self):
        w = constant_window(1.0, 0, 5, sanity=True)
        x = 0.3
        for _ in range(3):
            x = 2 * x - 1 if x > 0 else 2 * x + 1
        assert cocycle_apply("pik", w, 3, 0.3) == pytest.approx(x, abs=1e-14)

    def test_second_preimage_reaches_zero(self):
        w = constant_window(2.0, 0, 5)
        assert abs(cocycle_apply("pik", w, 2, 0.390625)) < 1e-10

    def test_composition_order(self):
        w = sample_omega(PAIR, 0, 10, 17)
        x = 0.37
        y = x
        for j in range(5):
            y = pik_forward(PikParams(w.param(j)), y)
        assert cocycle_apply("pik", w, 5, x) == pytest.approx(y, abs=1e-12)

    def test_gh_composition_order(self):
        d = ParamDistribution.discrete([(GH_PARAMETER_GRID[0], 0.5), (GH_PARAMETER_GRID[1], 0.5)])
        w = sample_omega(d, 0, 10, 5)
        y = 0.61
        for j in range(4):
            y = gh_forward(gh_build(w.param(j)), y)
        assert cocycle_apply("gh", w, 4, 0.61) == pytest.approx(y, abs=1e-12)

    def test_window_exhausted(self):
        w = sample_omega(PAIR, 0, 3, 0)
        with pytest.raises(WindowRangeError):
            cocycle_apply("pik", w, 5, 0.3)

    def test_singular_orbit_flagged(self):
        w = constant_window(2.0, 0, 5)
        with pytest.raises(OrbitError):
            cocycle_apply("pik", w, 2, 0.25)
        out = cocycle_apply("pik", w, 2, np.array([0.25, 0.3]), on_singular="nan")
        assert np.isnan(out[0]) and np.isfinite(out[1])

    def test_family_mismatch(self):
        with pytest.raises(ValidationError):
            cocycle_apply("gh", sample_omega(PAIR, 0, 3, 0), 1, 0.3)

    def test_shift_equivariance(self, rng):
        worst = 0.0
        for k in range(1000):
            w = sample_omega(PAIR, 0, 40, int(rng.integers(2**62)))
            n, m = rng.integers(0, 15, 2)
            x = rng.uniform(-1, 1)
            lhs = cocycle_apply("pik", w, n + m, x, on_singular="nan")
            rhs = cocycle_apply("pik", shift(w, n), m, cocycle_apply("pik", w, n, x, on_singular="nan"), on_singular="nan")
            if np.isfinite(lhs):
                worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-10

    def test_lebesgue_preserved(self):
        w = sample_omega(PAIR, 0, 10, 2024)
        x = np.random.default_rng(1).uniform(-1, 1, 10**6)
        y = cocycle_apply("pik", w, 6, x, on_singular="nan")
        y = y[np.isfinite(y)]
        ks = stats.kstest((y + 1) / 2, "uniform").statistic
        assert ks < 1.628 / math.sqrt(y.size)


class TestExpectation:
    def test_discrete_mean(self):
        assert expect_nu(lambda a: a, PAIR) == 2.0

    def test_normalisation(self):
        assert expect_nu(lambda a: 1.0, PAIR) == 1.0
        assert expect_nu(lambda a: np.ones_like(a), ParamDistribution.uniform(1.2, 2.7)) == pytest.approx(1.0, abs=1e-14)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            expect_nu(lambda a: math.inf, PAIR)

    @pytest.mark.parametrize("u", [50, 100, 200])
    def test_exponential_moment_asymptote(self, u):
        # closed form of the uniform average and its large-u asymptote
        lo, hi = 1.5, 2.5
        d = ParamDistribution.uniform(lo, hi)
        val = expect_nu(lambda a: np.exp(-(a - lo) * u), d, tol=1e-13)
        exact = -math.expm1(-(hi - lo) * u) / (u * (hi - lo))
        assert val == pytest.approx(exact, rel=1e-10)
        assert val * u * (hi - lo) == pytest.approx(1.0, abs=1e-12)

    def test_exponential_moment_with_rate_two(self):
        # for rate c > 1 the average still decays like 1/(c u (hi - lo)); no extra exponential factor
        lo, hi, c, u = 1.5, 2.5, 2.0, 100.0
        d = ParamDistribution.uniform(lo, hi)
        val = expect_nu(lambda a: np.exp(-c * (a - lo) * u), d, tol=1e-13)
        assert val * c * u * (hi - lo) == pytest.approx(1.0, abs=1e-12)
