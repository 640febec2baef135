import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchlab.assumption_checker import (
    ak_single,
    build_ak_spec,
    c_nu_reference,
    cesaro_limit,
    compute_Ak,
    expected_ak,
    gh_ladder_constant_limit,
    hoeffding_bound,
    hoeffding_check,
    measure_M,
    pathwise_chain_gap,
    pik_ladder_constant_limit,
    quenched_bound_report,
    u_pik,
)
from quenchlab.errors import ValidationError
from quenchlab.map_families import DEFAULT_GH, GH_PARAMETER_GRID, PikParams, pik_forward
from quenchlab.random_cocycle import ParamDistribution, derive_seeds, expect_nu, sample_omega
from quenchlab.tower_builder import deterministic_ladder

PAIR = ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.5)])
UNIFORM = ParamDistribution.uniform(1.5, 2.5)
GH_PAIR = ParamDistribution.discrete([(GH_PARAMETER_GRID[0], 0.5), (GH_PARAMETER_GRID[1], 0.5)])


@pytest.fixture(scope="module")
def pair_spec():
    return build_ak_spec(PAIR, 10**5)


@pytest.fixture(scope="module")
def point_spec():
    return build_ak_spec(ParamDistribution.point(1.5), 10**4)


class TestReferenceLadders:
    @pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
    def test_ladder_constant_limit(self, alpha):
        spec = build_ak_spec(ParamDistribution.point(alpha), 10**4, M=0.0)
        ck = spec.c_k()
        assert ck[-1] == pytest.approx(pik_ladder_constant_limit(alpha), rel=5e-3)
        # relative Cauchy increments are below 1e-6 by k = 10^4
        assert abs(ck[-1] - ck[-2]) / ck[-1] < 1e-6

    def test_limit_values(self):
        assert pik_ladder_constant_limit(2.0) == pytest.approx(4.0)
        assert pik_ladder_constant_limit(1.5) == pytest.approx(36.0)
        assert gh_ladder_constant_limit(1.5, 1.0) == pytest.approx(4.0)

    def test_gh_ladder_constant(self):
        spec = build_ak_spec(ParamDistribution.point(DEFAULT_GH), 10**4, M=0.0)
        assert spec.c_k()[-1] == pytest.approx(gh_ladder_constant_limit(1.5, 1.0), rel=1e-2)


class TestM:
    def test_u_closed_form(self):
        # u_alpha(x) = ((1 - g(x)) / (1 - x))^alpha / (2 alpha) - 1 / (2 alpha)
        for a in (1.3, 2.0, 2.8):
            x = np.array([0.6, 0.8, 0.99])
            g = pik_forward(PikParams(a), x)
            expect = (((1 - g) / (1 - x)) ** a - 1) / (2 * a)
            np.testing.assert_allclose(u_pik(a, x), expect, rtol=1e-8, atol=1e-14)

    def test_u_vanishes_at_neutral_point(self):
        assert abs(u_pik(2.0, 1 - 1e-9)) < 1e-8

    def test_measured_bound_dominates_samples(self, rng):
        M = measure_M(PAIR, 200, 200)
        a = rng.uniform(1.5, 2.5, 200)
        x = rng.uniform(0.5, 1.0, 200)
        vals = [abs(u_pik(ai, xi)) for ai, xi in zip(a, x)]
        assert max(vals) <= M * 1.01


class TestAk:
    def test_degenerate_limit(self, point_spec):
        val = ak_single(point_spec, 1.5, [10**4])[0]
        assert val == pytest.approx(0.5 / 3, rel=1e-3)

    def test_analytic_bounds(self, pair_spec):
        M = pair_spec.M
        ks = np.arange(1, 2001)
        for a in (1.5, 2.5):
            v = ak_single(pair_spec, a, ks)
            assert np.all(v > -((0.5 + M) ** 2)) and np.all(v < 0.5 + M)

    def test_compute_matches_single_coordinate(self, pair_spec):
        w = sample_omega(PAIR, 0, 10, 3)
        assert compute_Ak(pair_spec, w, 7) == ak_single(pair_spec, w.param(0), [7])[0]
        with pytest.raises(ValidationError):
            compute_Ak(pair_spec, w, 0)

    def test_shallow_ladder(self):
        spec = build_ak_spec(PAIR, 50, M=0.2)
        with pytest.raises(ValidationError):
            ak_single(spec, 1.5, [51])

    def test_gh_degenerate_limit(self):
        spec = build_ak_spec(ParamDistribution.point(DEFAULT_GH), 5000)
        assert ak_single(spec, DEFAULT_GH, [5000])[0] == pytest.approx(DEFAULT_GH.a, rel=1e-3)

    def test_expectation_two_ways(self, pair_spec):
        # closed-form expectation against a Monte Carlo average over 10^5 fibers
        ks = np.array([1, 5, 50, 500])
        exact = expected_ak(pair_spec, 500)[ks - 1]
        draws = sample_omega(PAIR, 0, 10**5 - 1, 77).alphas(0, 10**5)
        table = {a: ak_single(pair_spec, a, ks) for a in (1.5, 2.5)}
        samples = np.stack([table[a] for a in draws])
        se = samples.std(axis=0) / math.sqrt(samples.shape[0])
        assert np.all(np.abs(samples.mean(axis=0) - exact) <= 3 * se + 1e-15)

    def test_uniform_expectation_matches_expect_nu(self):
        spec = build_ak_spec(UNIFORM, 200, M=0.2)
        for k in (1, 20, 200):
            ref = expect_nu(lambda a: np.array([ak_single(spec, x, [k])[0] for x in np.ravel(a)]), UNIFORM, tol=1e-12)
            assert expected_ak(spec, 200)[k - 1] == pytest.approx(ref, rel=1e-8, abs=1e-12)

    @settings(max_examples=15)
    @given(st.integers(0, 2**40))
    def test_pathwise_chain(self, seed):
        spec = build_ak_spec(PAIR, 1000, M=0.2)
        w = sample_omega(PAIR, 0, 1000, seed)
        for n in (10, 100, 1000):
            assert pathwise_chain_gap(spec, w, n) >= 0

    def test_gh_chain_as_written_fails_and_corrected_holds(self):
        w = sample_omega(GH_PAIR, 0, 3000, 1)
        literal = build_ak_spec(GH_PAIR, 3000)
        fixed = build_ak_spec(GH_PAIR, 3000, corrected=True)
        assert pathwise_chain_gap(literal, w, 3000) < 0
        assert pathwise_chain_gap(fixed, w, 3000) >= 0


class TestCesaro:
    def test_references(self):
        assert c_nu_reference(PAIR) == (0, pytest.approx(1 / 12))
        assert c_nu_reference(UNIFORM) == (1, pytest.approx(1 / 12))
        p = ParamDistribution.discrete([(1.3, 0.2), (2.2, 0.8)])
        assert c_nu_reference(p) == (0, pytest.approx(0.2 * 0.3 / 2.6))

    def test_discrete_limit(self, pair_spec):
        res = cesaro_limit(pair_spec, 10**5)
        assert res.q == 0 and res.cauchy
        assert res.limit == pytest.approx(1 / 12, rel=0.02)

    def test_uniform_limit(self):
        res = cesaro_limit(build_ak_spec(UNIFORM, 10**5), 10**5)
        assert res.q == 1
        assert res.limit == pytest.approx(1 / 12, rel=0.1)

    def test_short_horizon_rejected(self, pair_spec):
        with pytest.raises(ValidationError):
            cesaro_limit(pair_spec, 100)


class TestHoeffding:
    def test_bound_formula(self):
        assert hoeffding_bound(100, 0.1, 0, 1.0) == pytest.approx(math.exp(-2.0))
        assert hoeffding_bound(100, 0.1, 1, 1.0) == pytest.approx(math.exp(-2.0 / math.log(100) ** 2))

    def test_beyond_span(self, pair_spec):
        rows = hoeffding_check(pair_spec, 1000, [pair_spec.span * 1.01], 1000, 0)
        assert rows[0].frequency == 0.0

    def test_degenerate(self):
        spec = build_ak_spec(ParamDistribution.point(2.0), 1000)
        rows = hoeffding_check(spec, 1000, [1e-12, 0.01], 1000, 0)
        assert all(r.frequency == 0.0 for r in rows)

    def test_inequality(self, pair_spec):
        rows = hoeffding_check(pair_spec, 10**4, [0.02], 10**4, 5)
        assert rows[0].satisfied

    def test_trial_floor(self, pair_spec):
        with pytest.raises(ValidationError):
            hoeffding_check(pair_spec, 1000, [0.1], 10, 0)


class TestQuenched:
    def test_degenerate_statistic(self):
        # (2 alpha / (alpha - 1))^{1/(alpha - 1)} = 36 at alpha = 1.5
        spec = build_ak_spec(ParamDistribution.point(1.5), 10**4)
        rep = quenched_bound_report(spec, 10**4, 3, 0.5, 0)
        assert rep.limsup_stat == pytest.approx(36.0, rel=5e-3)
        assert rep.limsup_bound == pytest.approx(36.0)

    def test_vacuous_fraction(self, pair_spec):
        rep = quenched_bound_report(pair_spec, 2000, 50, 1e-9, 1)
        assert np.all(rep.n1 == 1)

    def test_censoring_rare(self, pair_spec):
        rep = quenched_bound_report(pair_spec, 10**4, 1000, 0.5, 2)
        assert rep.censored_fraction < 0.01
        ns = np.array([2, 10, 100, 1000])
        ex = rep.exceedance(ns)
        assert np.all(np.diff(ex) <= 0)

    def test_fraction_validated(self, pair_spec):
        with pytest.raises(ValidationError):
            quenched_bound_report(pair_spec, 1000, 10, 1.0, 0)
