import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchlab.distortion_lab import (
    GAMMA,
    DistortionSample,
    distortion_scan,
    first_return,
    induced_jacobian,
    koebe_ratio_scan,
    schwarzian_domain,
    schwarzian_scan,
    separation_time,
    spacing_margins,
)
from quenchlab.errors import OrbitError, ValidationError
from quenchlab.map_families import DEFAULT_GH, GH_PARAMETER_GRID, PikParams, gh_build
from quenchlab.random_cocycle import ParamDistribution, constant_window, sample_omega
from quenchlab.tower_builder import InducedCell, build_partition, lambda_length

PAIR = ParamDistribution.discrete([(1.5, 0.5), (2.5, 0.5)])
GH_PAIR = ParamDistribution.discrete([(GH_PARAMETER_GRID[0], 0.5), (GH_PARAMETER_GRID[1], 0.5)])


@pytest.fixture(scope="module")
def window():
    return sample_omega(PAIR, 0, 5000, 42)


@pytest.fixture(scope="module")
def partition(window):
    return build_partition("pik", window, 40)


def induced_map(w, x):
    return first_return("pik", w, x)[2]


class TestSeparation:
    def test_distinct_cells(self, window, partition):
        a, b = partition.cell(0), partition.cell(5)
        s = separation_time("pik", window, a.left + a.length / 2, b.left + b.length / 2)
        assert (s.s, s.status) == (0, "separated")

    def test_identical_points(self, window):
        s = separation_time("pik", window, -0.1, -0.1, max_induced=20)
        assert s.exceeds

    def test_points_outside_lambda(self, window):
        with pytest.raises(ValidationError):
            separation_time("pik", window, 0.1, -0.1)

    def test_contraction(self, window, rng):
        lam = lambda_length("pik", window)
        bad = 0
        checked = 0
        while checked < 1000:
            x = -lam * rng.uniform(0.01, 0.99)
            y = x + lam * 2.0 ** -rng.integers(1, 30) * rng.choice([-1, 1])
            if not -lam < y < 0:
                continue
            s = separation_time("pik", window, x, y)
            if s.status != "separated":
                continue
            checked += 1
            bad += abs(x - y) > 0.5**s.s
        assert bad == 0

    def test_gh_separation(self):
        w = sample_omega(GH_PAIR, 0, 3000, 3)
        lam = lambda_length("gh", w)
        x = -0.5 * lam
        s = separation_time("gh", w, x, x + 1e-6)
        assert s.status == "separated" and s.s >= 1


class TestJacobian:
    def test_doubling_return_two(self):
        w = constant_window(1.0, 0, 50, sanity=True)
        p = build_partition("pik", w, 5)
        cell = next(c for c in p.cells() if c.return_time == 2)
        assert induced_jacobian("pik", w, cell, cell.left + cell.length / 2) == pytest.approx(4.0, rel=1e-12)

    def test_expansion_above_two(self, window, partition):
        for c in partition.cells():
            mid = c.left + c.length / 2
            assert induced_jacobian("pik", window, c, mid) > 2

    def test_finite_difference_oracle(self, window, partition, rng):
        worst = 0.0
        for k in rng.choice(len(partition), 150, replace=False):
            c = partition.cell(k)
            x = c.left + c.length * rng.uniform(0.2, 0.8)
            h = 1e-4 * c.length  # smaller steps are roundoff-limited
            fd = (induced_map(window, x + h) - induced_map(window, x - h)) / (2 * h)
            worst = max(worst, abs(fd / induced_jacobian("pik", window, c, x) - 1))
        assert worst < 1e-4

    def test_log_form(self, window, partition):
        c = partition.cell(3)
        x = c.left + c.length / 3
        assert induced_jacobian("pik", window, c, x, log=True) == pytest.approx(
            math.log(induced_jacobian("pik", window, c, x)), rel=1e-14
        )

    def test_point_outside_cell(self, window, partition):
        c = partition.cell(0)
        with pytest.raises(ValidationError):
            induced_jacobian("pik", window, c, c.right + 1e-3)

    def test_wrong_itinerary(self, window, partition):
        c = partition.cell(0)
        fake = InducedCell(c.i + 1, c.j, c.left, c.right, c.return_time + 1)
        with pytest.raises(OrbitError):
            induced_jacobian("pik", window, fake, c.left + c.length / 2)


class TestDistortionScan:
    def test_equal_points_have_unit_ratio(self):
        q = DistortionSample(1, 1, -0.1, -0.1, 0, 0.7, 0.7, 0.0)
        assert q.ratio == 1.0

    def test_fitted_constant_bounds_every_sample(self, window, partition):
        rep = distortion_scan("pik", window, partition, 8, seed=1)
        assert rep.samples
        assert rep.violations(rep.D_hat * (1 + 1e-12)) == 0
        assert rep.violations(rep.D_hat * 0.5) > 0
        deep = [q for q in rep.samples if q.i + q.j >= 30]
        assert deep and all(q.ratio - 1 <= rep.D_hat * GAMMA**q.s * (1 + 1e-12) for q in deep)

    def test_reproducible(self, window, partition, tmp_path):
        a = distortion_scan("pik", window, partition, 3, seed=9)
        b = distortion_scan("pik", window, partition, 3, seed=9)
        a.to_csv(tmp_path / "a.csv")
        b.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_gh_scan(self):
        w = sample_omega(GH_PAIR, 0, 3000, 8)
        p = build_partition("gh", w, 20)
        rep = distortion_scan("gh", w, p, 4, seed=0)
        assert rep.samples and rep.D_hat < 10

    def test_stability_across_cutoffs(self):
        w = sample_omega(PAIR, 0, 5000, 3)
        d = [distortion_scan("pik", w, build_partition("pik", w, n), 4, seed=0).D_hat for n in (25, 50)]
        assert max(d) / min(d) < 2


class TestSchwarzian:
    def test_doubling_is_flat(self):
        rep = schwarzian_scan("pik", PikParams(1.0, sanity=True), 1000)
        assert abs(rep.max_value) < 1e-8

    def test_domain(self):
        assert schwarzian_domain(PikParams(2.0)) == (0.25, 1.0)
        lo, hi = schwarzian_domain(DEFAULT_GH)
        assert lo == pytest.approx(gh_build(DEFAULT_GH).x1_plus) and hi == 1.0

    def test_pikovsky_sign_is_positive(self):
        # the alpha = 2 outer branch is 2 sqrt(x) - 1 with Schwarzian 3 / (8 x^2)
        rep = schwarzian_scan("pik", 2.0, 10_000)
        assert not rep.negative
        assert rep.max_value == pytest.approx(3 / (8 * rep.argmax**2), rel=1e-3)

    @pytest.mark.parametrize("p", GH_PARAMETER_GRID)
    def test_gh_negative(self, p):
        assert schwarzian_scan("gh", p, 10_000).negative


class TestKoebe:
    @pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
    def test_constant_ratios_decrease_to_one(self, alpha):
        rep = koebe_ratio_scan("pik", constant_window(alpha, 0, 1010), 1000)
        assert np.all(rep.ratios > 1)
        assert rep.ratios[-1] < 1.005
        limit = (1002 / 1001) ** (alpha / (alpha - 1))
        assert rep.ratios[-1] == pytest.approx(limit, rel=2e-3)

    def test_random_ratio_bounded(self):
        rep = koebe_ratio_scan("pik", sample_omega(PAIR, 0, 1010, 5), 1000)
        assert rep.max_ratio < 10
        # gaps along a random omega are not monotone
        assert rep.ratios.min() < 1

    def test_spacing_hypothesis(self):
        assert np.any(spacing_margins("pik", 1.5, 2.5) < 0)
        assert np.all(spacing_margins("pik", 1.9, 2.1) > 0)
        assert np.all(spacing_margins("pik", 1.4, 1.6) > 0)
        assert not koebe_ratio_scan("pik", sample_omega(PAIR, 0, 120, 0), 100).spacing_ok

    def test_gh_scan(self):
        rep = koebe_ratio_scan("gh", sample_omega(GH_PAIR, 0, 520, 1), 500)
        assert rep.max_ratio < 10
