"""Tests for the statistical special functions.

Expected values are frozen from independent oracles: a bisection quantile
running against the erfc-based CDF, the closed forms alpha**(1/n) and the
chi-distribution identities at dim 1 and 2, and scipy's beta quantile as a
cross-check on the Clopper-Pearson bisection.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from smoothcert.statfun import (
    BallMassQuery,
    ConfidenceLevel,
    Probability,
    clopper_pearson_lower,
    gaussian_ball_mass,
    gaussian_ball_mass_inv,
    normal_cdf,
    normal_quantile,
)


def bisect_quantile(p, lo=-40.0, hi=40.0):
    # independent oracle: bisection on the CDF definition
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2)) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestProbabilityTypes:
    def test_probability_range(self):
        assert Probability(0.0) == 0.0
        assert Probability(1.0) == 1.0
        with pytest.raises(ValueError):
            Probability(-1e-9)
        with pytest.raises(ValueError):
            Probability(1.0 + 1e-9)
        with pytest.raises(ValueError):
            Probability(float("nan"))

    def test_confidence_level_open_interval(self):
        assert ConfidenceLevel(0.001) == 0.001
        for bad in (0.0, 1.0, -0.1, 2.0):
            with pytest.raises(ValueError):
                ConfidenceLevel(bad)

    def test_ball_mass_query_invariants(self):
        BallMassQuery(radius=0.0, dim=1, sigma=0.1)
        with pytest.raises(ValueError):
            BallMassQuery(radius=-1.0, dim=1, sigma=1.0)
        with pytest.raises(ValueError):
            BallMassQuery(radius=1.0, dim=0, sigma=1.0)
        with pytest.raises(ValueError):
            BallMassQuery(radius=1.0, dim=1, sigma=0.0)


class TestNormalCdf:
    def test_symmetry_at_zero(self):
        assert normal_cdf(0.0) == 0.5

    def test_frozen_values(self):
        # oracle: high-precision erfc series, frozen
        assert normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-12)
        assert normal_cdf(-1.0) == pytest.approx(1.0 - 0.8413447460685429, abs=1e-12)

    def test_monotone_and_accurate_on_grid(self):
        z = np.linspace(-8.0, 8.0, 20001)
        vals = normal_cdf(z)
        assert np.all(np.diff(vals) >= 0.0)
        ref = stats.norm.cdf(z)
        assert np.max(np.abs(vals - ref)) < 1e-12

    def test_rejects_non_finite(self):
        for bad in (float("nan"), float("inf"), float("-inf")):
            with pytest.raises(ValueError):
                normal_cdf(bad)


class TestNormalQuantile:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_frozen_values(self):
        assert normal_quantile(0.999) == pytest.approx(3.090232306167797, abs=1e-9)
        assert normal_quantile(0.9) == pytest.approx(1.2815515655446004, abs=1e-9)

    def test_matches_bisection_oracle(self):
        for p in (0.01, 0.2, 0.5, 0.7, 0.95, 0.9999):
            assert normal_quantile(p) == pytest.approx(bisect_quantile(p), abs=1e-10)

    def test_rejects_endpoints(self):
        for bad in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                normal_quantile(bad)

    def test_roundtrip_probability_space(self):
        p = np.linspace(1e-12, 1.0 - 1e-12, 50001)
        err = np.abs(normal_cdf(normal_quantile(p)) - p)
        assert np.max(err) <= 1e-10

    def test_roundtrip_z_space(self):
        # quantile(cdf(z)) = z. Above z ~ 5.6 the CDF quantizes against 1.0
        # in float64 and no inverse can recover z to 1e-8, so the dense grid
        # covers the representable region plus the full lower tail.
        z = np.concatenate([np.linspace(-8.0, 0.0, 8001), np.linspace(0.0, 5.5, 5501)])
        back = normal_quantile(np.asarray(normal_cdf(z)))
        assert np.max(np.abs(back - z)) <= 1e-8

    def test_antisymmetry(self):
        p = np.linspace(1e-6, 1.0 - 1e-6, 20001)
        left = normal_quantile(p)
        right = -normal_quantile(1.0 - p)
        assert np.max(np.abs(left - right)) <= 1e-10


class TestClopperPearsonLower:
    def test_zero_successes(self):
        assert clopper_pearson_lower(0, 1000, 0.05) == 0.0

    def test_all_successes_closed_form(self):
        # P[X >= n | p] = p**n, so the bound solves p**n = alpha
        got = clopper_pearson_lower(100000, 100000, 0.001)
        assert got == pytest.approx(0.001 ** (1.0 / 100000), abs=1e-10)

    def test_against_beta_quantile_oracle(self):
        # frozen from scipy.stats.beta.ppf(0.05, 900, 101)
        got = clopper_pearson_lower(900, 1000, 0.05)
        assert got == pytest.approx(0.8830084679036321, abs=1e-9)
        for k, n, a in [(1, 10, 0.05), (5, 10, 0.2), (73, 100, 0.01), (9990, 10000, 0.001)]:
            ref = stats.beta.ppf(a, k, n - k + 1)
            assert clopper_pearson_lower(k, n, a) == pytest.approx(ref, abs=1e-9)

    def test_below_empirical_fraction(self):
        for k, n in [(1, 10), (37, 50), (900, 1000), (999, 1000)]:
            assert clopper_pearson_lower(k, n, 0.05) <= k / n

    @given(
        k=st.integers(min_value=0, max_value=49),
        n=st.just(50),
        alpha=st.sampled_from([0.001, 0.01, 0.05, 0.2]),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_successes(self, k, n, alpha):
        a = clopper_pearson_lower(k, n, alpha)
        b = clopper_pearson_lower(k + 1, n, alpha)
        assert b >= a

    def test_monotone_in_alpha(self):
        # shrinking alpha (more confidence) can only lower the bound
        values = [clopper_pearson_lower(80, 100, a) for a in (0.2, 0.05, 0.01, 0.001)]
        assert all(x >= y for x, y in zip(values, values[1:]))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            clopper_pearson_lower(1, 0, 0.05)
        with pytest.raises(ValueError):
            clopper_pearson_lower(11, 10, 0.05)
        with pytest.raises(ValueError):
            clopper_pearson_lower(-1, 10, 0.05)

    def test_coverage_simulation(self):
        # the lower bound may exceed the true p in at most ~alpha of draws
        rng = np.random.default_rng(20240501)
        n, p_true, alpha = 1000, 0.9, 0.05
        draws = rng.binomial(n, p_true, size=10000)
        bounds = np.array([clopper_pearson_lower(int(k), n, alpha) for k in draws])
        assert np.mean(bounds > p_true) <= alpha + 0.01


class TestGaussianBallMass:
    def test_zero_radius(self):
        assert gaussian_ball_mass(BallMassQuery(radius=0.0, dim=7, sigma=0.3)) == 0.0

    def test_dim1_closed_form(self):
        for r in np.linspace(0.01, 6.0, 40):
            expect = 2.0 * normal_cdf(r / 0.5) - 1.0
            got = gaussian_ball_mass(BallMassQuery(radius=float(r), dim=1, sigma=0.5))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_dim2_closed_form(self):
        sigma = 1.3
        r = sigma * math.sqrt(2.0 * math.log(2.0))
        got = gaussian_ball_mass(BallMassQuery(radius=r, dim=2, sigma=sigma))
        assert got == pytest.approx(0.5, abs=1e-12)
        for r in np.linspace(0.05, 8.0, 40):
            expect = 1.0 - math.exp(-(r / sigma) ** 2 / 2.0)
            got = gaussian_ball_mass(BallMassQuery(radius=float(r), dim=2, sigma=sigma))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_strictly_increasing_in_radius(self):
        # grid stops before the mass saturates against 1.0 in float64
        rs = np.linspace(0.01, 6.0, 200)
        vals = [gaussian_ball_mass(BallMassQuery(radius=float(r), dim=6, sigma=1.0)) for r in rs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_nonincreasing_in_dim(self):
        vals = [gaussian_ball_mass(BallMassQuery(radius=2.0, dim=d, sigma=1.0)) for d in range(1, 40)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


class TestGaussianBallMassInv:
    def test_dim2_closed_form(self):
        got = gaussian_ball_mass_inv(0.5, 2, 1.0)
        assert got == pytest.approx(math.sqrt(2.0 * math.log(2.0)), abs=1e-8)

    def test_dim1_closed_form(self):
        got = gaussian_ball_mass_inv(0.5, 1, 1.0)
        assert got == pytest.approx(0.6744897501960816, abs=1e-8)

    def test_roundtrip(self):
        for dim, sigma in [(1, 1.0), (3, 0.25), (32, 2.0), (3072, 1.0 / math.sqrt(3072))]:
            top = 10.0 * sigma * math.sqrt(dim)
            for r in np.geomspace(1e-3, top, 25):
                mass = gaussian_ball_mass(BallMassQuery(radius=float(r), dim=dim, sigma=sigma))
                if not 1e-15 < mass < 1.0 - 1e-11:
                    continue  # the mass saturates in float64; inverse domain ends here
                back = gaussian_ball_mass_inv(mass, dim, sigma)
                assert back == pytest.approx(r, abs=1e-8, rel=1e-7)

    def test_probability_residual(self):
        for p in (0.001, 0.1, 0.5, 0.9, 0.999):
            r = gaussian_ball_mass_inv(p, 12, 0.7)
            mass = gaussian_ball_mass(BallMassQuery(radius=r, dim=12, sigma=0.7))
            assert abs(mass - p) <= 1e-10

    def test_rejects_endpoints(self):
        for bad in (0.0, 1.0):
            with pytest.raises(ValueError):
                gaussian_ball_mass_inv(bad, 4, 1.0)
