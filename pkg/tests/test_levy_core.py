import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from levyfpe.levy_core import (DiracAtOne, Divergent, GaussianCompoundPoisson, InvalidParameter,
                               LevyTriplet, MomentDivergent, MomentRegion, NullMeasure,
                               SymmetricAlphaStable, compensator_drift, jump_moment,
                               large_jump_rate, sample_increment, sample_large_jumps,
                               series_coefficients, small_jump_variance, validate_jump_measure)


class TestValidity:
    def test_dirac_has_no_inner_mass(self):
        r = validate_jump_measure(DiracAtOne(2.0))
        assert r.ok and r.inner_mass2 == 0.0

    def test_stable_inner_second_moment_matches_quadrature(self):
        r = validate_jump_measure(SymmetricAlphaStable(1.5, 1.0))
        quad, _ = integrate.quad(lambda y: y ** 2 * y ** -2.5, 0.0, 1.0)
        assert r.ok
        assert r.inner_mass2 == pytest.approx(4.0, rel=1e-12)
        assert r.inner_mass2 == pytest.approx(2 * quad, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.0, 2.0, 2.3, -1.0, float("nan")])
    def test_alpha_out_of_range(self, alpha):
        with pytest.raises(InvalidParameter):
            SymmetricAlphaStable(alpha, 1.0)

    @pytest.mark.parametrize("lam", [0.0, -1.0, float("inf")])
    def test_bad_rate(self, lam):
        with pytest.raises(InvalidParameter):
            DiracAtOne(lam)

    def test_negative_diffusion_rejected(self):
        with pytest.raises(InvalidParameter):
            LevyTriplet(0.0, -1.0)


class TestMoments:
    def test_dirac_outer_first_moment(self):
        assert jump_moment(DiracAtOne(2.0), 1, MomentRegion.OUTER) == 2.0

    def test_gaussian_second_moment_vs_quadrature(self):
        nu = GaussianCompoundPoisson(1.0)
        quad, _ = integrate.quad(lambda y: y * y * nu.density(y), -np.inf, np.inf)
        assert jump_moment(nu, 2, MomentRegion.FULL) == pytest.approx(1.0, abs=1e-12)
        assert quad == pytest.approx(1.0, abs=1e-10)

    def test_gaussian_odd_moment_vanishes(self):
        assert jump_moment(GaussianCompoundPoisson(1.0), 3, MomentRegion.FULL) == 0.0

    @pytest.mark.parametrize("k", [2, 4, 6])
    @pytest.mark.parametrize("region", list(MomentRegion))
    def test_gaussian_regions_vs_quadrature(self, k, region):
        nu = GaussianCompoundPoisson(0.7)
        lo, hi = {MomentRegion.INNER: (0, 1), MomentRegion.OUTER: (1, np.inf),
                  MomentRegion.FULL: (0, np.inf)}[region]
        quad, _ = integrate.quad(lambda y: 2 * y ** k * nu.density(y), lo, hi)
        assert jump_moment(nu, k, region) == pytest.approx(quad, rel=1e-9)

    def test_stable_outer_moment_diverges(self):
        m = jump_moment(SymmetricAlphaStable(1.5, 1.0), 2, MomentRegion.OUTER)
        assert isinstance(m, Divergent)

    def test_stable_inner_first_moment_diverges_for_large_alpha(self):
        m = jump_moment(SymmetricAlphaStable(1.5, 1.0), 1, MomentRegion.INNER)
        assert isinstance(m, Divergent)


class TestSeriesCoefficients:
    def test_example1_lambda2(self):
        cs = series_coefficients(LevyTriplet(0.0, 1.0, DiracAtOne(2.0)), 3)
        assert cs == pytest.approx([-2.0, 1.5, -1.0 / 3.0], abs=1e-15)

    def test_gaussian_measure(self):
        cs = series_coefficients(LevyTriplet(0.0, 0.0, GaussianCompoundPoisson(1.0)), 4)
        assert cs == pytest.approx([0.0, 0.5, 0.0, 0.125], abs=1e-14)

    def test_null(self):
        assert series_coefficients(LevyTriplet(), 2) == [0.0, 0.0]

    @pytest.mark.parametrize("alpha, k, region", [(0.5, 1, MomentRegion.OUTER),
                                                  (1.5, 2, MomentRegion.OUTER)])
    def test_stable_divergence_names_region(self, alpha, k, region):
        with pytest.raises(MomentDivergent) as info:
            series_coefficients(LevyTriplet(0.0, 0.0, SymmetricAlphaStable(alpha, 1.0)), 8)
        assert info.value.k == k and info.value.region is region

    @given(lam=st.floats(0.01, 50.0), A=st.floats(0.0, 10.0), b=st.floats(-5.0, 5.0))
    def test_dirac_closed_form(self, lam, A, b):
        cs = series_coefficients(LevyTriplet(b, A, DiracAtOne(lam)), 8)
        expected = [lam * (-1) ** k / math.factorial(k) for k in range(1, 9)]
        expected[0] -= b
        expected[1] += 0.5 * A
        np.testing.assert_allclose(cs, expected, rtol=1e-12, atol=1e-12)

    def test_no_negative_zero(self):
        cs = series_coefficients(LevyTriplet(0.0, 0.0, GaussianCompoundPoisson(1.0)), 5)
        assert all(math.copysign(1.0, c) > 0 for c in cs if c == 0.0)


class TestCutoffSplit:
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.5, 1.0])
    def test_stable_split_vs_quadrature(self, eps):
        nu = SymmetricAlphaStable(1.2, 0.8)
        var, _ = integrate.quad(lambda y: 2 * y * y * nu.density(y), 0.0, eps)
        rate, _ = integrate.quad(lambda y: 2 * nu.density(y), eps, np.inf)
        assert small_jump_variance(nu, eps) == pytest.approx(var, rel=1e-8)
        assert large_jump_rate(nu, eps) == pytest.approx(rate, rel=1e-8)
        assert compensator_drift(nu, eps) == 0.0

    def test_dirac_is_not_compensated(self):
        # the compensator covers |y| < 1 only, so the atom at 1 is a raw jump
        assert compensator_drift(DiracAtOne(3.0), 0.1) == 0.0
        assert large_jump_rate(DiracAtOne(3.0), 0.1) == 3.0

    def test_large_jump_sizes(self):
        rng = np.random.default_rng(0)
        y = sample_large_jumps(SymmetricAlphaStable(1.5, 1.0), 0.2, rng, 50_000)
        assert np.all(np.abs(y) >= 0.2)
        # P(|Y| > 1 | |Y| >= 0.2) = 0.2^1.5
        assert np.mean(np.abs(y) > 1.0) == pytest.approx(0.2 ** 1.5, abs=0.01)
        y = sample_large_jumps(GaussianCompoundPoisson(1.0), 0.5, rng, 20_000)
        assert np.all(np.abs(y) >= 0.5)


class TestIncrements:
    def test_null_is_zero(self):
        assert sample_increment(LevyTriplet(), 0.1, 0.1, np.random.default_rng(1)) == 0.0

    def test_pure_drift(self):
        assert sample_increment(LevyTriplet(3.0, 0.0), 0.5, 0.1, np.random.default_rng(1)) == 1.5

    def test_compound_poisson_mean(self):
        n = 100_000
        s = sample_increment(LevyTriplet(0.0, 0.0, DiracAtOne(2.0)), 1.0, 0.1,
                             np.random.default_rng(2), n)
        assert abs(s.mean() - 2.0) <= 3 * s.std(ddof=1) / math.sqrt(n)

    @settings(max_examples=20, deadline=None)
    @given(b=st.floats(-2, 2), A=st.floats(0, 2), seed=st.integers(0, 2 ** 32 - 1))
    def test_gaussian_part_moments(self, b, A, seed):
        n = 20_000
        s = sample_increment(LevyTriplet(b, A, NullMeasure()), 0.25, 0.1,
                             np.random.default_rng(seed), n)
        se = math.sqrt(A * 0.25 / n) + 1e-15
        assert abs(s.mean() - 0.25 * b) <= 5 * se
