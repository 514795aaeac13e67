"""Oracle and property tests for the normal-distribution primitives.

Expected constants were computed ahead of time with mpmath at 40 digits
(CDF/PDF point values) and with adaptive quadrature for the truncated
moment; the quadrature oracle also runs live against scipy.integrate.quad.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from boxrelax.gaussian import (
    log_std_normal_tail,
    mills_ratio,
    std_normal_cdf,
    std_normal_pdf,
    tail_second_moment,
    truncated_sq_moment,
)


class TestStdNormalCdf:
    def test_symmetry_point(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_upper_limit(self):
        assert abs(std_normal_cdf(40.0) - 1.0) <= 1e-15

    def test_reference_value(self):
        # mpmath ncdf(1) at 40 digits
        assert abs(std_normal_cdf(1.0) - 0.84134474606854294859) <= 1e-14

    def test_reflection_identity_on_grid(self):
        for x in np.linspace(-8.0, 8.0, 2001):
            assert abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-14

    def test_monotone(self):
        xs = np.linspace(-10, 10, 500)
        vals = [std_normal_cdf(x) for x in xs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(ValueError):
            std_normal_cdf(bad)


class TestStdNormalPdf:
    def test_peak(self):
        assert abs(std_normal_pdf(0.0) - 0.3989422804014327) <= 1e-16

    def test_even(self):
        assert std_normal_pdf(2.0) == std_normal_pdf(-2.0)

    def test_reference_value(self):
        assert abs(std_normal_pdf(1.0) - 0.2419707245191433498) <= 1e-16

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(ValueError):
            std_normal_pdf(bad)


class TestMillsRatio:
    def test_sandwich_bounds(self):
        for x in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0):
            m = mills_ratio(x)
            assert 1.0 / x - 1.0 / x**3 <= m <= 1.0 / x

    def test_matches_primitive_quotient(self):
        assert abs(mills_ratio(1.0) - std_normal_cdf(-1.0) / std_normal_pdf(1.0)) <= 1e-16

    def test_deep_tail_value(self):
        m = mills_ratio(10.0)
        assert 0.099 <= m <= 0.1

    def test_asymptotic_regime(self):
        assert abs(mills_ratio(40.0) * 40.0 - 1.0) <= 1e-3

    def test_branch_continuity(self):
        below, above = mills_ratio(8.0 - 1e-12), mills_ratio(8.0 + 1e-12)
        assert abs(below - above) <= 1e-12 * below

    def test_survives_cdf_underflow(self):
        # Phi(-60) is 0 in binary64; the ratio must still be ~1/60
        assert std_normal_cdf(-60.0) == 0.0
        assert abs(mills_ratio(60.0) * 60.0 - 1.0) <= 1e-3

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            mills_ratio(bad)


class TestLogTail:
    def test_matches_cdf_in_overlap(self):
        for x in (1.0, 3.0, 6.0, 9.0, 20.0):
            assert math.exp(log_std_normal_tail(x)) == pytest.approx(
                std_normal_cdf(-x), rel=1e-12
            )

    def test_deep_tail_finite(self):
        v = log_std_normal_tail(100.0)
        assert math.isfinite(v) and v < -5000.0


class TestTruncatedSqMoment:
    def test_half_variance_at_zero(self):
        assert abs(truncated_sq_moment(0.0) - 0.5) <= 1e-15

    def test_reference_value(self):
        # independent mpmath quadrature of (x-2)^2 phi(x) over [2, 47]
        assert abs(truncated_sq_moment(2.0) - 0.0057687267145199321) <= 1e-15

    def test_quadrature_oracle(self):
        rng = np.random.default_rng(1211)
        phi = std_normal_pdf
        for a in rng.uniform(0.0, 10.0, size=100):
            oracle, err = quad(
                lambda x: (x - a) ** 2 * phi(x), a, a + 42.0,
                epsabs=1e-13, epsrel=1e-13, limit=200,
            )
            assert err < 1e-10
            assert abs(truncated_sq_moment(a) - oracle) <= 1e-10

    def test_deep_tail_underflow_handling(self):
        v = truncated_sq_moment(30.0)
        assert math.isfinite(v)
        assert 0.0 <= v <= 1e-100

    def test_strictly_decreasing(self):
        rng = np.random.default_rng(7013)
        draws = np.sort(rng.uniform(0.0, 10.0, size=40))
        for a1, a2 in zip(draws, draws[1:]):
            assert truncated_sq_moment(a1) > truncated_sq_moment(a2)

    @pytest.mark.parametrize("bad", [-0.5, math.nan, math.inf])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            truncated_sq_moment(bad)


class TestTailSecondMoment:
    def test_half_at_zero(self):
        assert abs(tail_second_moment(0.0) - 0.5) <= 1e-15

    def test_quadrature_oracle(self):
        for b in (0.3, 1.0, 2.5, 5.0):
            oracle, _ = quad(lambda x: x * x * std_normal_pdf(x), b, b + 42.0)
            assert abs(tail_second_moment(b) - oracle) <= 1e-10

    def test_below_half(self):
        # the bracket derivation relies on this staying under 1/2
        for b in (0.1, 1.0, 3.0, 8.0):
            assert 0.0 < tail_second_moment(b) < 0.5
