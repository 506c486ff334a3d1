import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, poisson

from retplan.errors import DegenerateData, DomainError, InconsistentStat, SingularInformation
from retplan.families import (Binary, Exponential, GroupStat, Normal, Poisson, efficacy_variance,
                              family_names, get_family, group_mle, kl_divergence, register_family)

SCALAR = [("binary", "identity"), ("binary", "logit"), ("poisson", "negative"),
          ("poisson", "identity"), ("exponential", "log")]


def _interior(family, rng, size):
    if isinstance(family, Binary):
        return rng.uniform(0.01, 0.99, size)
    return np.exp(rng.uniform(np.log(0.05), np.log(50.0), size))


class TestGroupMle:
    def test_binary_half(self):
        assert group_mle(Binary(), GroupStat(86, 43)) == pytest.approx(0.5, abs=1e-12)

    def test_poisson_epilepsy_placebo(self):
        assert group_mle(Poisson(), GroupStat(18, 338)) == pytest.approx(18.78, abs=5e-3)

    def test_binary_zero_successes_is_degenerate(self):
        with pytest.raises(DegenerateData) as err:
            group_mle(Binary(), GroupStat(10, 0))
        assert err.value.estimate == 0.0

    def test_binary_all_successes_is_degenerate(self):
        with pytest.raises(DegenerateData):
            group_mle(Binary(), GroupStat(10, 10))

    def test_clip_moves_into_interior(self):
        assert group_mle(Binary(), GroupStat(10, 0), clip=1e-9) == pytest.approx(1e-9)
        assert group_mle(Poisson(), GroupStat(5, 0), clip=1e-9) == pytest.approx(1e-9)

    def test_inconsistent_binary_count(self):
        with pytest.raises(InconsistentStat):
            group_mle(Binary(), GroupStat(10, 11))

    def test_exponential_mean(self):
        assert group_mle(Exponential(), GroupStat(4, 10.0)) == pytest.approx(2.5)

    def test_normal_uses_within_group_variance(self):
        x = np.array([1.0, 2.0, 4.0])
        theta = group_mle(Normal(), GroupStat.from_observations(x))
        np.testing.assert_allclose(theta, [x.mean(), x.var()], rtol=1e-12)

    def test_group_size_must_be_positive(self):
        with pytest.raises(InconsistentStat):
            GroupStat(0, 0.0)


class TestEfficacyVariance:
    def test_binary_identity(self):
        assert efficacy_variance(Binary(), 0.5) == pytest.approx(0.25, rel=1e-12)

    def test_poisson(self):
        assert efficacy_variance(Poisson(), 16.0) == pytest.approx(16.0, rel=1e-12)

    def test_binary_logit(self):
        assert efficacy_variance(Binary("logit"), 0.5) == pytest.approx(4.0, rel=1e-12)

    def test_exponential_log_is_one(self):
        assert efficacy_variance(Exponential(), 3.7) == pytest.approx(1.0, rel=1e-12)

    def test_normal_is_tau2(self):
        assert efficacy_variance(Normal(), np.array([0.3, 2.5])) == pytest.approx(2.5, rel=1e-12)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            efficacy_variance(Binary(), 1.0)

    def test_singular_information(self):
        with pytest.raises(SingularInformation):
            Poisson().info(0.0)

    @pytest.mark.parametrize("name,eff", SCALAR)
    def test_finite_difference_oracle(self, name, eff):
        # Fisher information from a central second difference of the expected log-density
        fam = get_family(name, eff)
        rng = np.random.Generator(np.random.Philox(7))
        for theta in _interior(fam, rng, 100):
            step = 1e-3 * (min(theta, 1 - theta) if isinstance(fam, Binary) else theta)
            if isinstance(fam, Binary):
                expected = lambda u: theta * math.log(u) + (1 - theta) * math.log(1 - u)
            elif isinstance(fam, Poisson):
                expected = lambda u: theta * math.log(u) - u
            else:
                expected = lambda u: -math.log(u) - theta / u
            d2 = lambda s: -(expected(theta + s) - 2 * expected(theta) + expected(theta - s)) / s**2
            info = (4 * d2(step / 2) - d2(step)) / 3  # Richardson
            dh = (float(fam.h(theta + step)) - float(fam.h(theta - step))) / (2 * step)
            assert efficacy_variance(fam, theta) == pytest.approx(dh * dh / info, rel=1e-6)


class TestKlDivergence:
    def test_poisson_identity(self):
        assert kl_divergence(Poisson(), 3.3, 3.3) == 0.0

    def test_binary_value(self):
        assert kl_divergence(Binary(), 0.5, 0.25) == pytest.approx(0.143841, abs=1e-6)

    def test_poisson_value(self):
        assert kl_divergence(Poisson(), 2.0, 1.0) == pytest.approx(0.386294, abs=1e-6)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            kl_divergence(Binary(), 0.5, 1.2)

    def test_binary_summation_oracle(self):
        rng = np.random.Generator(np.random.Philox(11))
        for p0, p in rng.uniform(0.02, 0.98, (50, 2)):
            x = np.arange(2)
            f0 = binom.pmf(x, 1, p0)
            oracle = float(np.sum(f0 * (binom.logpmf(x, 1, p0) - binom.logpmf(x, 1, p))))
            assert kl_divergence(Binary(), p0, p) == pytest.approx(oracle, abs=1e-8)

    def test_poisson_summation_oracle(self):
        rng = np.random.Generator(np.random.Philox(12))
        for l0, l in rng.uniform(0.1, 30.0, (50, 2)):
            x = np.arange(int(l0 + 40 * math.sqrt(l0) + 50))
            f0 = poisson.pmf(x, l0)
            oracle = float(np.sum(f0 * (poisson.logpmf(x, l0) - poisson.logpmf(x, l))))
            assert kl_divergence(Poisson(), l0, l) == pytest.approx(oracle, abs=1e-8)

    @pytest.mark.parametrize("name,eff", SCALAR)
    def test_kl_derivatives_match_finite_differences(self, name, eff):
        fam = get_family(name, eff)
        rng = np.random.Generator(np.random.Philox(13))
        for t0, t in zip(_interior(fam, rng, 20), _interior(fam, rng, 20)):
            v, d1, d2 = fam.kl_derivs(t0, t)
            h = 1e-5 * t
            assert d1 == pytest.approx((fam.kl(t0, t + h) - fam.kl(t0, t - h)) / (2 * h), rel=1e-5, abs=1e-7)
            fd2 = (fam.kl_derivs(t0, t + h)[1] - fam.kl_derivs(t0, t - h)[1]) / (2 * h)
            assert d2 == pytest.approx(fd2, rel=1e-5, abs=1e-7)

    @pytest.mark.parametrize("name", ["binary", "poisson"])
    def test_convex_in_second_argument(self, name):
        # random midpoint test
        fam = get_family(name)
        rng = np.random.Generator(np.random.Philox(14))
        pts = _interior(fam, rng, 300).reshape(-1, 3)
        for t0, a, b in pts:
            mid = fam.kl(t0, 0.5 * (a + b))
            assert mid <= 0.5 * (fam.kl(t0, a) + fam.kl(t0, b)) + 1e-12


class TestLoglikDerivatives:
    @pytest.mark.parametrize("name,eff", SCALAR)
    def test_match_finite_differences(self, name, eff):
        fam = get_family(name, eff)
        stat = {"binary": GroupStat(40, 13), "poisson": GroupStat(12, 57)}.get(name, GroupStat(9, 21.5))
        for t in (_interior(fam, np.random.default_rng(3), 10)):
            v, d1, d2 = fam.loglik_derivs(t, stat)
            h = 1e-6 * t
            assert d1 == pytest.approx((fam.loglik(t + h, stat) - fam.loglik(t - h, stat)) / (2 * h),
                                       rel=1e-5, abs=1e-5)
            assert d2 == pytest.approx((fam.loglik_derivs(t + h, stat)[1] - fam.loglik_derivs(t - h, stat)[1])
                                       / (2 * h), rel=1e-5, abs=1e-5)


class TestInvariants:
    @pytest.mark.parametrize("name,eff", SCALAR)
    def test_efficacy_round_trip(self, name, eff):
        fam = get_family(name, eff)
        for t in _interior(fam, np.random.default_rng(5), 200):
            assert float(fam.h_inv(fam.h(t))) == pytest.approx(t, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("name,eff", SCALAR)
    def test_efficacy_strictly_monotone(self, name, eff):
        fam = get_family(name, eff)
        t = np.sort(_interior(fam, np.random.default_rng(6), 200))
        h = np.array([float(fam.h(v)) for v in t])
        d = np.diff(h)
        assert np.all(d > 0) or np.all(d < 0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_binary_kl_nonnegative(self, p0, p):
        assert kl_divergence(Binary(), p0, p) >= 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_poisson_kl_nonnegative(self, l0, l):
        assert kl_divergence(Poisson(), l0, l) >= -1e-12

    def test_normal_kl(self):
        fam = Normal()
        assert fam.kl(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        # equal variances: squared mean gap over twice the variance
        assert fam.kl(np.array([1.0, 2.0]), np.array([0.0, 2.0])) == pytest.approx(0.25)

    def test_fisher_information_positive_definite(self):
        for fam, theta in ((Binary(), 0.3), (Poisson(), 4.0), (Exponential(), 2.0),
                           (Normal(), np.array([0.0, 1.5]))):
            info = np.atleast_2d(fam.fisher_information(theta))
            np.testing.assert_allclose(info, info.T)
            assert np.all(np.linalg.eigvalsh(info) > 0)


class TestRegistry:
    def test_builtin_names(self):
        assert set(family_names()) >= {"binary", "poisson", "normal", "exponential"}

    def test_default_efficacy(self):
        assert get_family("poisson").efficacy.name == "negative"
        assert get_family("binary").efficacy.name == "identity"

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            get_family("weibull")

    def test_unsupported_efficacy(self):
        with pytest.raises(DomainError):
            get_family("binary", "log")

    def test_register_new_family(self):
        class Shifted(Poisson):
            name = "shifted"

        register_family("shifted", Shifted, "negative")
        fam = get_family("shifted")
        assert fam.key == "shifted/negative"
        assert fam != get_family("poisson")

    def test_family_equality_by_key(self):
        assert get_family("binary") == Binary("identity")
        assert get_family("binary", "logit") != Binary("identity")
