import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retplan.errors import DomainError, RangeError
from retplan.families import Normal, get_family
from retplan.hypothesis import RetentionHypothesis, boundary_substitute, contrast


class TestContrast:
    def test_binary_depression_rates(self, binary_hyp):
        eta = contrast(binary_hyp(0.8), 0.50, 0.3690, 0.2955).eta
        assert eta == pytest.approx(0.50 - 0.8 * 0.3690 - 0.2 * 0.2955, abs=1e-12)
        assert eta == pytest.approx(0.1457, abs=1e-4)

    def test_poisson_epilepsy_means(self, poisson_hyp):
        assert contrast(poisson_hyp(0.5), 16.00, 16.39, 18.78).eta == pytest.approx(1.585, abs=1e-12)

    @pytest.mark.parametrize("delta", [0.0, 0.3, 1.0, 1.7])
    def test_equal_parameters_on_boundary(self, binary_hyp, poisson_hyp, delta):
        assert contrast(binary_hyp(delta), 0.4, 0.4, 0.4).eta == pytest.approx(0.0, abs=1e-15)
        assert contrast(poisson_hyp(delta), 3.0, 3.0, 3.0).eta == pytest.approx(0.0, abs=1e-15)

    def test_sign_classifies(self, binary_hyp):
        c = contrast(binary_hyp(0.8), 0.5, 0.369, 0.2955)
        assert c.in_alternative
        assert not contrast(binary_hyp(0.8), 0.3, 0.369, 0.2955).in_alternative

    def test_domain_error(self, binary_hyp):
        with pytest.raises(DomainError):
            contrast(binary_hyp(0.8), 1.2, 0.3, 0.2)

    def test_negative_margin_rejected(self):
        with pytest.raises(DomainError):
            RetentionHypothesis(get_family("binary"), -0.1)

    def test_coefficients(self, binary_hyp):
        hyp = binary_hyp(0.6)
        np.testing.assert_allclose(hyp.coefficients, [1.0, -0.6, -0.4])
        np.testing.assert_allclose(hyp.variance_coefficients, [1.0, 0.36, 0.16])


class TestBoundarySubstitute:
    def test_binary_affine_combination(self, binary_hyp):
        assert boundary_substitute(binary_hyp(0.7), 0.5, 0.1) == pytest.approx(0.38, abs=1e-12)

    def test_poisson_projected_triple(self, poisson_hyp):
        assert boundary_substitute(poisson_hyp(0.5), 0.41, 0.87) == pytest.approx(0.64, abs=1e-12)

    @pytest.mark.parametrize("delta", [0.0, 0.5, 1.0, 2.0])
    def test_fixed_point(self, binary_hyp, delta):
        assert boundary_substitute(binary_hyp(delta), 0.27, 0.27) == pytest.approx(0.27, abs=1e-15)

    def test_range_error_beyond_unit_margin(self, binary_hyp):
        with pytest.raises(RangeError):
            boundary_substitute(binary_hyp(2.0), 0.9, 0.2)

    def test_poisson_range_error(self, poisson_hyp):
        # -1.5*lam_R + 0.5*lam_P must stay negative
        with pytest.raises(RangeError):
            boundary_substitute(poisson_hyp(1.5), 1.0, 4.0)

    @pytest.mark.parametrize("name,eff", [("binary", "identity"), ("binary", "logit"),
                                          ("poisson", "negative"), ("exponential", "log")])
    def test_random_draws_land_on_boundary(self, name, eff):
        fam = get_family(name, eff)
        rng = np.random.Generator(np.random.Philox(21))
        for _ in range(200):
            hyp = RetentionHypothesis(fam, float(rng.uniform(0.0, 1.0)))
            if name == "binary":
                r, p = rng.uniform(0.01, 0.99, 2)
            else:
                r, p = rng.uniform(0.1, 20.0, 2)
            t = boundary_substitute(hyp, r, p)
            assert contrast(hyp, t, r, p).eta == pytest.approx(0.0, abs=1e-12)

    def test_normal_keeps_variance(self):
        hyp = RetentionHypothesis(Normal(), 0.6)
        t = boundary_substitute(hyp, np.array([2.0, 1.3]), np.array([0.5, 1.3]))
        np.testing.assert_allclose(t, [1.4, 1.3])


class TestNormalInvariance:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(0.0, 1.5),
           st.floats(-100, 100))
    def test_shift(self, mu, delta, c):
        hyp = RetentionHypothesis(Normal(), delta)
        base = contrast(hyp, *(np.array([m, 1.0]) for m in mu)).eta
        shifted = contrast(hyp, *(np.array([m + c, 1.0]) for m in mu)).eta
        assert shifted == pytest.approx(base, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(0.0, 1.5),
           st.floats(0.01, 100))
    def test_scale(self, mu, delta, c):
        hyp = RetentionHypothesis(Normal(), delta)
        base = contrast(hyp, *(np.array([m, 1.0]) for m in mu)).eta
        scaled = contrast(hyp, *(np.array([m * c, 1.0]) for m in mu)).eta
        assert scaled == pytest.approx(c * base, abs=1e-9 * max(1.0, c))
        if abs(base) > 1e-9:
            assert np.sign(scaled) == np.sign(base)
