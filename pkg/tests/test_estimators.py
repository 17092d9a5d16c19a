"""Point estimators: reductions, degenerate-statistic conventions, and the
hierarchical Bayes shrink function against brute-force oracles."""

import mpmath
import numpy as np
import pytest

from poolshrink.estimators import (
    EstimatorConfig,
    bayes_oracle_normal,
    bayes_oracle_uniform,
    class1_estimate,
    class2_estimate,
    default_eb_constant,
    default_heb_constants,
    eb_estimate,
    estimate,
    heb_estimate,
    hb_estimate,
    hb_small_f_factor,
    js_estimate,
    lincomb_estimate,
    phi_hb,
    pt_estimate,
    pt_threshold,
)
from poolshrink.model import Sample, sample_draw, scalar_spec
from poolshrink.statistics import compute_pooled_stats

BENCH_A = -7.72  # HB constant for the benchmark model (c=1, L=0)


def benchmark_spec(mu=(0, 0, 0, 0, 0)):
    return scalar_spec(5, 5, 20, [0.1 * i for i in range(1, 6)], 2.0, mu)


def random_sample(spec, seed):
    return sample_draw(spec, np.random.default_rng(seed))


def trapezoid_phi_hb(F, qa, m, panels=10_000_000):
    """Brute-force trapezoid evaluation of the L=0 shrink function."""
    num = 0.0
    den = 0.0
    edges = np.linspace(0.0, F, 11)
    for lo, hi in zip(edges[:-1], edges[1:]):
        x = np.linspace(lo, hi, panels // 10 + 1)
        w = (1.0 + x) ** -(m + 1.0)
        num += np.trapezoid(x**qa * w, x)
        den += np.trapezoid(x ** (qa - 1.0) * w, x)
    return num / den


class TestPhiHb:
    def test_large_f_limit(self):
        # sup phi_hb = (p(k-1) + 2a)/(n - 2(a+c)); equals 3/22 at the
        # benchmark constants by construction.
        val = phi_hb(1e6, 1.0, 5, 5, 20, BENCH_A, 1.0, 0.0)
        assert val == pytest.approx((20 + 2 * BENCH_A) / (20 - 2 * (BENCH_A + 1)), rel=1e-10)
        assert val == pytest.approx(3.0 / 22.0, rel=1e-10)

    def test_small_f_shrink_factor(self):
        factor = phi_hb(1e-6, 1.0, 5, 5, 20, BENCH_A, 1.0, 0.0) / 1e-6
        assert factor == pytest.approx(2.28 / 3.28, abs=1e-4)
        assert hb_small_f_factor(5, 5, BENCH_A) == pytest.approx(2.28 / 3.28, rel=1e-12)

    def test_matches_trapezoid_oracle_at_f_one(self):
        val = phi_hb(1.0, 1.0, 5, 5, 20, BENCH_A, 1.0, 0.0)
        oracle = trapezoid_phi_hb(1.0, 10.0 + BENCH_A, 19.0)
        assert val == pytest.approx(oracle, abs=1e-8)

    def test_zero_l_independent_of_s(self):
        f = np.array([0.3, 1.0, 7.5])
        v1 = phi_hb(f, 0.01, 5, 5, 20, BENCH_A, 1.0, 0.0)
        v2 = phi_hb(f, 100.0, 5, 5, 20, BENCH_A, 1.0, 0.0)
        np.testing.assert_array_equal(v1, v2)

    def test_positive_l_matches_mpmath_oracle(self):
        mpmath.mp.dps = 30
        p, k, n, a, c, L = 5, 5, 20, BENCH_A, 1.0, 0.8
        F, S = 1.3, 2.4
        qa = p * (k - 1) / 2.0 + a
        m = (n + p * (k - 1)) / 2.0 - c

        def outer(e):
            return mpmath.quad(
                lambda x: x**e
                * (1 + x) ** -(m + 1)
                * mpmath.gammainc(m + 1, L * S * (x + 1) / 2, mpmath.inf, regularized=True),
                [0, F],
            )

        oracle = float(outer(qa) / outer(qa - 1.0))
        assert phi_hb(F, S, p, k, n, a, c, L) == pytest.approx(oracle, rel=1e-9)

    def test_positive_l_decreasing_in_s(self):
        vals = [phi_hb(2.0, s, 5, 5, 20, BENCH_A, 1.0, 1.0) for s in (0.5, 2.0, 8.0, 32.0)]
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))

    def test_l_to_zero_recovers_zero_l_path(self):
        lim = phi_hb(1.0, 1.0, 5, 5, 20, BENCH_A, 1.0, 1e-12)
        assert lim == pytest.approx(phi_hb(1.0, 1.0, 5, 5, 20, BENCH_A, 1.0, 0.0), rel=1e-9)

    def test_monotone_nondecreasing_in_f(self):
        f = np.geomspace(1e-4, 1e3, 200)
        vals = phi_hb(f, 1.0, 5, 5, 20, BENCH_A, 1.0, 0.0)
        assert np.all(np.diff(vals) >= -1e-12)

    def test_domain_violations(self):
        with pytest.raises(ValueError, match="p\\(k-1\\)/2"):
            phi_hb(1.0, 1.0, 5, 5, 20, -10.5, 1.0, 0.0)
        with pytest.raises(ValueError, match="n/2"):
            phi_hb(1.0, 1.0, 5, 5, 20, 9.5, 1.0, 0.0)
        with pytest.raises(ValueError, match="nonnegative"):
            phi_hb(1.0, 1.0, 5, 5, 20, BENCH_A, 1.0, -1.0)


class TestPtEstimate:
    def test_threshold_value(self):
        # (p(k-1)/n) F_{20,20,0.05} = 1.0 * 2.1242 at the benchmark dims.
        assert pt_threshold(5, 5, 20, 0.05) == pytest.approx(2.1242, abs=2e-4)

    def test_all_equal_returns_pooled(self):
        spec = benchmark_spec()
        x = np.tile(np.linspace(1, 5, 5), (5, 1))
        sample = Sample(X=x, S=3.0)
        np.testing.assert_allclose(pt_estimate(sample, spec, 0.05), x[0], rtol=1e-12)

    def test_huge_dispersion_returns_x1(self):
        spec = benchmark_spec()
        x = np.zeros((5, 5))
        x[0] = 1e6
        sample = Sample(X=x, S=1e-6)
        np.testing.assert_array_equal(pt_estimate(sample, spec, 0.05), x[0])


class TestJsEstimate:
    def test_benchmark_coefficient(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 0)
        x1 = sample.X[0]
        norm2 = float(x1 @ np.linalg.solve(spec.V[0], x1))
        expected = x1 * (1.0 - (3.0 / 22.0) * sample.S / norm2)
        np.testing.assert_allclose(js_estimate(sample, spec), expected, rtol=1e-12)

    def test_s_to_zero_returns_x1(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 1)
        tiny = Sample(X=sample.X, S=1e-300)
        np.testing.assert_allclose(js_estimate(tiny, spec), sample.X[0], rtol=1e-12)

    def test_p_two_boundary_gives_x1(self):
        spec = scalar_spec(2, 3, 10, [1.0, 1.0, 1.0], 1.0, [0.0, 0.0, 0.0])
        sample = random_sample(spec, 2)
        np.testing.assert_allclose(js_estimate(sample, spec), sample.X[0], rtol=1e-12)

    def test_zero_x1_returns_zero(self):
        spec = benchmark_spec()
        x = np.zeros((5, 5))
        x[1:] = 1.0
        sample = Sample(X=x, S=2.0)
        np.testing.assert_array_equal(js_estimate(sample, spec), np.zeros(5))


class TestClassEstimates:
    def test_zero_phi_returns_x1(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 3)
        out = class1_estimate(sample, spec, lambda f, s: np.zeros_like(np.asarray(f)))
        np.testing.assert_allclose(out, sample.X[0], rtol=1e-12)

    def test_identity_phi_returns_pooled(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 4)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        out = class1_estimate(sample, spec, lambda f, s: f)
        np.testing.assert_allclose(out, st.nu_hat, rtol=1e-10)

    def test_clipped_phi_midpoint(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 5)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        a0 = st.F / 2.0
        out = class1_estimate(sample, spec, lambda f, s: np.minimum(a0, f))
        expected = sample.X[0] - 0.5 * (sample.X[0] - st.nu_hat)
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_class2_matches_heb_with_clipped_handles(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 6)
        a0, b0 = 3.0 / 44.0, 3.0 / 44.0
        via_class2 = class2_estimate(
            sample,
            spec,
            lambda f, s: np.minimum(a0, f),
            lambda g, s: np.minimum(b0, g),
        )
        np.testing.assert_allclose(via_class2, heb_estimate(sample, spec, a0, b0), rtol=1e-12)


class TestEbEstimate:
    def test_default_constants(self):
        assert default_eb_constant(5, 5, 20) == pytest.approx(18.0 / 22.0)
        assert default_heb_constants(5, 5, 20) == (
            pytest.approx(18.0 / 22.0),
            pytest.approx(3.0 / 22.0),
        )

    def test_full_shrink_when_f_small(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 7)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        out = eb_estimate(sample, spec, a0=st.F * 2.0)
        np.testing.assert_allclose(out, st.nu_hat, rtol=1e-12)

    def test_partial_shrink_formula(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 8)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        a0 = st.F / 4.0
        out = eb_estimate(sample, spec, a0)
        expected = sample.X[0] - 0.25 * (sample.X[0] - st.nu_hat)
        np.testing.assert_allclose(out, expected, rtol=1e-12)


class TestHbEstimate:
    def test_lies_between_pooled_and_x1(self):
        spec = benchmark_spec(mu=(1, 0, -1, 2, 0))
        for seed in range(20):
            sample = random_sample(spec, seed)
            st = compute_pooled_stats(sample, spec.V, spec.Q)
            out = hb_estimate(sample, spec, BENCH_A, 1.0, 0.0)
            factor = np.divide(
                sample.X[0] - out,
                sample.X[0] - st.nu_hat,
                out=np.zeros(5),
                where=np.abs(sample.X[0] - st.nu_hat) > 1e-12,
            )
            live = np.abs(sample.X[0] - st.nu_hat) > 1e-12
            assert np.all(factor[live] >= -1e-12)
            assert np.all(factor[live] <= 1.0 + 1e-12)

    def test_f_zero_uses_small_f_limit(self):
        spec = benchmark_spec()
        x = np.tile(np.arange(5.0), (5, 1))
        sample = Sample(X=x, S=2.0)
        out = hb_estimate(sample, spec, BENCH_A, 1.0, 0.0)
        np.testing.assert_allclose(out, x[0], rtol=1e-12)

    def test_matches_class1_with_phi_handle(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 9)
        direct = hb_estimate(sample, spec, BENCH_A, 1.0, 0.0)
        via_class1 = class1_estimate(
            sample, spec, lambda f, s: phi_hb(f, s, 5, 5, 20, BENCH_A, 1.0, 0.0)
        )
        np.testing.assert_allclose(direct, via_class1, rtol=1e-12)


class TestHebEstimate:
    def test_zero_observations(self):
        spec = benchmark_spec()
        sample = Sample(X=np.zeros((5, 5)), S=2.0)
        np.testing.assert_array_equal(
            heb_estimate(sample, spec, 3 / 44, 3 / 44), np.zeros(5)
        )

    def test_b0_to_zero_recovers_eb(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 10)
        a0 = 3.0 / 22.0
        heb = heb_estimate(sample, spec, a0, 1e-14)
        np.testing.assert_allclose(heb, eb_estimate(sample, spec, a0), atol=1e-10)

    def test_double_shrink_formula(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 11)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        a0, b0 = 3.0 / 44.0, 3.0 / 44.0
        out = heb_estimate(sample, spec, a0, b0)
        expected = (
            sample.X[0]
            - min(a0 / st.F, 1.0) * (sample.X[0] - st.nu_hat)
            - min(b0 / st.G, 1.0) * st.nu_hat
        )
        np.testing.assert_allclose(out, expected, rtol=1e-12)


class TestBayesOracles:
    def test_diffuse_prior_limit(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 12)
        out = bayes_oracle_uniform(sample, spec, tau2=1e12, sigma2=1.0)
        np.testing.assert_allclose(out, sample.X[0], atol=1e-9)

    def test_point_prior_limit(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 13)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        out = bayes_oracle_uniform(sample, spec, tau2=1e-12, sigma2=1.0)
        np.testing.assert_allclose(out, st.nu_hat, atol=1e-9)

    def test_equal_variances_midpoint(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 14)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        out = bayes_oracle_uniform(sample, spec, tau2=1.0, sigma2=1.0)
        np.testing.assert_allclose(out, 0.5 * (sample.X[0] + st.nu_hat), rtol=1e-12)

    def test_normal_prior_flat_limit(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 15)
        flat = bayes_oracle_uniform(sample, spec, tau2=2.0, sigma2=1.5)
        out = bayes_oracle_normal(sample, spec, tau2=2.0, gamma2=1e12, sigma2=1.5)
        np.testing.assert_allclose(out, flat, atol=1e-9)

    def test_unit_variances_arithmetic(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 16)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        out = bayes_oracle_normal(sample, spec, tau2=1.0, gamma2=1.0, sigma2=1.0)
        expected = sample.X[0] - 0.5 * (sample.X[0] - st.nu_hat) - st.nu_hat / 3.0
        np.testing.assert_allclose(out, expected, rtol=1e-12)


class TestLincombEstimate:
    def test_first_basis_vector_reduces_to_class1(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 17)
        phi = lambda f, s: np.minimum(0.1, f)
        d = [1.0, 0.0, 0.0, 0.0, 0.0]
        np.testing.assert_allclose(
            lincomb_estimate(sample, spec, d, phi),
            class1_estimate(sample, spec, phi),
            rtol=1e-12,
        )

    def test_zero_phi_returns_weighted_sum(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 18)
        d = np.array([0.3, -0.1, 0.5, 0.2, 0.1])
        out = lincomb_estimate(sample, spec, d, lambda f, s: np.zeros_like(np.asarray(f)))
        np.testing.assert_allclose(out, d @ sample.X, rtol=1e-12)

    def test_equal_weights_linearity(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 19)
        st = compute_pooled_stats(sample, spec.V, spec.Q)
        phi = lambda f, s: np.minimum(0.2, f)
        d = np.full(5, 1.0 / 5.0)
        out = lincomb_estimate(sample, spec, d, phi)
        factor = float(phi(st.F, sample.S)) / st.F
        xbar = sample.X.mean(axis=0)
        np.testing.assert_allclose(out, xbar - factor * (xbar - st.nu_hat), rtol=1e-12)


class TestTranslationEquivariance:
    def test_deviation_based_estimators_shift_with_the_data(self):
        # PT, EB and HB depend on the data only through deviations, so
        # adding a common vector to every X_i adds it to the output.
        spec = benchmark_spec()
        sample = random_sample(spec, 30)
        shift = np.array([0.7, -1.2, 0.4, 2.0, -0.3])
        shifted = Sample(X=sample.X + shift, S=sample.S)
        np.testing.assert_allclose(
            pt_estimate(shifted, spec, 0.05),
            pt_estimate(sample, spec, 0.05) + shift,
            rtol=1e-10,
            atol=1e-12,
        )
        np.testing.assert_allclose(
            eb_estimate(shifted, spec, 3 / 22),
            eb_estimate(sample, spec, 3 / 22) + shift,
            rtol=1e-10,
            atol=1e-12,
        )
        np.testing.assert_allclose(
            hb_estimate(shifted, spec, BENCH_A, 1.0, 0.0),
            hb_estimate(sample, spec, BENCH_A, 1.0, 0.0) + shift,
            rtol=1e-9,
            atol=1e-10,
        )

    def test_zero_shrinking_estimators_are_not_equivariant(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 31)
        shift = np.full(5, 2.5)
        shifted = Sample(X=sample.X + shift, S=sample.S)
        js_diff = js_estimate(shifted, spec) - js_estimate(sample, spec)
        heb_diff = heb_estimate(shifted, spec, 3 / 44, 3 / 44) - heb_estimate(
            sample, spec, 3 / 44, 3 / 44
        )
        assert not np.allclose(js_diff, shift, atol=1e-6)
        assert not np.allclose(heb_diff, shift, atol=1e-6)


class TestEstimatorConfig:
    def test_dispatch_matches_direct_calls(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 20)
        cases = [
            (EstimatorConfig(kind="PT", alpha=0.05), pt_estimate(sample, spec, 0.05)),
            (EstimatorConfig(kind="JS"), js_estimate(sample, spec)),
            (EstimatorConfig(kind="EB", a0=3 / 22), eb_estimate(sample, spec, 3 / 22)),
            (
                EstimatorConfig(kind="HB", a=BENCH_A, c=1.0, L=0.0),
                hb_estimate(sample, spec, BENCH_A, 1.0, 0.0),
            ),
            (
                EstimatorConfig(kind="HEB", a0=3 / 44, b0=3 / 44),
                heb_estimate(sample, spec, 3 / 44, 3 / 44),
            ),
        ]
        for cfg, expected in cases:
            np.testing.assert_allclose(estimate(sample, spec, cfg), expected, rtol=1e-12)

    def test_validation_messages(self):
        spec = benchmark_spec()
        assert EstimatorConfig(kind="PT", alpha=1.5).validate(spec)
        assert EstimatorConfig(kind="EB").validate(spec)
        assert EstimatorConfig(kind="HEB", a0=0.1).validate(spec)
        assert EstimatorConfig(kind="HB", a=-10.5, c=1.0).validate(spec)
        assert EstimatorConfig(kind="LINCOMB", d=(1.0, 0.0)).validate(spec)
        assert not EstimatorConfig(kind="JS").validate(spec)
        assert EstimatorConfig(kind="nonsense").validate(spec)

    def test_dispatch_rejects_invalid(self):
        spec = benchmark_spec()
        sample = random_sample(spec, 21)
        with pytest.raises(ValueError):
            estimate(sample, spec, EstimatorConfig(kind="EB"))
