"""Tests for rectified mean estimation and the normal quantile helper."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from ftppi.allocate import FeasibilityInput, variance_discriminant
from ftppi.core import (
    InsufficientDataError,
    LabeledDataset,
    ParameterError,
    Predictor,
    UnlabeledDataset,
)
from ftppi.ppi_mean import (
    Method,
    ft_only_estimate,
    ft_only_report,
    normal_quantile,
    ppi_mean_ci,
    ppi_mean_estimate,
    ppi_mean_variance_hat,
    r2_criterion,
    sample_mean_estimate,
)
from ftppi.scaling import ScalingLaw, eval_variance


def linear_predictor(slope: float = 1.0, intercept: float = 0.0, s: int = 1) -> Predictor:
    return Predictor(lambda xs: intercept + slope * xs[:, 0], s=s, label="linear")


def erfc_bisection_quantile(p: float) -> float:
    """Slow reference inverse CDF: bisection on 0.5*erfc(-x/sqrt(2)) = p."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2.0)) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestNormalQuantile:
    def test_standard_values(self):
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-10)
        assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
        assert normal_quantile(0.84134474606854293) == pytest.approx(1.0, abs=1e-9)

    def test_against_scipy(self):
        ps = np.concatenate(
            [
                np.geomspace(1e-12, 0.4, 40),
                np.linspace(0.41, 0.59, 10),
                1.0 - np.geomspace(1e-12, 0.4, 40),
            ]
        )
        for p in ps:
            assert normal_quantile(float(p)) == pytest.approx(
                float(scipy.stats.norm.ppf(p)), abs=1e-9
            )

    def test_against_bisection_reference(self):
        for p in (0.001, 0.025, 0.3, 0.5, 0.77, 0.975, 0.9999):
            assert normal_quantile(p) == pytest.approx(
                erfc_bisection_quantile(p), abs=1e-9
            )

    @given(st.floats(1e-7, 0.5))
    def test_symmetry(self, p):
        # deeper tails are limited by rounding of 1 - p itself, not the
        # quantile routine: ulp(1)/pdf(x) passes 1e-8 near p = 1e-7
        assert normal_quantile(p) == pytest.approx(-normal_quantile(1.0 - p), abs=1e-8)

    @given(st.floats(1e-9, 0.5), st.floats(1e-4, 0.49))
    def test_monotone(self, p, bump):
        q = min(p + bump, 1.0 - 1e-9)
        assert normal_quantile(q) > normal_quantile(p)

    def test_rejects_bad_p(self):
        for p in (0.0, 1.0, -0.5, 2.0, float("nan"), "0.5", None):
            with pytest.raises(ParameterError):
                normal_quantile(p)


def small_case():
    labeled = LabeledDataset(np.array([[1.0], [2.0], [4.0]]), np.array([3.0, 5.0, 6.0]))
    unlabeled = UnlabeledDataset(np.array([[0.0], [2.0], [4.0], [6.0]]))
    return labeled, unlabeled


class TestPpiMeanEstimate:
    def test_hand_computed(self):
        labeled, unlabeled = small_case()
        f = linear_predictor(slope=1.0, intercept=1.0)
        # residuals: 3-2, 5-3, 6-5 -> mean 4/3; pool preds: 1,3,5,7 -> mean 4
        est = ppi_mean_estimate(labeled, unlabeled, f)
        assert est == pytest.approx(4.0 + 4.0 / 3.0, rel=1e-12)

    def test_constant_predictor_reduces_to_sample_mean(self):
        labeled, unlabeled = small_case()
        f = Predictor.from_scalar(lambda row: 2.5, s=0)
        est = ppi_mean_estimate(labeled, unlabeled, f)
        assert est == pytest.approx(float(np.mean(labeled.ys)), rel=1e-14)

    def test_shift_invariance(self):
        labeled, unlabeled = small_case()
        base = ppi_mean_estimate(labeled, unlabeled, linear_predictor(2.0, 0.0))
        shifted = ppi_mean_estimate(labeled, unlabeled, linear_predictor(2.0, 17.0))
        assert shifted == pytest.approx(base, rel=1e-12)

    def test_unbiased_under_biased_predictor(self):
        rng = np.random.default_rng(905)
        true_mean = 1.4
        reps = 4000
        ests = np.empty(reps)
        f = linear_predictor(slope=1.0, intercept=0.9)  # deliberately biased
        for r in range(reps):
            x = rng.standard_normal((60, 1))
            y = true_mean + 0.8 * x[:, 0] + 0.4 * rng.standard_normal(60)
            xu = rng.standard_normal((400, 1))
            ests[r] = ppi_mean_estimate(
                LabeledDataset(x, y), UnlabeledDataset(xu), f
            )
        se = float(np.std(ests, ddof=1)) / math.sqrt(reps)
        assert abs(float(np.mean(ests)) - true_mean) < 3 * se


class TestVarianceHat:
    def test_divisors_and_total(self):
        labeled, unlabeled = small_case()
        f = linear_predictor(1.0, 1.0)
        parts = ppi_mean_variance_hat(labeled, unlabeled, f)
        resid = labeled.ys - (1.0 + labeled.xs[:, 0])
        preds = 1.0 + unlabeled.xs[:, 0]
        assert parts.sigma_resid_sq == pytest.approx(float(np.var(resid, ddof=1)))
        assert parts.sigma_f_sq == pytest.approx(float(np.var(preds, ddof=1)))
        assert parts.total == pytest.approx(
            parts.sigma_resid_sq / 3 + parts.sigma_f_sq / 4
        )

    def test_matches_monte_carlo_variance(self):
        rng = np.random.default_rng(77)
        n, m, reps = 200, 400, 3000
        f = linear_predictor(slope=2.0)
        ests = np.empty(reps)
        for r in range(reps):
            x = rng.standard_normal((n, 1))
            y = 1.0 + x[:, 0] + 0.7 * rng.standard_normal(n)
            xu = rng.standard_normal((m, 1))
            ests[r] = ppi_mean_estimate(LabeledDataset(x, y), UnlabeledDataset(xu), f)
        # residual y - 2x = 1 - x + e -> var 1 + 0.49; predictions 2x -> var 4
        analytic = (1.0 + 0.49) / n + 4.0 / m
        empirical = float(np.var(ests, ddof=1))
        assert empirical == pytest.approx(analytic, rel=0.10)

    def test_needs_two_samples_each_side(self):
        f = linear_predictor()
        one_l = LabeledDataset(np.array([[1.0]]), np.array([2.0]))
        one_u = UnlabeledDataset(np.array([[1.0]]))
        _, unlabeled = small_case()
        labeled, _ = small_case()
        with pytest.raises(InsufficientDataError):
            ppi_mean_variance_hat(one_l, unlabeled, f)
        with pytest.raises(InsufficientDataError):
            ppi_mean_variance_hat(labeled, one_u, f)


class TestPpiMeanCi:
    def test_interval_shape(self):
        labeled, unlabeled = small_case()
        f = linear_predictor(1.0, 1.0)
        rep = ppi_mean_ci(labeled, unlabeled, f, delta=0.05)
        z = normal_quantile(0.975)
        half = z * math.sqrt(rep.variance_hat)
        assert rep.ci_low == pytest.approx(rep.estimate - half, rel=1e-12)
        assert rep.ci_high == pytest.approx(rep.estimate + half, rel=1e-12)
        assert rep.method is Method.FT_PPI
        assert rep.n_ppi == 3 and rep.m == 4
        assert "small sample" in rep.notes

    def test_no_note_for_big_samples(self):
        rng = np.random.default_rng(3)
        labeled = LabeledDataset(rng.standard_normal((40, 1)), rng.standard_normal(40))
        unlabeled = UnlabeledDataset(rng.standard_normal((50, 1)))
        rep = ppi_mean_ci(labeled, unlabeled, linear_predictor(), 0.05)
        assert rep.notes == ""

    @given(st.floats(0.01, 0.3), st.floats(0.01, 0.3))
    def test_smaller_delta_wider_interval(self, d1, d2):
        labeled, unlabeled = small_case()
        f = linear_predictor(1.0, 1.0)
        lo, hi = sorted([d1, d2])
        wide = ppi_mean_ci(labeled, unlabeled, f, lo)
        narrow = ppi_mean_ci(labeled, unlabeled, f, hi)
        assert wide.ci_high - wide.ci_low >= narrow.ci_high - narrow.ci_low - 1e-12

    def test_delta_validation(self):
        labeled, unlabeled = small_case()
        f = linear_predictor()
        for bad in (0.0, 1.0, -0.1, float("nan"), "x"):
            with pytest.raises(ParameterError):
                ppi_mean_ci(labeled, unlabeled, f, bad)

    def test_coverage_sanity(self):
        rng = np.random.default_rng(1234)
        n, m, reps, delta = 200, 2000, 1500, 0.1
        true_mean = -0.3
        f = linear_predictor(slope=1.0, intercept=0.2)
        hits = 0
        for r in range(reps):
            x = rng.standard_normal((n, 1))
            y = true_mean + x[:, 0] + 0.5 * rng.standard_normal(n)
            xu = rng.standard_normal((m, 1))
            rep = ppi_mean_ci(LabeledDataset(x, y), UnlabeledDataset(xu), f, delta)
            hits += rep.ci_low <= true_mean <= rep.ci_high
        coverage = hits / reps
        # 0.90 nominal; 3 binomial SEs is about 0.023 at 1500 reps
        assert 0.86 <= coverage <= 0.94


class TestR2Criterion:
    def test_hand_values(self):
        crit = r2_criterion(1.0, 4.0, 100, 1000)
        assert crit.r2_s == pytest.approx(0.75)
        assert crit.fraction == pytest.approx(0.1)
        assert crit.gain == pytest.approx(0.65)

    def test_agrees_with_variance_discriminant(self):
        # gain * var_y * n equals the variance-advantage discriminant
        rng = np.random.default_rng(400)
        for _ in range(200):
            law = ScalingLaw(
                float(rng.uniform(0.05, 10)),
                float(rng.uniform(0.05, 2.0)),
                float(rng.uniform(0.0, 2.0)),
            )
            n = int(rng.integers(10, 5000))
            s = int(rng.integers(1, n))
            var_y = float(rng.uniform(0.5, 12))
            v_s = eval_variance(law, s)
            crit = r2_criterion(v_s, var_y, s, n)
            q = variance_discriminant(
                FeasibilityInput(law=law, n=n, sigma_sq=var_y), float(s)
            )
            assert crit.gain * var_y * n == pytest.approx(q, rel=1e-9, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ParameterError):
            r2_criterion(1.0, 0.0, 1, 10)
        with pytest.raises(ParameterError):
            r2_criterion(-0.5, 1.0, 1, 10)
        with pytest.raises(ParameterError):
            r2_criterion(1.0, 1.0, 0, 10)
        with pytest.raises(ParameterError):
            r2_criterion(1.0, 1.0, 10, 10)
        with pytest.raises(ParameterError):
            r2_criterion(1.0, 1.0, 2.5, 10)


class TestBaselines:
    def test_sample_mean_report(self):
        rng = np.random.default_rng(8)
        ys = rng.standard_normal(100) + 3.0
        labeled = LabeledDataset(rng.standard_normal((100, 1)), ys)
        rep = sample_mean_estimate(labeled, 0.05)
        assert rep.estimate == pytest.approx(float(np.mean(ys)))
        assert rep.variance_hat == pytest.approx(float(np.var(ys, ddof=1)) / 100)
        assert rep.method is Method.SAMPLE_MEAN
        assert rep.m == 0
        assert rep.notes == ""

    def test_sample_mean_needs_two(self):
        with pytest.raises(InsufficientDataError):
            sample_mean_estimate(
                LabeledDataset(np.array([[1.0]]), np.array([1.0])), 0.05
            )

    def test_ft_only_sees_bias(self):
        rng = np.random.default_rng(9)
        xu = rng.standard_normal((5000, 1))
        unlabeled = UnlabeledDataset(xu)
        f = linear_predictor(slope=0.0, intercept=2.0)
        assert ft_only_estimate(unlabeled, f) == pytest.approx(2.0)
        rep = ft_only_report(unlabeled, f, 0.05)
        assert rep.method is Method.FT_ONLY
        assert rep.n_ppi == 0
        assert "ignores prediction bias" in rep.notes

    def test_ft_only_needs_two(self):
        f = linear_predictor()
        with pytest.raises(InsufficientDataError):
            ft_only_report(UnlabeledDataset(np.array([[1.0]])), f, 0.05)
