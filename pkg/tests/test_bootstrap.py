"""Resampling, studentized bootstrap samples, and the Gaussian KDE."""

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import kstest

import bootsprt.bootstrap as bootstrap_mod
from bootsprt.bootstrap import (
    BootstrapConfig,
    KdeDensity,
    bootstrap_studentized_samples,
    fit_kde,
    kde_eval,
    kde_log_eval,
    resample,
)
from bootsprt.errors import AllSamplesEqual, DegenerateBlock
from bootsprt.metrics import MEAN_REVENUE, QUERY_SUCCESS_RATE, Block, custom_metric

from conftest import block, session_data


def dense_log_kde(points, centers, bandwidth):
    """Reference log-density: plain log-sum-exp over every kernel."""
    z = (np.asarray(points)[:, None] - np.asarray(centers)[None, :]) / bandwidth
    return logsumexp(-0.5 * z * z, axis=1) - np.log(
        len(centers) * bandwidth * np.sqrt(2 * np.pi)
    )


class TestBootstrapConfig:
    def test_small_resample_count_rejected(self):
        with pytest.raises(ValueError):
            BootstrapConfig(n_boot=99)

    def test_bad_bandwidth_rule_rejected(self):
        with pytest.raises(ValueError):
            BootstrapConfig(bandwidth_rule="scott")
        with pytest.raises(ValueError):
            BootstrapConfig(bandwidth_rule=-0.1)

    def test_fixed_bandwidth_accepted(self):
        assert BootstrapConfig(bandwidth_rule=0.25).bandwidth_rule == 0.25


class TestResample:
    def test_single_record_block_forced(self, rng):
        b = block(queries=[3], successes=[2], revenue=[1.5])
        out = resample(b, rng)
        assert len(out) == 1
        assert out.data.queries[0] == 3 and out.data.revenue[0] == 1.5

    def test_length_always_matches(self, rng):
        b = block(revenue=np.arange(17.0))
        for _ in range(5):
            assert len(resample(b, rng)) == 17

    def test_two_record_pair_frequency(self):
        # exact multinomial probability of drawing (r1, r1) is 1/4
        b = block(revenue=[1.0, 2.0])
        rng = np.random.default_rng(99)
        hits = 0
        n_draws = 100_000
        for _ in range(n_draws):
            out = resample(b, rng)
            if out.data.revenue[0] == 1.0 and out.data.revenue[1] == 1.0:
                hits += 1
        assert abs(hits / n_draws - 0.25) < 0.01

    def test_deterministic_given_seed(self):
        b = block(revenue=np.arange(50.0))
        a = resample(b, np.random.default_rng(7)).data.revenue
        c = resample(b, np.random.default_rng(7)).data.revenue
        assert np.array_equal(a, c)


class TestStudentizedSamples:
    def test_constant_block_degenerate(self, rng):
        b = block(revenue=[2.0] * 200)
        with pytest.raises(DegenerateBlock):
            bootstrap_studentized_samples(b, MEAN_REVENUE, BootstrapConfig(n_boot=200), rng)

    def test_deterministic_given_seed(self):
        b = block(revenue=np.random.default_rng(3).exponential(1.0, 300))
        cfg = BootstrapConfig(n_boot=250)
        s1 = bootstrap_studentized_samples(b, MEAN_REVENUE, cfg, np.random.default_rng(11))
        s2 = bootstrap_studentized_samples(b, MEAN_REVENUE, cfg, np.random.default_rng(11))
        assert np.array_equal(s1, s2)

    def test_block_order_does_not_matter(self, rng):
        revenue = np.random.default_rng(8).exponential(1.0, 120)
        perm = np.random.default_rng(9).permutation(120)
        cfg = BootstrapConfig(n_boot=200)
        s1 = bootstrap_studentized_samples(
            block(revenue=revenue), MEAN_REVENUE, cfg, np.random.default_rng(5)
        )
        s2 = bootstrap_studentized_samples(
            block(revenue=revenue[perm], timestamps=np.arange(120)[perm]),
            MEAN_REVENUE,
            cfg,
            np.random.default_rng(5),
        )
        assert np.array_equal(s1, s2)

    def test_samples_approximately_pivotal(self):
        # studentized bootstrap of a mean on N(0,1) data is close to N(0,1)
        rng_data = np.random.default_rng(42)
        b = Block(0, session_data(revenue=rng_data.standard_normal(1000), validate=False))
        samples = bootstrap_studentized_samples(
            b, MEAN_REVENUE, BootstrapConfig(n_boot=2000), np.random.default_rng(1)
        )
        distance = kstest(samples, "norm").statistic
        assert distance < 0.05

    def test_mean_near_zero_on_symmetric_data(self):
        rng_data = np.random.default_rng(17)
        b = block(revenue=10.0 + rng_data.uniform(-1, 1, 1000))
        samples = bootstrap_studentized_samples(
            b, MEAN_REVENUE, BootstrapConfig(n_boot=2000), np.random.default_rng(2)
        )
        assert abs(samples.mean()) < 0.1

    def test_degenerate_resamples_are_redrawn(self, rng):
        # half the resamples of this 2-record block are constant and must be
        # replaced; the survivors all studentize to zero deviation
        b = block(queries=[1, 1], successes=[0, 1])
        samples = bootstrap_studentized_samples(
            b, QUERY_SUCCESS_RATE, BootstrapConfig(n_boot=150), rng
        )
        assert samples.shape == (150,)
        assert np.all(np.isfinite(samples))

    def test_redraw_budget_exhaustion(self, rng, monkeypatch):
        monkeypatch.setattr(bootstrap_mod, "_REDRAW_BUDGET", 1)
        b = block(queries=[1, 1], successes=[0, 1])
        with pytest.raises(DegenerateBlock):
            bootstrap_studentized_samples(b, QUERY_SUCCESS_RATE, BootstrapConfig(n_boot=150), rng)

    def test_generic_metric_path_matches_fast_path(self):
        revenue = np.random.default_rng(21).exponential(1.0, 80)
        b = block(revenue=revenue)
        slow = custom_metric("slow-mean", lambda blk: float(blk.data.revenue.mean()))
        cfg = BootstrapConfig(n_boot=120)
        fast_samples = bootstrap_studentized_samples(
            b, MEAN_REVENUE, cfg, np.random.default_rng(4)
        )
        slow_samples = bootstrap_studentized_samples(b, slow, cfg, np.random.default_rng(4))
        # same resample indices, same estimates; standard errors agree to
        # floating point (closed form vs jackknife identity)
        assert np.allclose(fast_samples, slow_samples, rtol=1e-9)


class TestFitKde:
    def test_single_sample_fixed_bandwidth_peak(self):
        h = 0.3
        density = fit_kde([0.0], h)
        assert kde_eval(density, 0.0) == pytest.approx(1.0 / (h * np.sqrt(2 * np.pi)), rel=1e-12)

    def test_silverman_needs_spread(self):
        with pytest.raises(AllSamplesEqual):
            fit_kde([1.0, 1.0, 1.0])

    def test_silverman_bandwidth_formula(self, rng):
        samples = rng.standard_normal(400)
        sd = samples.std(ddof=1)
        iqr = np.subtract(*np.percentile(samples, [75, 25]))
        expected = 0.9 * min(sd, iqr / 1.34) * 400 ** (-0.2)
        assert fit_kde(samples).bandwidth == pytest.approx(expected, rel=1e-12)

    def test_symmetric_samples_give_symmetric_density(self):
        density = fit_kde([-2.0, -1.0, -0.25, 0.25, 1.0, 2.0], 0.5)
        xs = np.linspace(0.0, 6.0, 201)
        left = density.log_pdf(-xs)
        right = density.log_pdf(xs)
        assert np.allclose(left, right, rtol=1e-12, atol=1e-12)

    def test_integrates_to_one(self, rng):
        samples = rng.standard_normal(500)
        density = fit_kde(samples)
        h = density.bandwidth
        lo = samples.min() - 12 * h
        hi = samples.max() + 12 * h
        xs = np.linspace(lo, hi, 100_001)
        integral = np.trapezoid(density.pdf(xs), xs)
        assert integral == pytest.approx(1.0, abs=1e-6)

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            fit_kde([], 0.4)


class TestKdeEval:
    def test_far_point_log_density_finite(self):
        density = fit_kde([0.0, 0.5, 1.0], 0.2)
        x = 1.0 + 50 * 0.2
        assert np.isfinite(kde_log_eval(density, x))
        # a really absurd distance still yields a finite log-density
        assert np.isfinite(kde_log_eval(density, 1e120))

    def test_monotone_decay_from_single_center(self):
        density = fit_kde([0.0], 1.0)
        assert kde_eval(density, 1.0) > kde_eval(density, 2.0)

    def test_center_dominates_farther_points(self):
        density = fit_kde([0.0], 0.7)
        at_center = kde_eval(density, 0.0)
        for x in (0.3, -1.2, 4.0):
            assert at_center >= kde_eval(density, x)

    def test_strictly_positive_within_range(self, rng):
        density = fit_kde(rng.standard_normal(100))
        assert np.all(density.pdf(np.linspace(-8, 8, 101)) > 0)

    def test_matches_dense_logsumexp_oracle(self, rng):
        centers = rng.standard_normal(300)
        density = fit_kde(centers, 0.31)
        points = np.concatenate([rng.uniform(-6, 6, 500), [25.0, -33.0]])
        ref = dense_log_kde(points, centers, 0.31)
        got = density.log_pdf(points)
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-10)

    def test_scalar_and_array_agree(self, rng):
        density = fit_kde(rng.standard_normal(64))
        xs = rng.uniform(-3, 3, 10)
        vec = density.log_pdf(xs)
        assert vec.shape == (10,)
        for i, x in enumerate(xs):
            assert density.log_pdf(float(x)) == vec[i]

    def test_rejects_nonfinite_point(self, rng):
        density = fit_kde(rng.standard_normal(64))
        with pytest.raises(ValueError):
            density.log_pdf(np.inf)


class TestKdeBeatsNormalApproximation:
    def test_average_heldout_loglik(self):
        # the bootstrap KDE of the studentized mean should model skewed data
        # better than the standard normal does
        rng_data = np.random.default_rng(1234)
        n = 500
        theta_true = float(np.exp(0.5))  # lognormal(0, 1) mean
        b = Block(0, session_data(revenue=rng_data.lognormal(0.0, 1.0, n), validate=False))
        samples = bootstrap_studentized_samples(
            b, MEAN_REVENUE, BootstrapConfig(n_boot=2000), np.random.default_rng(5)
        )
        density = fit_kde(samples)

        replicates = rng_data.lognormal(0.0, 1.0, (4000, n))
        means = replicates.mean(axis=1)
        ses = replicates.std(axis=1, ddof=1) / np.sqrt(n)
        held_out = (means - theta_true) / ses
        kde_loglik = density.log_pdf(held_out).mean()
        normal_loglik = np.mean(-0.5 * held_out**2 - 0.5 * np.log(2 * np.pi))
        assert kde_loglik > normal_loglik
