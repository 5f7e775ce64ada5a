"""Two-sample summaries and the sequential A/B runner."""

import numpy as np
import pytest

from bootsprt.abtest import AbBlockPair, ab_summary, run_ab_test
from bootsprt.bootstrap import BootstrapConfig
from bootsprt.errors import DegenerateBlock
from bootsprt.metrics import MEAN_REVENUE, QUERY_SUCCESS_RATE, Block, make_blocks
from bootsprt.msprt import MsprtState, NormalPrior

from conftest import block, session_data


def revenue_block(rng, n=120, scale=1.0, index=0):
    return block(revenue=scale * rng.exponential(1.0, n), index=index)


CFG = BootstrapConfig(n_boot=200)


class TestAbBlockPair:
    def test_size_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            AbBlockPair(revenue_block(rng, 10), revenue_block(rng, 11))

    def test_offset_must_be_finite(self, rng):
        with pytest.raises(ValueError):
            AbBlockPair(revenue_block(rng, 10), revenue_block(rng, 10), float("nan"))


class TestAbSummary:
    def test_identical_groups_zero_estimate(self, rng):
        b = revenue_block(rng)
        summary = ab_summary(AbBlockPair(b, b), MEAN_REVENUE, CFG, np.random.default_rng(0))
        assert summary.theta_hat == 0.0

    def test_offset_shifts_estimate_only(self, rng):
        x, y = revenue_block(rng), revenue_block(rng)
        base = ab_summary(AbBlockPair(x, y, 0.0), MEAN_REVENUE, CFG, np.random.default_rng(3))
        shifted = ab_summary(AbBlockPair(x, y, 0.25), MEAN_REVENUE, CFG, np.random.default_rng(3))
        assert shifted.theta_hat == base.theta_hat + 0.25
        assert shifted.sigma == base.sigma
        assert np.array_equal(shifted.density.centers, base.density.centers)

    def test_sigma_is_root_sum_square_of_group_errors(self, rng):
        x, y = revenue_block(rng), revenue_block(rng, scale=2.0)
        summary = ab_summary(AbBlockPair(x, y), MEAN_REVENUE, CFG, np.random.default_rng(1))
        se_x = MEAN_REVENUE.stderr(x)
        se_y = MEAN_REVENUE.stderr(y)
        assert summary.sigma == np.sqrt(se_x**2 + se_y**2)

    def test_swapping_groups_negates_estimate(self, rng):
        x, y = revenue_block(rng), revenue_block(rng, scale=1.5)
        fwd = ab_summary(AbBlockPair(x, y), MEAN_REVENUE, CFG, np.random.default_rng(2))
        rev = ab_summary(AbBlockPair(y, x), MEAN_REVENUE, CFG, np.random.default_rng(2))
        assert rev.theta_hat == -fwd.theta_hat
        assert rev.sigma == fwd.sigma

    def test_degenerate_group_raises(self, rng):
        dead = block(revenue=[1.0] * 120)
        live = revenue_block(rng)
        with pytest.raises(DegenerateBlock):
            ab_summary(AbBlockPair(dead, live), MEAN_REVENUE, CFG, np.random.default_rng(0))

    def test_deterministic_given_seed(self, rng):
        x, y = revenue_block(rng), revenue_block(rng)
        one = ab_summary(AbBlockPair(x, y), MEAN_REVENUE, CFG, np.random.default_rng(9))
        two = ab_summary(AbBlockPair(x, y), MEAN_REVENUE, CFG, np.random.default_rng(9))
        assert one.theta_hat == two.theta_hat
        assert np.array_equal(one.density.centers, two.density.centers)

    def test_ratio_metric_pair(self, rng):
        q = rng.integers(1, 6, 150)
        s = rng.binomial(q, 0.3)
        x = block(queries=q, successes=s)
        q2 = rng.integers(1, 6, 150)
        s2 = rng.binomial(q2, 0.4)
        y = block(queries=q2, successes=s2)
        summary = ab_summary(AbBlockPair(x, y), QUERY_SUCCESS_RATE, CFG, np.random.default_rng(4))
        expected = QUERY_SUCCESS_RATE.value(y) - QUERY_SUCCESS_RATE.value(x)
        assert summary.theta_hat == pytest.approx(expected)


class TestRunAbTest:
    def test_empty_streams(self):
        result = run_ab_test([], [], MEAN_REVENUE, prior=NormalPrior(tau=1.0))
        assert result.decision.tag == "continue"
        assert result.decision.p_value == 1.0
        assert result.p_values == [] and result.records == []
        assert result.pairs_processed == 0

    def test_lockstep_stops_at_shorter_stream(self, rng):
        a = [revenue_block(rng, index=i) for i in range(3)]
        b = [revenue_block(rng, index=i) for i in range(5)]
        result = run_ab_test(a, b, MEAN_REVENUE, prior=NormalPrior(tau=0.5), cfg=CFG)
        assert result.pairs_processed == 3

    def test_record_fields(self, rng):
        a = [revenue_block(rng, index=0)]
        b = [revenue_block(rng, index=0)]
        result = run_ab_test(a, b, MEAN_REVENUE, prior=NormalPrior(tau=0.5), cfg=CFG, offset=0.1)
        (record,) = result.records
        assert set(record) == {
            "block_index", "theta_hat", "sigma", "log_L", "p_value",
            "decision", "metric_a", "metric_b", "offset",
        }
        assert record["offset"] == 0.1
        assert record["decision"] == "continue"

    def test_degenerate_pair_is_skipped(self, rng):
        a = [block(revenue=[2.0] * 120, index=0), revenue_block(rng, index=1)]
        b = [revenue_block(rng, index=0), revenue_block(rng, index=1)]
        result = run_ab_test(a, b, MEAN_REVENUE, prior=NormalPrior(tau=0.5), cfg=CFG)
        assert result.skipped_blocks == 1
        assert result.pairs_processed == 2
        assert result.records[0]["theta_hat"] is None
        assert result.records[0]["p_value"] == result.p_values[0]

    def test_offset_equivalent_to_shifting_summaries(self, rng):
        # trajectory with offset delta matches feeding manually shifted
        # summaries to a fresh state
        delta = 0.3
        a = [revenue_block(rng, index=i) for i in range(4)]
        b = [revenue_block(rng, index=i) for i in range(4)]
        prior_samples = np.random.default_rng(8).normal(0.0, 0.5, 500)

        with_offset = run_ab_test(
            a, b, MEAN_REVENUE, cfg=CFG, offset=delta,
            rng=np.random.default_rng(12), state=MsprtState(0.0, prior_samples.copy()),
        )

        from bootsprt.msprt import BlockSummary

        state = MsprtState(0.0, prior_samples.copy())
        rng_boot = np.random.default_rng(12)
        manual_p = []
        for x, y in zip(a, b):
            plain = ab_summary(AbBlockPair(x, y, 0.0), MEAN_REVENUE, CFG, rng_boot)
            shifted = BlockSummary(
                plain.block_index, plain.theta_hat + delta, plain.sigma, plain.density
            )
            state.update(shifted)
            manual_p.append(state.p_value())
        # the offset run stops at its rejection; the prefixes must agree exactly
        assert with_offset.p_values == manual_p[: len(with_offset.p_values)]

    def test_large_offset_rejects_quickly(self, rng):
        a = [revenue_block(rng, n=400, index=i) for i in range(30)]
        b = [revenue_block(rng, n=400, index=i) for i in range(30)]
        result = run_ab_test(
            a, b, MEAN_REVENUE, prior=NormalPrior(tau=0.1, rng_seed=1), cfg=CFG,
            offset=0.5, alpha=0.05, rng=np.random.default_rng(2),
        )
        assert result.decision.tag == "reject_null"
        assert not result.exhausted
        assert result.pairs_processed < 30
        assert result.p_values[-1] <= 0.05

    def test_consumed_records_accounting(self, rng):
        a = [revenue_block(rng, n=50, index=i) for i in range(3)]
        b = [revenue_block(rng, n=50, index=i) for i in range(3)]
        result = run_ab_test(a, b, MEAN_REVENUE, prior=NormalPrior(tau=0.5), cfg=CFG)
        assert result.records_consumed == 3 * 100
        assert result.exhausted
