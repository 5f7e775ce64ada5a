"""Evaluation harness: synthetic data, post A/A trials, power and duration.

Trials are driven through pluggable sequential tests.  Per-trial randomness
derives from spawn keys on the configured seed roots, so results are
byte-identical whether trials run sequentially or across worker processes.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from .abtest import AbBlockPair, ab_summary, run_ab_test
from .baselines import (
    ChasingResult,
    MaxSprtConfig,
    calibrate_maxsprt_threshold,
    chasing_significance_trial,
    maxsprt_sequential,
)
from .bootstrap import BootstrapConfig
from .errors import DegenerateBlock
from .metrics import QUERY_SUCCESS_RATE, MetricKind, SessionData, make_blocks
from .msprt import MsprtState

__all__ = [
    "CorrelatedQueries",
    "ZeroInflatedRevenue",
    "BernoulliSessions",
    "SyntheticConfig",
    "HarnessSeeds",
    "TrialResult",
    "RunOutcome",
    "BootstrapSprtDriver",
    "MaxSprtDriver",
    "generate_sessions",
    "random_split",
    "run_aa_trials",
    "run_chasing_trials",
    "power_curve",
    "PowerPoint",
    "qq_points",
    "avg_duration",
    "sweep_block_sizes",
    "BlockSizeReport",
    "choose_block_size",
    "compare_with_maxsprt",
    "calibrate_prior_scale",
    "CompareSeeds",
    "CompareRow",
    "MaxSprtComparison",
]

_EPOCH_START_MS = 1_577_836_800_000  # 2020-01-01T00:00:00Z
_SESSION_STEP_MS = 1000


# ---------------------------------------------------------------------------
# Synthetic session models.


@dataclass(frozen=True)
class CorrelatedQueries:
    """Geometric query counts with a per-session Beta success probability.

    Successes are binomial given the session's own probability, which makes
    per-session success counts overdispersed relative to a pooled-rate
    binomial (queries within a session are correlated).
    """

    mean_queries: float
    success_beta: tuple[float, float]

    def __post_init__(self):
        if not self.mean_queries >= 1:
            raise ValueError("mean_queries must be >= 1")
        a, b = self.success_beta
        if not (a > 0 and b > 0):
            raise ValueError("beta parameters must be positive")


@dataclass(frozen=True)
class ZeroInflatedRevenue:
    """Revenue is zero with probability p_zero, else log-normal."""

    p_zero: float
    log_mean: float
    log_sd: float

    def __post_init__(self):
        if not 0 < self.p_zero < 1:
            raise ValueError("p_zero must be in (0, 1)")
        if not self.log_sd > 0:
            raise ValueError("log_sd must be positive")


@dataclass(frozen=True)
class BernoulliSessions:
    """One query per session, success with probability p, no revenue."""

    p: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must be in (0, 1)")


SessionModel = Union[CorrelatedQueries, ZeroInflatedRevenue, BernoulliSessions]


@dataclass(frozen=True)
class SyntheticConfig:
    n_sessions: int
    model: SessionModel
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be positive")


def _generate(model: SessionModel, n: int, rng: np.random.Generator) -> SessionData:
    timestamps = _EPOCH_START_MS + _SESSION_STEP_MS * np.arange(n, dtype=np.int64)
    if isinstance(model, CorrelatedQueries):
        a, b = model.success_beta
        probs = rng.beta(a, b, n)
        queries = rng.geometric(1.0 / model.mean_queries, n)
        successes = rng.binomial(queries, probs)
        revenue = np.zeros(n)
    elif isinstance(model, ZeroInflatedRevenue):
        zero = rng.random(n) < model.p_zero
        revenue = rng.lognormal(model.log_mean, model.log_sd, n)
        revenue[zero] = 0.0
        queries = np.ones(n, dtype=np.int64)
        successes = (revenue > 0).astype(np.int64)
    elif isinstance(model, BernoulliSessions):
        queries = np.ones(n, dtype=np.int64)
        successes = rng.binomial(1, model.p, n)
        revenue = np.zeros(n)
    else:
        raise TypeError(f"unknown session model {model!r}")
    return SessionData(timestamps, queries, successes, revenue, validate=False)


def generate_sessions(cfg: SyntheticConfig) -> SessionData:
    """Deterministic synthetic sessions for the configured model and seed."""
    rng = np.random.default_rng(cfg.rng_seed)
    return _generate(cfg.model, cfg.n_sessions, rng)


def random_split(
    records: SessionData, rng: np.random.Generator
) -> tuple[SessionData, SessionData]:
    """Assign each record to one of two groups with probability 1/2 each.

    Both groups preserve the original (timestamp) order.
    """
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    in_a = rng.random(n) < 0.5
    return records.take(np.flatnonzero(in_a)), records.take(np.flatnonzero(~in_a))


# ---------------------------------------------------------------------------
# Sequential tests under evaluation.


@dataclass(frozen=True)
class RunOutcome:
    """What a sequential test reports for one A/B run."""

    final_p: float
    rejected: bool
    records_consumed: int
    exhausted: bool


class PairedSequentialTest(Protocol):
    def run(
        self,
        group_a: SessionData,
        group_b: SessionData,
        offset: float,
        boot_seed: np.random.SeedSequence,
        prior_seed: np.random.SeedSequence,
    ) -> RunOutcome: ...


@dataclass(frozen=True)
class BootstrapSprtDriver:
    """Bootstrap mixture SPRT as the test under evaluation."""

    kind: MetricKind
    tau: float
    block_size: int = 1000
    n_boot: int = 1000
    n_prior: int = 5000
    prior_mean: float = 0.0
    alpha: float = 0.05
    bandwidth_rule: Union[str, float] = "silverman"
    theta0: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.n_prior < 1000:
            raise ValueError("n_prior must be at least 1000")

    def run(self, group_a, group_b, offset, boot_seed, prior_seed) -> RunOutcome:
        blocks_a = make_blocks(group_a, self.block_size)
        blocks_b = make_blocks(group_b, self.block_size)
        prior_samples = np.random.default_rng(prior_seed).normal(
            self.prior_mean, self.tau, self.n_prior
        )
        state = MsprtState(self.theta0, prior_samples)
        cfg = BootstrapConfig(n_boot=self.n_boot, bandwidth_rule=self.bandwidth_rule)
        result = run_ab_test(
            blocks_a,
            blocks_b,
            self.kind,
            cfg=cfg,
            alpha=self.alpha,
            offset=offset,
            rng=np.random.default_rng(boot_seed),
            state=state,
            keep_records=False,
        )
        return RunOutcome(
            final_p=result.decision.p_value,
            rejected=result.decision.tag == "reject_null",
            records_consumed=result.records_consumed,
            exhausted=result.exhausted,
        )


@dataclass(frozen=True)
class MaxSprtDriver:
    """Two-sample Bernoulli MaxSPRT with a precalibrated threshold.

    Success counts come from the sessions' ``successes`` column (one query
    per session).  Metric-level offsets cannot be realized inside the
    Bernoulli likelihood, so this driver only accepts offset 0; comparisons
    inject true rate differences at data-generation time instead.
    """

    threshold: float
    block_size: int = 1000

    def run(self, group_a, group_b, offset, boot_seed, prior_seed) -> RunOutcome:
        if offset != 0.0:
            raise ValueError("MaxSprtDriver does not support metric-level offsets")
        n_blocks = min(len(group_a), len(group_b)) // self.block_size
        if n_blocks == 0:
            return RunOutcome(final_p=1.0, rejected=False, records_consumed=0, exhausted=True)
        counts_a = self._block_counts(group_a, n_blocks)
        counts_b = self._block_counts(group_b, n_blocks)
        rejected, stop_block = maxsprt_sequential(
            counts_a, counts_b, self.block_size, self.threshold
        )
        # MaxSPRT yields no p-value; report an indicator so that the
        # TrialResult invariant (rejected iff p <= alpha) still holds.
        return RunOutcome(
            final_p=0.0 if rejected else 1.0,
            rejected=rejected,
            records_consumed=2 * self.block_size * stop_block,
            exhausted=not rejected,
        )

    def _block_counts(self, group: SessionData, n_blocks: int) -> np.ndarray:
        used = n_blocks * self.block_size
        return group.successes[:used].reshape(n_blocks, self.block_size).sum(axis=1)


# ---------------------------------------------------------------------------
# Post A/A trials and power curves.


@dataclass(frozen=True)
class HarnessSeeds:
    """Seed roots; trial t uses SeedSequence(root, spawn_key=(t,))."""

    split: int
    bootstrap: int
    prior: int


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    final_p: float
    rejected: bool
    samples_consumed: int
    offset: float


# Context inherited by forked pool workers: avoids pickling the dataset per
# task and keeps worker behavior a pure function of (trial_id, offset).
_CONTEXT: Optional[tuple] = None


def _pool_map(worker, tasks, n_jobs, context):
    global _CONTEXT
    _CONTEXT = context
    try:
        if n_jobs <= 1 or len(tasks) <= 1:
            return [worker(task) for task in tasks]
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=min(n_jobs, len(tasks))) as pool:
            return pool.map(worker, tasks, chunksize=1)
    finally:
        _CONTEXT = None


def _aa_trial_worker(task: tuple[int, float]) -> TrialResult:
    trial_id, offset = task
    records, test, seeds = _CONTEXT
    split_rng = np.random.default_rng(
        np.random.SeedSequence(seeds.split, spawn_key=(trial_id,))
    )
    group_a, group_b = random_split(records, split_rng)
    outcome = test.run(
        group_a,
        group_b,
        offset,
        np.random.SeedSequence(seeds.bootstrap, spawn_key=(trial_id,)),
        np.random.SeedSequence(seeds.prior, spawn_key=(trial_id,)),
    )
    consumed = outcome.records_consumed if outcome.rejected else len(records)
    return TrialResult(
        trial_id=trial_id,
        final_p=outcome.final_p,
        rejected=outcome.rejected,
        samples_consumed=consumed,
        offset=offset,
    )


def run_aa_trials(
    records: SessionData,
    test: PairedSequentialTest,
    n_trials: int,
    seeds: HarnessSeeds,
    offset: float = 0.0,
    n_jobs: int = 1,
) -> list[TrialResult]:
    """Independent random A/A splits of ``records``, each run through ``test``.

    ``samples_consumed`` counts records across both groups up to and
    including the rejecting block pair; trials that exhaust the data count
    the full dataset.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    tasks = [(t, offset) for t in range(n_trials)]
    return _pool_map(_aa_trial_worker, tasks, n_jobs, (records, test, seeds))


def _chasing_worker(task: tuple[int, float]) -> ChasingResult:
    trial_id, _ = task
    records, kind, looks, alpha, seed_split = _CONTEXT
    rng = np.random.default_rng(np.random.SeedSequence(seed_split, spawn_key=(trial_id,)))
    return chasing_significance_trial(records, kind, looks, alpha, rng)


def run_chasing_trials(
    records: SessionData,
    kind: MetricKind,
    looks: int,
    alpha: float,
    n_trials: int,
    seed_split: int,
    n_jobs: int = 1,
) -> list[ChasingResult]:
    """Repeated-look z-test trials on independent A/A splits."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    tasks = [(t, 0.0) for t in range(n_trials)]
    return _pool_map(_chasing_worker, tasks, n_jobs, (records, kind, looks, alpha, seed_split))


def qq_points(p_values) -> np.ndarray:
    """Sorted p-values against uniform plotting positions (i - 0.5)/n."""
    p = np.sort(np.asarray(p_values, dtype=np.float64))
    if p.size == 0:
        raise ValueError("need at least one p-value")
    uniform = (np.arange(1, p.size + 1) - 0.5) / p.size
    return np.column_stack([uniform, p])


def avg_duration(results: Sequence[TrialResult]) -> float:
    """Arithmetic mean of samples consumed per trial."""
    if not results:
        raise ValueError("need at least one trial result")
    return float(np.mean([r.samples_consumed for r in results]))


@dataclass(frozen=True)
class PowerPoint:
    offset: float
    rejection_rate: float
    n_trials: int
    avg_duration: float
    results: tuple[TrialResult, ...] = field(repr=False, default=())


def power_curve(
    records: SessionData,
    offsets: Sequence[float],
    test: PairedSequentialTest,
    n_trials: int,
    seeds: HarnessSeeds,
    n_jobs: int = 1,
) -> list[PowerPoint]:
    """Rejection rate and average duration per additive offset.

    Trial t reuses the same split and test seeds at every offset, so the
    per-offset estimates are paired.
    """
    if not offsets:
        raise ValueError("offsets must be nonempty")
    tasks = [(t, float(off)) for off in offsets for t in range(n_trials)]
    flat = _pool_map(_aa_trial_worker, tasks, n_jobs, (records, test, seeds))
    points = []
    for i, off in enumerate(offsets):
        chunk = flat[i * n_trials : (i + 1) * n_trials]
        points.append(
            PowerPoint(
                offset=float(off),
                rejection_rate=float(np.mean([r.rejected for r in chunk])),
                n_trials=n_trials,
                avg_duration=avg_duration(chunk),
                results=tuple(chunk),
            )
        )
    return points


# ---------------------------------------------------------------------------
# Block-size selection sweep.


@dataclass(frozen=True)
class BlockSizeReport:
    block_size: int
    qq: np.ndarray
    cdf: dict[float, float]
    conservative: bool


def sweep_block_sizes(
    records: SessionData,
    block_sizes: Sequence[int],
    make_test,
    n_trials: int,
    seeds: HarnessSeeds,
    alphas: Sequence[float] = (0.01, 0.05, 0.10),
    n_jobs: int = 1,
) -> list[BlockSizeReport]:
    """Post A/A sweep over block sizes; flags sizes with CDF(alpha) <= alpha.

    ``make_test`` maps a block size to the test under evaluation.  The same
    split seeds are reused for every size, so reports are paired.
    """
    reports = []
    for size in block_sizes:
        results = run_aa_trials(records, make_test(size), n_trials, seeds, n_jobs=n_jobs)
        p_values = np.array([r.final_p for r in results])
        cdf = {float(a): float(np.mean(p_values <= a)) for a in alphas}
        reports.append(
            BlockSizeReport(
                block_size=int(size),
                qq=qq_points(p_values),
                cdf=cdf,
                conservative=all(cdf[a] <= a for a in cdf),
            )
        )
    return reports


def choose_block_size(reports: Sequence[BlockSizeReport]) -> Optional[int]:
    """Smallest block size whose empirical CDF stays at or below uniform."""
    passing = [r.block_size for r in reports if r.conservative]
    return min(passing) if passing else None


# ---------------------------------------------------------------------------
# Head-to-head against MaxSPRT on Bernoulli streams.


@dataclass(frozen=True)
class CompareSeeds:
    data: int
    bootstrap: int
    prior: int
    calibration: int


def _tau_calibration_worker(task: tuple[int, float]) -> list[bool]:
    trial, _ = task
    p0, arm_size, tau_grid, boot_template, alpha, seeds = _CONTEXT
    rng = np.random.default_rng(np.random.SeedSequence(seeds.data, spawn_key=(trial,)))
    group_a = _generate(BernoulliSessions(p0), arm_size, rng)
    group_b = _generate(BernoulliSessions(p0), arm_size, rng)
    blocks_a = make_blocks(group_a, boot_template.block_size)
    blocks_b = make_blocks(group_b, boot_template.block_size)

    boot_rng = np.random.default_rng(
        np.random.SeedSequence(seeds.bootstrap, spawn_key=(trial,))
    )
    cfg = BootstrapConfig(n_boot=boot_template.n_boot)
    summaries = []
    for block_a, block_b in zip(blocks_a, blocks_b):
        try:
            summaries.append(
                ab_summary(AbBlockPair(block_a, block_b), boot_template.kind, cfg, boot_rng)
            )
        except DegenerateBlock:
            summaries.append(None)

    # block summaries do not depend on the prior, so one bootstrap pass
    # serves every candidate tau
    prior_rng = np.random.SeedSequence(seeds.prior, spawn_key=(trial,))
    normals = np.random.default_rng(prior_rng).standard_normal(boot_template.n_prior)
    rejected = []
    threshold = math.log(1.0 / alpha)
    for tau in tau_grid:
        state = MsprtState(0.0, tau * normals)
        for k, summary in enumerate(summaries):
            if summary is None:
                state.skip_block(k)
            else:
                state.update(summary)
        rejected.append(bool(state.max_log_lr >= threshold))
    return rejected


def calibrate_prior_scale(
    p0: float,
    arm_size: int,
    tau_grid: Sequence[float],
    n_trials: int,
    seeds: CompareSeeds,
    block_size: int = 1000,
    n_boot: int = 1000,
    n_prior: int = 2000,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> tuple[float, dict[float, float]]:
    """Pick the prior scale whose null rejection rate is closest to alpha.

    Runs paired null Bernoulli(p0) streams once per trial and replays the
    shared block summaries under every candidate tau; returns the chosen tau
    and the per-candidate empirical type-1 rates.
    """
    if not tau_grid:
        raise ValueError("tau_grid must be nonempty")
    template = BootstrapSprtDriver(
        kind=QUERY_SUCCESS_RATE,
        tau=float(tau_grid[0]),
        block_size=block_size,
        n_boot=n_boot,
        n_prior=n_prior,
        alpha=alpha,
    )
    tasks = [(t, 0.0) for t in range(n_trials)]
    context = (p0, arm_size, tuple(float(t) for t in tau_grid), template, alpha, seeds)
    flags = np.array(_pool_map(_tau_calibration_worker, tasks, n_jobs, context))
    rates = {float(tau): float(flags[:, i].mean()) for i, tau in enumerate(tau_grid)}
    best = min(tau_grid, key=lambda tau: (abs(rates[float(tau)] - alpha), tau))
    return float(best), rates


@dataclass(frozen=True)
class CompareRow:
    offset: float
    power_bootstrap: float
    power_maxsprt: float
    avg_duration_bootstrap: float
    avg_duration_maxsprt: float
    n_trials: int


@dataclass(frozen=True)
class MaxSprtComparison:
    threshold: float
    rows: list[CompareRow]


def _compare_worker(task: tuple[int, int]) -> tuple[bool, int, bool, int]:
    offset_index, trial = task
    p0, offsets, arm_size, boot_driver, max_driver, seeds = _CONTEXT
    delta = offsets[offset_index]
    rng = np.random.default_rng(
        np.random.SeedSequence(seeds.data, spawn_key=(offset_index, trial))
    )
    group_a = _generate(BernoulliSessions(p0), arm_size, rng)
    group_b = _generate(BernoulliSessions(p0 + delta), arm_size, rng)
    total = 2 * arm_size

    boot = boot_driver.run(
        group_a,
        group_b,
        0.0,
        np.random.SeedSequence(seeds.bootstrap, spawn_key=(offset_index, trial)),
        np.random.SeedSequence(seeds.prior, spawn_key=(offset_index, trial)),
    )
    dur_boot = boot.records_consumed if boot.rejected else total
    mx = max_driver.run(group_a, group_b, 0.0, None, None)
    dur_max = mx.records_consumed if mx.rejected else total
    return boot.rejected, dur_boot, mx.rejected, dur_max


def compare_with_maxsprt(
    p0: float,
    n_records: int,
    offsets: Sequence[float],
    n_trials: int,
    seeds: CompareSeeds,
    tau: float,
    block_size: int = 1000,
    n_boot: int = 1000,
    n_prior: int = 2000,
    alpha: float = 0.05,
    calibration_trials: int = 400,
    n_jobs: int = 1,
) -> MaxSprtComparison:
    """Bootstrap mixture SPRT vs calibrated MaxSPRT on Bernoulli(p0) streams.

    Each trial generates fresh paired streams of ``n_records/2`` records per
    arm with a true rate difference equal to the offset (MaxSPRT consumes
    raw counts, so offsets are injected at data level rather than as
    block-summary shifts).  Both tests see identical data and identical
    block boundaries.  Offset 0 rows report empirical type-1 error.
    """
    arm_size = n_records // 2
    for delta in offsets:
        if not 0 < p0 + delta < 1:
            raise ValueError(f"offset {delta} pushes the rate outside (0, 1)")
    cfg = MaxSprtConfig(p0=p0, block_size=block_size, max_samples=arm_size)
    threshold = calibrate_maxsprt_threshold(
        cfg,
        alpha,
        calibration_trials,
        np.random.default_rng(np.random.SeedSequence(seeds.calibration)),
    )
    boot_driver = BootstrapSprtDriver(
        kind=QUERY_SUCCESS_RATE,
        tau=tau,
        block_size=block_size,
        n_boot=n_boot,
        n_prior=n_prior,
        alpha=alpha,
    )
    max_driver = MaxSprtDriver(threshold=threshold, block_size=block_size)

    tasks = [(oi, t) for oi in range(len(offsets)) for t in range(n_trials)]
    context = (p0, tuple(float(o) for o in offsets), arm_size, boot_driver, max_driver, seeds)
    flat = _pool_map(_compare_worker, tasks, n_jobs, context)

    rows = []
    for oi, delta in enumerate(offsets):
        chunk = flat[oi * n_trials : (oi + 1) * n_trials]
        rows.append(
            CompareRow(
                offset=float(delta),
                power_bootstrap=float(np.mean([c[0] for c in chunk])),
                power_maxsprt=float(np.mean([c[2] for c in chunk])),
                avg_duration_bootstrap=float(np.mean([c[1] for c in chunk])),
                avg_duration_maxsprt=float(np.mean([c[3] for c in chunk])),
                n_trials=n_trials,
            )
        )
    return MaxSprtComparison(threshold=threshold, rows=rows)
