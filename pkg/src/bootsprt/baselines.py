"""Baseline tests: fixed-sample z-test, its repeated-look misuse, and MaxSPRT.

The z-test treats each group as one large block and reuses the metric
standard-error estimators.  The repeated-look ("chasing significance")
trial replays the z-test on growing prefixes of an A/A split.  MaxSPRT is
the two-sample Bernoulli sequential test with the unknown rates replaced by
maximum-likelihood estimates and a simulation-calibrated threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import xlogy
from scipy.stats import norm

from .errors import CalibrationFailed, DegenerateBlock
from .metrics import Block, MetricKind, SessionData

__all__ = [
    "MaxSprtConfig",
    "ChasingResult",
    "z_test",
    "chasing_significance_trial",
    "maxsprt_bernoulli_llr",
    "maxsprt_llr_curve",
    "maxsprt_sequential",
    "calibrate_maxsprt_threshold",
    "simulate_null_max_llr",
    "default_threshold_grid",
]


def z_test(group_a: SessionData, group_b: SessionData, kind: MetricKind) -> float:
    """Two-sided fixed-sample z-test p-value for the metric difference."""
    if len(group_a) < 2 or len(group_b) < 2:
        raise ValueError("z-test needs at least 2 records per group")
    block_a = Block(0, group_a)
    block_b = Block(0, group_b)
    theta_a = kind.value(block_a)
    theta_b = kind.value(block_b)
    se_a = float(kind.stderr(block_a))
    se_b = float(kind.stderr(block_b))
    pooled = math.sqrt(se_a * se_a + se_b * se_b)
    if pooled == 0:
        raise DegenerateBlock("zero pooled variance")
    z = abs(theta_b - theta_a) / pooled
    return float(2.0 * norm.sf(z))


@dataclass(frozen=True)
class ChasingResult:
    """Outcome of one repeated-look z-test trial on an A/A split."""

    p_values: np.ndarray
    min_p: float
    final_p: float
    ever_rejected: bool


def chasing_significance_trial(
    records: SessionData,
    kind: MetricKind,
    looks: int,
    alpha: float,
    rng: np.random.Generator,
) -> ChasingResult:
    """Split ``records`` A/A and z-test ``looks`` evenly spaced prefixes.

    Models stopping the first time the fixed-sample test shows p <= alpha.
    Looks whose prefix is too small or degenerate count as p = 1.
    """
    if looks < 1:
        raise ValueError("looks must be at least 1")
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records for an A/A split")
    in_a = rng.random(n) < 0.5
    idx_a = np.flatnonzero(in_a)
    idx_b = np.flatnonzero(~in_a)
    p_values = np.ones(looks)
    for j in range(1, looks + 1):
        cut = (n * j) // looks
        a = records.take(idx_a[: np.searchsorted(idx_a, cut)])
        b = records.take(idx_b[: np.searchsorted(idx_b, cut)])
        try:
            p_values[j - 1] = z_test(a, b, kind)
        except (ValueError, DegenerateBlock):
            p_values[j - 1] = 1.0
    min_p = float(p_values.min())
    return ChasingResult(
        p_values=p_values,
        min_p=min_p,
        final_p=float(p_values[-1]),
        ever_rejected=bool(min_p <= alpha),
    )


# ---------------------------------------------------------------------------
# Two-sample Bernoulli MaxSPRT.


@dataclass(frozen=True)
class MaxSprtConfig:
    """Two-sample Bernoulli MaxSPRT, monitored at block granularity."""

    p0: float
    block_size: int = 1000
    max_samples: int = 50_000  # horizon per arm, in records
    threshold: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must be in (0, 1)")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.max_samples < self.block_size:
            raise ValueError("max_samples must be at least one block")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("threshold must be positive")

    @property
    def n_blocks(self) -> int:
        return self.max_samples // self.block_size


def _bernoulli_loglik(p, successes, n):
    return xlogy(successes, p) + xlogy(n - successes, 1.0 - p)


def maxsprt_bernoulli_llr(
    successes_a: int, n_a: int, successes_b: int, n_b: int
) -> float:
    """Log-likelihood ratio: unrestricted two-rate MLE vs pooled null MLE.

    Nonnegative by construction; zero iff the two group MLEs coincide.
    Boundary rates follow the 0*log(0) = 0 convention.
    """
    if not (0 <= successes_a <= n_a and 0 <= successes_b <= n_b):
        raise ValueError("success counts must be between 0 and the sample size")
    out = maxsprt_llr_curve(
        np.array([successes_a], dtype=np.float64),
        np.array([n_a], dtype=np.float64),
        np.array([successes_b], dtype=np.float64),
        np.array([n_b], dtype=np.float64),
    )
    return float(out[0])


def maxsprt_llr_curve(successes_a, n_a, successes_b, n_b) -> np.ndarray:
    """Vectorized LLR over cumulative (successes, totals) per look."""
    sa = np.asarray(successes_a, dtype=np.float64)
    na = np.asarray(n_a, dtype=np.float64)
    sb = np.asarray(successes_b, dtype=np.float64)
    nb = np.asarray(n_b, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        pa = np.where(na > 0, sa / na, 0.0)
        pb = np.where(nb > 0, sb / nb, 0.0)
        pooled = np.where(na + nb > 0, (sa + sb) / (na + nb), 0.0)
    llr = (
        _bernoulli_loglik(pa, sa, na)
        + _bernoulli_loglik(pb, sb, nb)
        - _bernoulli_loglik(pooled, sa, na)
        - _bernoulli_loglik(pooled, sb, nb)
    )
    # the unrestricted maximum can only round below the restricted one
    return np.maximum(llr, 0.0)


def maxsprt_sequential(
    block_successes_a: np.ndarray,
    block_successes_b: np.ndarray,
    block_size: int,
    threshold: float,
) -> tuple[bool, int]:
    """Monitor the LLR after each block pair; returns (rejected, stop_block).

    ``stop_block`` is 1-based and equals the number of block pairs consumed
    (all of them when the threshold is never crossed).
    """
    sa = np.cumsum(np.asarray(block_successes_a, dtype=np.float64))
    sb = np.cumsum(np.asarray(block_successes_b, dtype=np.float64))
    if sa.shape != sb.shape or sa.ndim != 1 or sa.size == 0:
        raise ValueError("need equal-length nonempty per-block success counts")
    n = block_size * np.arange(1, sa.size + 1, dtype=np.float64)
    llr = maxsprt_llr_curve(sa, n, sb, n)
    crossed = np.flatnonzero(llr > threshold)
    if crossed.size:
        return True, int(crossed[0]) + 1
    return False, int(sa.size)


def simulate_null_max_llr(
    cfg: MaxSprtConfig, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-trial running maximum of the LLR under the null (both arms p0)."""
    n_blocks = cfg.n_blocks
    counts_a = rng.binomial(cfg.block_size, cfg.p0, size=(trials, n_blocks))
    counts_b = rng.binomial(cfg.block_size, cfg.p0, size=(trials, n_blocks))
    sa = np.cumsum(counts_a, axis=1).astype(np.float64)
    sb = np.cumsum(counts_b, axis=1).astype(np.float64)
    n = cfg.block_size * np.arange(1, n_blocks + 1, dtype=np.float64)
    llr = maxsprt_llr_curve(sa, n[None, :], sb, n[None, :])
    return llr.max(axis=1)


def default_threshold_grid() -> np.ndarray:
    """Geometric grid of 64 candidate thresholds over [log 2, log 1e4]."""
    return np.geomspace(math.log(2.0), math.log(1e4), 64)


def calibrate_maxsprt_threshold(
    cfg: MaxSprtConfig,
    alpha: float,
    trials: int,
    rng: np.random.Generator,
    grid: Optional[np.ndarray] = None,
) -> float:
    """Smallest grid threshold whose simulated null crossing rate is <= alpha."""
    if trials < 200:
        raise ValueError("calibration needs at least 200 trials")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    if grid is None:
        grid = default_threshold_grid()
    max_llr = simulate_null_max_llr(cfg, trials, rng)
    for threshold in np.sort(np.asarray(grid, dtype=np.float64)):
        if float(np.mean(max_llr > threshold)) <= alpha:
            return float(threshold)
    raise CalibrationFailed(
        f"no grid threshold reached type-1 <= {alpha} over {trials} trials"
    )
