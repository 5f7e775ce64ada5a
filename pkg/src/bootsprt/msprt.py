"""Mixture sequential probability ratio test over block summaries.

The likelihood of each block's studentized statistic comes from its
bootstrap KDE.  A Monte Carlo prior sample is drawn once; per-sample
log-likelihoods accumulate across blocks, and

    log L_n = logsumexp_m(sum_k log g_k((theta_k - prior_m)/sigma_k))
              - log M
              - sum_k log g_k((theta_k - theta0)/sigma_k).

The always-valid p-value is min(1, 1/max_t L_t), nonincreasing by
construction.  Rejection (p <= alpha) is sticky.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.special import logsumexp

from .bootstrap import BootstrapConfig, KdeDensity, _studentized_with_estimate, fit_kde
from .errors import AllSamplesEqual, DegenerateBlock, ZeroSigma
from .metrics import Block, MetricKind

__all__ = [
    "NormalPrior",
    "BlockSummary",
    "Decision",
    "MsprtState",
    "init_state",
    "summarize_block",
]


@dataclass(frozen=True)
class NormalPrior:
    """N(mean, tau^2) prior on the parameter, sampled n_samples times."""

    tau: float
    mean: float = 0.0
    n_samples: int = 5000
    rng_seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be positive and finite")
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")
        if self.n_samples < 1000:
            raise ValueError("n_samples must be at least 1000")

    def draw(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(self.rng_seed)
        return rng.normal(self.mean, self.tau, self.n_samples)


@dataclass(frozen=True)
class BlockSummary:
    """Per-block estimate, standard error, and bootstrap density."""

    block_index: int
    theta_hat: float
    sigma: float
    density: KdeDensity

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be positive and finite")
        if not math.isfinite(self.theta_hat):
            raise ValueError("theta_hat must be finite")


@dataclass(frozen=True)
class Decision:
    tag: Literal["continue", "reject_null"]
    at_block: int
    p_value: float


class MsprtState:
    """Single-writer accumulator; blocks must arrive in increasing index order.

    Blocks with zero standard error are skipped via ``skip_block`` and
    contribute a likelihood factor of exactly one, which preserves the
    supermartingale bound.
    """

    def __init__(self, theta0: float, prior_samples):
        samples = np.asarray(prior_samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("prior_samples must be a nonempty 1-d array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("prior_samples must be finite")
        if not math.isfinite(theta0):
            raise ValueError("theta0 must be finite")
        self.theta0 = float(theta0)
        self.prior_samples = samples
        self.log_num = np.zeros(samples.size)
        self.log_den = 0.0
        self.log_lr = 0.0
        self.max_log_lr = 0.0
        self.blocks_seen = 0
        self.skipped_blocks = 0
        self._last_block_index: Optional[int] = None
        # (block_index, max_log_lr after that block); supports decide(alpha)
        # reporting the first crossing for any alpha
        self._crossings: list[tuple[int, float]] = []

    def _check_block_index(self, block_index: int) -> None:
        if self._last_block_index is not None and block_index <= self._last_block_index:
            raise ValueError(
                f"block {block_index} already consumed (last was {self._last_block_index})"
            )

    def update(self, summary: BlockSummary) -> dict:
        """Consume one block summary; returns the per-update record."""
        if not summary.sigma > 0:
            raise ZeroSigma("block summary has zero standard error")
        self._check_block_index(summary.block_index)

        points = np.empty(self.prior_samples.size + 1)
        points[:-1] = (summary.theta_hat - self.prior_samples) / summary.sigma
        points[-1] = (summary.theta_hat - self.theta0) / summary.sigma
        log_g = summary.density.log_pdf(points)
        self.log_num += log_g[:-1]
        self.log_den += float(log_g[-1])
        # subtracting log_den inside the logsumexp keeps the ratio exactly 1
        # when every prior sample sits at theta0 and conditions the null case
        self.log_lr = float(
            logsumexp(self.log_num - self.log_den) - math.log(self.prior_samples.size)
        )
        self.blocks_seen += 1
        self._last_block_index = summary.block_index
        if self.log_lr > self.max_log_lr:
            self.max_log_lr = self.log_lr
            self._crossings.append((summary.block_index, self.log_lr))
        return {
            "block_index": summary.block_index,
            "theta_hat": summary.theta_hat,
            "sigma": summary.sigma,
            "log_L": self.log_lr,
            "p_value": self.p_value(),
        }

    def skip_block(self, block_index: int) -> None:
        """Record a degenerate block; the likelihood is left untouched."""
        self._check_block_index(block_index)
        self.skipped_blocks += 1
        self._last_block_index = block_index

    def p_value(self) -> float:
        """Always-valid p-value: min(1, 1/max_t L_t), nonincreasing."""
        return min(1.0, math.exp(-self.max_log_lr))

    def decide(self, alpha: float) -> Decision:
        """Reject the null iff p <= alpha; rejection is sticky."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        p = self.p_value()
        if p <= alpha:
            at_block = next(
                bi for bi, m in self._crossings if min(1.0, math.exp(-m)) <= alpha
            )
            return Decision("reject_null", at_block=at_block, p_value=p)
        last = self._last_block_index if self._last_block_index is not None else -1
        return Decision("continue", at_block=last, p_value=p)


def init_state(theta0: float, prior: NormalPrior) -> MsprtState:
    """Fresh state with prior samples drawn once from the prior's seed."""
    return MsprtState(theta0, prior.draw())


def summarize_block(
    block: Block,
    kind: MetricKind,
    cfg: BootstrapConfig,
    rng: np.random.Generator,
) -> BlockSummary:
    """Estimate, standard error, and bootstrap KDE for a single-stream block."""
    try:
        samples, theta_hat, sigma = _studentized_with_estimate(block, kind, cfg, rng)
        density = fit_kde(samples, cfg.bandwidth_rule)
    except AllSamplesEqual as exc:
        raise DegenerateBlock(str(exc)) from exc
    return BlockSummary(block.index, theta_hat, sigma, density)
