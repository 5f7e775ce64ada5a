"""Two-sample (A/B) adaptation of the block bootstrap and mixture SPRT.

Per-block differences of the metric between variation and control, pooled
standard errors, and paired bootstrap resampling.  The studentized resample
deviations are centered on the realized (offset-free) difference, so an
additive offset shifts each block's point estimate and nothing else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .bootstrap import BootstrapConfig, _draw_indices, fit_kde
from .errors import AllSamplesEqual, DegenerateBlock
from .metrics import Block, MetricKind, canonical_order, compute_metric
from .msprt import BlockSummary, Decision, MsprtState, NormalPrior, init_state

__all__ = ["AbBlockPair", "AbTestResult", "ab_summary", "run_ab_test"]

_REDRAW_BUDGET = 100  # same budget as the single-stream bootstrap


@dataclass(frozen=True)
class AbBlockPair:
    """Lockstep control/variation blocks plus an additive offset."""

    control: Block
    variation: Block
    offset: float = 0.0

    def __post_init__(self):
        if len(self.control) != len(self.variation):
            raise ValueError("control and variation blocks must have the same size")
        if not math.isfinite(self.offset):
            raise ValueError("offset must be finite")


def _paired_resample_stats(
    control: Block,
    variation: Block,
    kind: MetricKind,
    idx_x: np.ndarray,
    idx_y: np.ndarray,
):
    if kind.resample_stats is not None:
        tx, sx = kind.resample_stats(control, idx_x)
        ty, sy = kind.resample_stats(variation, idx_y)
        return tx, sx, ty, sy
    from .bootstrap import _resample_stats

    tx, sx = _resample_stats(control, kind, idx_x)
    ty, sy = _resample_stats(variation, kind, idx_y)
    return tx, sx, ty, sy


def ab_summary(
    pair: AbBlockPair,
    kind: MetricKind,
    cfg: BootstrapConfig,
    rng: np.random.Generator,
) -> BlockSummary:
    """Block summary for the metric difference variation - control.

    theta_hat = T(variation) - T(control) + offset, sigma is the
    root-sum-square of the per-group standard errors, and the density is a
    KDE of B paired studentized resample deviations

        (T(y*) - T(x*) - (T(y) - T(x))) / sqrt(se(x*)^2 + se(y*)^2),

    each group resampled independently with replacement.  Pairs where either
    side has an undefined metric or zero standard error are redrawn.
    """
    x = Block(pair.control.index, canonical_order(pair.control.data))
    y = Block(pair.variation.index, canonical_order(pair.variation.data))
    theta_x = compute_metric(x, kind)
    theta_y = compute_metric(y, kind)
    sigma_x = float(kind.stderr(x))
    sigma_y = float(kind.stderr(y))
    if not (sigma_x > 0 and sigma_y > 0):
        raise DegenerateBlock("a group block has zero standard error")
    diff = theta_y - theta_x
    sigma = math.sqrt(sigma_x * sigma_x + sigma_y * sigma_y)

    n_x, n_y = len(x), len(y)
    n_boot = cfg.n_boot
    # control indices are always drawn before variation indices
    idx_x = _draw_indices(rng, n_boot, n_x)
    idx_y = _draw_indices(rng, n_boot, n_y)
    tx, sx, ty, sy = _paired_resample_stats(x, y, kind, idx_x, idx_y)

    drawn = n_boot
    invalid = ~(np.isfinite(tx) & np.isfinite(ty) & (sx > 0) & (sy > 0))
    while np.any(invalid):
        n_bad = int(invalid.sum())
        if drawn + n_bad > _REDRAW_BUDGET * n_boot:
            raise DegenerateBlock(f"resample redraw budget exhausted after {drawn} draws")
        rx = _draw_indices(rng, n_bad, n_x)
        ry = _draw_indices(rng, n_bad, n_y)
        tx_new, sx_new, ty_new, sy_new = _paired_resample_stats(x, y, kind, rx, ry)
        rows = np.flatnonzero(invalid)
        tx[rows], sx[rows] = tx_new, sx_new
        ty[rows], sy[rows] = ty_new, sy_new
        drawn += n_bad
        invalid = ~(np.isfinite(tx) & np.isfinite(ty) & (sx > 0) & (sy > 0))

    samples = (ty - tx - diff) / np.sqrt(sx * sx + sy * sy)
    try:
        density = fit_kde(samples, cfg.bandwidth_rule)
    except AllSamplesEqual as exc:
        raise DegenerateBlock(str(exc)) from exc
    return BlockSummary(pair.control.index, diff + pair.offset, sigma, density)


@dataclass
class AbTestResult:
    """Outcome of a sequential A/B run."""

    decision: Decision
    p_values: list[float]
    records: list[dict] = field(repr=False)
    pairs_processed: int = 0
    skipped_blocks: int = 0
    records_consumed: int = 0
    exhausted: bool = False


def run_ab_test(
    stream_a: Iterable[Block],
    stream_b: Iterable[Block],
    kind: MetricKind,
    prior: Optional[NormalPrior] = None,
    cfg: BootstrapConfig = BootstrapConfig(),
    theta0: float = 0.0,
    alpha: float = 0.05,
    offset: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    state: Optional[MsprtState] = None,
    keep_records: bool = True,
) -> AbTestResult:
    """Drive the mixture SPRT over lockstep block pairs until rejection.

    Streams are paired positionally and the run stops at the first
    rejection or when either stream is exhausted.  Degenerate pairs are
    skipped (likelihood factor one).  Each processed pair appends one
    record with fields {block_index, theta_hat, sigma, log_L, p_value,
    decision, metric_a, metric_b, offset}; pass ``keep_records=False`` to
    drop them when only the trajectory matters.  Supply either ``prior``
    (samples drawn from its seed) or a prepared ``state``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if state is None:
        if prior is None:
            raise ValueError("provide either a prior or a prepared state")
        state = init_state(theta0, prior)

    result = AbTestResult(
        decision=state.decide(alpha), p_values=[], records=[], exhausted=True
    )
    for block_a, block_b in zip(stream_a, stream_b):
        pair = AbBlockPair(block_a, block_b, offset)
        result.pairs_processed += 1
        result.records_consumed += len(block_a) + len(block_b)
        try:
            summary = ab_summary(pair, kind, cfg, rng)
        except DegenerateBlock:
            state.skip_block(block_a.index)
            record = {
                "block_index": block_a.index,
                "theta_hat": None,
                "sigma": None,
                "log_L": state.log_lr,
                "p_value": state.p_value(),
            }
        else:
            record = state.update(summary)
        decision = state.decide(alpha)
        record["decision"] = decision.tag
        if keep_records:
            record["metric_a"] = _metric_or_none(block_a, kind)
            record["metric_b"] = _metric_or_none(block_b, kind)
            record["offset"] = offset
            result.records.append(record)
        result.p_values.append(record["p_value"])
        if decision.tag == "reject_null":
            result.exhausted = False
            break

    result.decision = state.decide(alpha)
    result.skipped_blocks = state.skipped_blocks
    return result


def _metric_or_none(block: Block, kind: MetricKind) -> Optional[float]:
    try:
        return compute_metric(block, kind)
    except DegenerateBlock:
        return None
