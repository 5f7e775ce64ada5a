"""Metric functionals over session blocks.

Session-level data containers, the built-in plug-in metrics (query success
rate as a ratio of block sums, mean revenue per session), their
standard-error estimators (delta method, jackknife, closed form), and
studentization.

All operations here are pure functions of their inputs and are safe to
evaluate concurrently across blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from ._kernels import mean_resample_moments, ratio_resample_moments
from .errors import DegenerateBlock, ZeroSigma

__all__ = [
    "SessionRecord",
    "SessionData",
    "Block",
    "MetricEstimate",
    "MetricKind",
    "MEAN_REVENUE",
    "QUERY_SUCCESS_RATE",
    "make_blocks",
    "canonical_order",
    "compute_metric",
    "compute_estimate",
    "stderr_delta_ratio",
    "stderr_jackknife",
    "studentize",
    "custom_metric",
    "metric_by_name",
]


@dataclass(frozen=True)
class SessionRecord:
    """One user session: timestamp (epoch ms), query counts, and revenue."""

    timestamp: int
    queries: int
    successful_queries: int
    revenue: float

    def __post_init__(self):
        if self.queries < 0:
            raise ValueError("queries must be nonnegative")
        if not 0 <= self.successful_queries <= self.queries:
            raise ValueError("successful_queries must be between 0 and queries")
        if not (np.isfinite(self.revenue) and self.revenue >= 0):
            raise ValueError("revenue must be finite and nonnegative")


class SessionData:
    """Column-oriented store of session records, in arrival order.

    Treated as immutable after construction.  ``validate=False`` skips the
    record invariants and is reserved for internal reshuffles of already
    validated data (and for tests that need free-form values).
    """

    __slots__ = ("timestamps", "queries", "successes", "revenue")

    def __init__(self, timestamps, queries, successes, revenue, validate=True):
        ts = np.asarray(timestamps, dtype=np.int64)
        q = np.asarray(queries, dtype=np.int64)
        s = np.asarray(successes, dtype=np.int64)
        r = np.asarray(revenue, dtype=np.float64)
        if not (ts.shape == q.shape == s.shape == r.shape and ts.ndim == 1):
            raise ValueError("columns must be 1-d and of equal length")
        if validate:
            if np.any(q < 0):
                raise ValueError("queries must be nonnegative")
            if np.any((s < 0) | (s > q)):
                raise ValueError("successful_queries must be between 0 and queries")
            if np.any(~np.isfinite(r) | (r < 0)):
                raise ValueError("revenue must be finite and nonnegative")
        self.timestamps = ts
        self.queries = q
        self.successes = s
        self.revenue = r

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @classmethod
    def from_records(cls, records: Iterable[SessionRecord]) -> "SessionData":
        recs = list(records)
        return cls(
            [r.timestamp for r in recs],
            [r.queries for r in recs],
            [r.successful_queries for r in recs],
            [r.revenue for r in recs],
            validate=False,  # SessionRecord already validated each row
        )

    def records(self) -> Iterator[SessionRecord]:
        for i in range(len(self)):
            yield SessionRecord(
                int(self.timestamps[i]),
                int(self.queries[i]),
                int(self.successes[i]),
                float(self.revenue[i]),
            )

    def take(self, indices) -> "SessionData":
        idx = np.asarray(indices)
        return SessionData(
            self.timestamps[idx],
            self.queries[idx],
            self.successes[idx],
            self.revenue[idx],
            validate=False,
        )

    def head(self, n: int) -> "SessionData":
        return SessionData(
            self.timestamps[:n],
            self.queries[:n],
            self.successes[:n],
            self.revenue[:n],
            validate=False,
        )


@dataclass(frozen=True)
class Block:
    """A fixed-size batch of sessions; the unit of sequential observation."""

    index: int
    data: SessionData

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("block index must be nonnegative")
        if len(self.data) == 0:
            raise ValueError("block must be nonempty")

    def __len__(self) -> int:
        return len(self.data)


def make_blocks(data: SessionData, block_size: int, start_index: int = 0) -> list[Block]:
    """Cut ``data`` into full blocks of ``block_size`` records.

    Partial trailing data is never emitted as a block.
    """
    if block_size < 1:
        raise ValueError("block_size must be positive")
    n_blocks = len(data) // block_size
    return [
        Block(start_index + k, data.take(np.arange(k * block_size, (k + 1) * block_size)))
        for k in range(n_blocks)
    ]


def canonical_order(data: SessionData) -> SessionData:
    """Sort records by (timestamp, queries, successes, revenue).

    Block summaries must not depend on within-block record order, so the
    bootstrap operates on this canonical ordering.
    """
    order = np.lexsort((data.revenue, data.successes, data.queries, data.timestamps))
    return data.take(order)


@dataclass(frozen=True)
class MetricEstimate:
    """Plug-in estimate and its standard error, in metric units."""

    theta_hat: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.theta_hat):
            raise ValueError("theta_hat must be finite")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("sigma must be finite and nonnegative")


@dataclass(frozen=True)
class MetricKind:
    """A metric functional plus its estimators.

    ``value`` is the plug-in estimate on a block, ``stderr`` its default
    standard-error estimator.  ``loo_values`` (optional) returns the vector
    of leave-one-out estimates for a fast jackknife.  ``resample_stats``
    (optional) maps a block and an (B, N) index matrix to per-resample
    (estimate, standard error) arrays; metrics without one fall back to a
    per-resample Python loop in the bootstrap.
    """

    name: str
    value: Callable[["Block"], float]
    stderr: Callable[["Block"], float]
    loo_values: Optional[Callable[["Block"], np.ndarray]] = None
    resample_stats: Optional[
        Callable[["Block", np.ndarray], tuple[np.ndarray, np.ndarray]]
    ] = None


def compute_metric(block: Block, kind: MetricKind) -> float:
    """Plug-in value of the metric on one block."""
    return float(kind.value(block))


def compute_estimate(block: Block, kind: MetricKind) -> MetricEstimate:
    """Plug-in estimate together with its default standard error."""
    return MetricEstimate(compute_metric(block, kind), float(kind.stderr(block)))


def studentize(estimate: MetricEstimate, theta: float) -> float:
    """(theta_hat - theta) / sigma; raises ZeroSigma when sigma is zero."""
    if estimate.sigma == 0:
        raise ZeroSigma("cannot studentize an estimate with zero standard error")
    return (estimate.theta_hat - theta) / estimate.sigma


# ---------------------------------------------------------------------------
# Query success rate: ratio of block sums, delta-method standard error.


def _qsr_value(block: Block) -> float:
    q_total = int(block.data.queries.sum())
    if q_total == 0:
        raise DegenerateBlock("query success rate undefined: block has no queries")
    return float(block.data.successes.sum()) / q_total


def stderr_delta_ratio(block: Block) -> float:
    """Delta-method standard error of the ratio of sums R = sum(s)/sum(q).

    Uses population (1/N) moments: the bootstrap distribution of the ratio
    concentrates with the population variance of the observed block, and the
    2-record enumeration oracle pins this choice.
    """
    n = len(block)
    if n < 2:
        raise ValueError("delta-method standard error needs at least 2 records")
    s = block.data.successes.astype(np.float64)
    q = block.data.queries.astype(np.float64)
    q_bar = q.mean()
    if q_bar == 0:
        raise DegenerateBlock("query success rate undefined: block has no queries")
    ratio = s.sum() / q.sum()
    var_s = s.var()
    var_q = q.var()
    cov_sq = (s * q).mean() - s.mean() * q_bar
    inner = var_s - 2.0 * ratio * cov_sq + ratio * ratio * var_q
    if inner < 0:  # exact value is a variance; clip float residue
        inner = 0.0
    return float(np.sqrt(inner / (n * q_bar * q_bar)))


def _qsr_loo(block: Block) -> np.ndarray:
    s = block.data.successes.astype(np.float64)
    q = block.data.queries.astype(np.float64)
    den = q.sum() - q
    if np.any(den == 0):
        raise DegenerateBlock("leave-one-out ratio undefined: denominator is zero")
    return (s.sum() - s) / den


def _qsr_resample_stats(block: Block, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(block)
    s = block.data.successes.astype(np.float64)
    q = block.data.queries.astype(np.float64)
    m = ratio_resample_moments(idx, s, q)
    sum_s, sum_q, s2, q2, sq = m[:, 0], m[:, 1], m[:, 2], m[:, 3], m[:, 4]
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = sum_s / sum_q
        q_bar = sum_q / n
        var_s = s2 / n - (sum_s / n) ** 2
        var_q = q2 / n - q_bar**2
        cov_sq = sq / n - (sum_s / n) * q_bar
        inner = var_s - 2.0 * theta * cov_sq + theta * theta * var_q
        inner = np.maximum(inner, 0.0)
        sigma = np.sqrt(inner / (n * q_bar * q_bar))
    return theta, sigma


# ---------------------------------------------------------------------------
# Mean revenue: plain average, closed-form s/sqrt(N) standard error.


def _mean_revenue_value(block: Block) -> float:
    return float(block.data.revenue.mean())


def _stderr_mean_closed(block: Block) -> float:
    n = len(block)
    if n < 2:
        raise ValueError("standard error of the mean needs at least 2 records")
    return float(block.data.revenue.std(ddof=1) / np.sqrt(n))


def _mean_revenue_loo(block: Block) -> np.ndarray:
    r = block.data.revenue
    return (r.sum() - r) / (len(block) - 1)


def _mean_resample_stats(block: Block, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(block)
    m = mean_resample_moments(idx, block.data.revenue)
    total, total_sq = m[:, 0], m[:, 1]
    theta = total / n
    var = np.maximum(total_sq - total * theta, 0.0) / (n - 1)
    sigma = np.sqrt(var / n)
    return theta, sigma


# ---------------------------------------------------------------------------
# Jackknife (default for user-defined functionals, available for all).


def _generic_loo(block: Block, value: Callable[[Block], float]) -> np.ndarray:
    n = len(block)
    keep = np.ones(n, dtype=bool)
    out = np.empty(n)
    for i in range(n):
        keep[i] = False
        out[i] = value(Block(block.index, block.data.take(np.flatnonzero(keep))))
        keep[i] = True
    return out


def stderr_jackknife(block: Block, kind: MetricKind) -> float:
    """Leave-one-out jackknife standard error of ``kind`` on ``block``."""
    n = len(block)
    if n < 2:
        raise ValueError("jackknife needs at least 2 records")
    if kind.loo_values is not None:
        loo = kind.loo_values(block)
    else:
        loo = _generic_loo(block, kind.value)
    if not np.all(np.isfinite(loo)):
        raise DegenerateBlock("leave-one-out evaluation undefined on this block")
    dev = loo - loo.mean()
    return float(np.sqrt((n - 1) / n * np.dot(dev, dev)))


QUERY_SUCCESS_RATE = MetricKind(
    name="query-success-rate",
    value=_qsr_value,
    stderr=stderr_delta_ratio,
    loo_values=_qsr_loo,
    resample_stats=_qsr_resample_stats,
)

MEAN_REVENUE = MetricKind(
    name="mean-revenue",
    value=_mean_revenue_value,
    stderr=_stderr_mean_closed,
    loo_values=_mean_revenue_loo,
    resample_stats=_mean_resample_stats,
)

_BUILTIN_METRICS = {m.name: m for m in (QUERY_SUCCESS_RATE, MEAN_REVENUE)}


def custom_metric(name: str, value: Callable[[Block], float]) -> MetricKind:
    """User-defined functional; the jackknife supplies its standard error."""
    kind = MetricKind(name=name, value=value, stderr=lambda block: 0.0)
    # rebind stderr so it closes over the finished MetricKind
    object.__setattr__(kind, "stderr", lambda block: stderr_jackknife(block, kind))
    return kind


def metric_by_name(name: str) -> MetricKind:
    try:
        return _BUILTIN_METRICS[name]
    except KeyError:
        raise ValueError(
            f"unknown metric {name!r}; expected one of {sorted(_BUILTIN_METRICS)}"
        ) from None
