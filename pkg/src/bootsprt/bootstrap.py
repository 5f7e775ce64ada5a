"""Nonparametric bootstrap of studentized block statistics and Gaussian KDE.

For each block the studentized plug-in statistic is recomputed on B
resamples drawn with replacement, and a Gaussian kernel density estimate of
those samples serves as the block's likelihood.  All evaluation happens in
log space; likelihood ratios over many blocks would underflow otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._kernels import kde_fill_exponents, kde_max_exponents
from .errors import AllSamplesEqual, DegenerateBlock
from .metrics import Block, MetricKind, canonical_order, compute_metric

__all__ = [
    "BootstrapConfig",
    "KdeDensity",
    "fit_kde",
    "kde_eval",
    "kde_log_eval",
    "resample",
    "bootstrap_studentized_samples",
]

BandwidthRule = Union[str, float]

# Resamples whose metric or standard error is undefined are redrawn; give up
# once total draws exceed this multiple of B.
_REDRAW_BUDGET = 100


@dataclass(frozen=True)
class BootstrapConfig:
    """Resampling configuration.

    ``bandwidth_rule`` is either the string ``"silverman"`` or a fixed
    positive bandwidth.
    """

    n_boot: int = 1000
    bandwidth_rule: BandwidthRule = "silverman"
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_boot < 100:
            raise ValueError("n_boot must be at least 100")
        _check_bandwidth_rule(self.bandwidth_rule)


def _check_bandwidth_rule(rule: BandwidthRule) -> None:
    if isinstance(rule, str):
        if rule != "silverman":
            raise ValueError(f"unknown bandwidth rule {rule!r}")
    elif not (isinstance(rule, (int, float)) and math.isfinite(rule) and rule > 0):
        raise ValueError("fixed bandwidth must be a positive finite number")


class KdeDensity:
    """Gaussian kernel density over a fixed set of sample points.

    g(x) = 1/(B*h) * sum_b phi((x - c_b)/h), strictly positive everywhere.
    Centers are stored sorted.  Evaluation is a max-shifted log-sum-exp over
    all kernels: the dominant exponent comes from the nearest center, so the
    shifted sum is always >= 1 and the log-density stays finite for every
    finite argument.
    """

    __slots__ = ("centers", "bandwidth", "log_norm")

    _CHUNK = 4096  # evaluation points per exponent-matrix chunk

    def __init__(self, centers, bandwidth: float):
        c = np.sort(np.asarray(centers, dtype=np.float64))
        if c.size == 0:
            raise ValueError("need at least one sample point")
        if not np.all(np.isfinite(c)):
            raise ValueError("sample points must be finite")
        if not (math.isfinite(bandwidth) and bandwidth > 0):
            raise ValueError("bandwidth must be positive and finite")
        self.centers = c
        self.bandwidth = float(bandwidth)
        # log of the 1/(B*h*sqrt(2*pi)) kernel normalization
        self.log_norm = -math.log(c.size * self.bandwidth * math.sqrt(2.0 * math.pi))

    def log_pdf(self, x):
        """Log-density at ``x`` (scalar or array), finite for all finite x."""
        pts = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if not np.all(np.isfinite(pts)):
            raise ValueError("evaluation points must be finite")
        inv = 1.0 / self.bandwidth
        out = np.empty(pts.shape[0])
        buf = np.empty((min(pts.shape[0], self._CHUNK), self.centers.shape[0]))
        for lo in range(0, pts.shape[0], self._CHUNK):
            chunk = pts[lo : lo + self._CHUNK]
            mat = buf[: chunk.shape[0]]
            max_exp = kde_max_exponents(chunk, self.centers, inv)
            kde_fill_exponents(chunk, self.centers, inv, max_exp, mat)
            np.exp(mat, out=mat)
            out[lo : lo + self._CHUNK] = np.log(mat.sum(axis=1)) + max_exp
        out += self.log_norm
        return out[0] if np.isscalar(x) or np.asarray(x).ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


def fit_kde(samples, rule: BandwidthRule = "silverman") -> KdeDensity:
    """Fit a Gaussian KDE to ``samples``.

    Under the Silverman rule the bandwidth is
    0.9 * min(sd, iqr/1.34) * B**(-1/5) with the sample (ddof=1) standard
    deviation; zero-spread samples raise AllSamplesEqual.  A fixed bandwidth
    accepts any nonempty sample, including a single point.
    """
    _check_bandwidth_rule(rule)
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("need at least one sample")
    if isinstance(rule, str):
        if x.size < 2:
            raise AllSamplesEqual("Silverman bandwidth needs at least 2 samples")
        sd = float(x.std(ddof=1))
        if not sd > 0:
            raise AllSamplesEqual("samples have zero spread")
        q25, q75 = np.percentile(x, [25.0, 75.0])
        iqr = float(q75 - q25)
        scale = min(sd, iqr / 1.34) if iqr > 0 else sd
        bandwidth = 0.9 * scale * x.size ** (-1.0 / 5.0)
    else:
        bandwidth = float(rule)
    return KdeDensity(x, bandwidth)


def kde_eval(density: KdeDensity, x) -> float:
    """Density value at ``x``; may underflow to 0.0 in the extreme tail.

    Use kde_log_eval when the log-density is what matters.
    """
    return float(density.pdf(x))


def kde_log_eval(density: KdeDensity, x) -> float:
    """Log-density at ``x``; finite for every finite argument."""
    return float(density.log_pdf(x))


def resample(block: Block, rng: np.random.Generator) -> Block:
    """One with-replacement resample of the block, same size."""
    n = len(block)
    idx = rng.integers(0, n, size=n)
    return Block(block.index, block.data.take(idx))


def _draw_indices(rng: np.random.Generator, n_rows: int, n: int) -> np.ndarray:
    return rng.integers(0, n, size=(n_rows, n), dtype=np.int32)


def _studentized_with_estimate(
    block: Block, kind: MetricKind, cfg: BootstrapConfig, rng: np.random.Generator
) -> tuple[np.ndarray, float, float]:
    """Studentized bootstrap samples plus the source block's (theta, sigma).

    The block is put in canonical record order first so the result does not
    depend on within-block arrival order.
    """
    sorted_block = Block(block.index, canonical_order(block.data))
    theta_hat = compute_metric(sorted_block, kind)
    sigma = float(kind.stderr(sorted_block))
    if not sigma > 0:
        raise DegenerateBlock("block has zero standard error")

    n = len(sorted_block)
    n_boot = cfg.n_boot
    idx = _draw_indices(rng, n_boot, n)
    theta_star, sigma_star = _resample_stats(sorted_block, kind, idx)

    drawn = n_boot
    invalid = ~(np.isfinite(theta_star) & (sigma_star > 0))
    while np.any(invalid):
        n_bad = int(invalid.sum())
        if drawn + n_bad > _REDRAW_BUDGET * n_boot:
            raise DegenerateBlock(
                f"resample redraw budget exhausted after {drawn} draws"
            )
        redraw = _draw_indices(rng, n_bad, n)
        t_new, s_new = _resample_stats(sorted_block, kind, redraw)
        rows = np.flatnonzero(invalid)
        theta_star[rows] = t_new
        sigma_star[rows] = s_new
        drawn += n_bad
        invalid = ~(np.isfinite(theta_star) & (sigma_star > 0))

    samples = (theta_star - theta_hat) / sigma_star
    return samples, theta_hat, sigma


def _resample_stats(
    block: Block, kind: MetricKind, idx: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    if kind.resample_stats is not None:
        return kind.resample_stats(block, idx)
    # generic path: one Python-level evaluation per resample
    n_rows = idx.shape[0]
    theta = np.full(n_rows, np.nan)
    sigma = np.full(n_rows, np.nan)
    for b in range(n_rows):
        sub = Block(block.index, block.data.take(idx[b]))
        try:
            theta[b] = kind.value(sub)
            sigma[b] = kind.stderr(sub)
        except DegenerateBlock:
            continue
    return theta, sigma


def bootstrap_studentized_samples(
    block: Block, kind: MetricKind, cfg: BootstrapConfig, rng: np.random.Generator
) -> np.ndarray:
    """Studentized plug-in statistics on B with-replacement resamples.

    Each sample is (T(resample) - T(block)) / se(T(resample)).  Resamples
    with an undefined metric or zero standard error are redrawn, up to a
    total budget of 100*B draws.
    """
    samples, _, _ = _studentized_with_estimate(block, kind, cfg, rng)
    return samples
