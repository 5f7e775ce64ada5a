"""Numba kernels for the resampling and kernel-density hot loops.

Every loop accumulates in a fixed serial order, so results are
bit-reproducible for a given seed and do not depend on process-level
parallelism or BLAS threading.
"""

import numpy as np
from numba import njit

# Distances are capped so squared exponents stay representable; the
# log-density saturates around -5e299 instead of overflowing to -inf.
_MAX_SCALED_DISTANCE = 1e150


@njit(cache=True)
def ratio_resample_moments(idx, s, q):
    """Raw moments of (s, q) under each resample row of ``idx``.

    Returns an (B, 5) array of [sum s, sum q, sum s^2, sum q^2, sum s*q]
    per resample.
    """
    n_res, n = idx.shape
    out = np.empty((n_res, 5))
    for b in range(n_res):
        ss = 0.0
        sq_sum = 0.0
        s2 = 0.0
        q2 = 0.0
        sq = 0.0
        for j in range(n):
            i = idx[b, j]
            sv = s[i]
            qv = q[i]
            ss += sv
            sq_sum += qv
            s2 += sv * sv
            q2 += qv * qv
            sq += sv * qv
        out[b, 0] = ss
        out[b, 1] = sq_sum
        out[b, 2] = s2
        out[b, 3] = q2
        out[b, 4] = sq
    return out


@njit(cache=True)
def mean_resample_moments(idx, x):
    """Raw moments of ``x`` under each resample row of ``idx``.

    Returns an (B, 2) array of [sum x, sum x^2] per resample.
    """
    n_res, n = idx.shape
    out = np.empty((n_res, 2))
    for b in range(n_res):
        sx = 0.0
        sx2 = 0.0
        for j in range(n):
            v = x[idx[b, j]]
            sx += v
            sx2 += v * v
        out[b, 0] = sx
        out[b, 1] = sx2
    return out


@njit(cache=True)
def kde_max_exponents(points, centers, inv_bandwidth):
    """Per-point dominant kernel exponent, -0.5*((p - nearest)/h)^2.

    ``centers`` must be sorted ascending; the nearest center is found by
    bisection.  Shifting by this maximum makes the dominant term of the
    kernel sum exactly exp(0), so the summed exponentials never overflow.
    """
    n_pts = points.shape[0]
    n_ctr = centers.shape[0]
    out = np.empty(n_pts)
    for i in range(n_pts):
        p = points[i]
        lo = 0
        hi = n_ctr
        while lo < hi:
            mid = (lo + hi) // 2
            if centers[mid] < p:
                lo = mid + 1
            else:
                hi = mid
        dmin = np.inf
        if lo < n_ctr:
            d = abs(centers[lo] - p)
            if d < dmin:
                dmin = d
        if lo > 0:
            d = abs(centers[lo - 1] - p)
            if d < dmin:
                dmin = d
        u = dmin * inv_bandwidth
        if u > _MAX_SCALED_DISTANCE:
            u = _MAX_SCALED_DISTANCE
        out[i] = -0.5 * u * u
    return out


@njit(cache=True)
def kde_fill_exponents(points, centers, inv_bandwidth, max_exponents, out):
    """Shifted kernel exponents -0.5*((p - c)/h)^2 - max_exponent[p].

    Distances are capped exactly as in kde_max_exponents, so the dominant
    term's entry is exactly 0.0 for every point.
    """
    n_ctr = centers.shape[0]
    for i in range(points.shape[0]):
        p = points[i]
        m = max_exponents[i]
        for b in range(n_ctr):
            u = (p - centers[b]) * inv_bandwidth
            if u > _MAX_SCALED_DISTANCE:
                u = _MAX_SCALED_DISTANCE
            elif u < -_MAX_SCALED_DISTANCE:
                u = -_MAX_SCALED_DISTANCE
            out[i, b] = -0.5 * u * u - m
