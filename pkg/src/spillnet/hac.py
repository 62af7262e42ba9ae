"""Linear trend tests with Newey-West (1994) HAC standard errors.

Quadratic-spectral kernel with the Newey-West automatic bandwidth; used for
the per-market centrality trend columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class TrendTest:
    slope: float
    intercept: float
    se: float
    tstat: float
    pvalue: float
    bandwidth: float
    nobs: int
    degenerate: bool = False


def qs_kernel(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    z = 6.0 * math.pi * x[nz] / 5.0
    out[nz] = 25.0 / (12.0 * math.pi ** 2 * x[nz] ** 2) * (np.sin(z) / z - np.cos(z))
    return out


def nw_automatic_bandwidth(v: np.ndarray) -> float:
    """Newey-West (1994) plug-in bandwidth for the quadratic-spectral kernel."""
    T = len(v)
    n = int(math.floor(4.0 * (T / 100.0) ** (2.0 / 25.0)))
    sig = np.array([np.dot(v[j:], v[: T - j]) / T for j in range(n + 1)])
    j = np.arange(1, n + 1)
    s0 = sig[0] + 2.0 * sig[1:].sum()
    s2 = 2.0 * np.sum(j ** 2 * sig[1:])
    if s0 == 0:
        return 0.0
    gamma = 1.3221 * ((s2 / s0) ** 2) ** 0.2
    return float(gamma * T ** 0.2)


def hac_covariance(X: np.ndarray, u: np.ndarray, bandwidth: float) -> np.ndarray:
    """Sandwich covariance of OLS coefficients with QS weights at ``bandwidth``."""
    T = X.shape[0]
    h = X * u[:, None]
    omega = h.T @ h / T
    if bandwidth > 0:
        w = qs_kernel(np.arange(1, T) / bandwidth)
        for j in range(1, T):
            g = h[j:].T @ h[: T - j] / T
            omega += w[j - 1] * (g + g.T)
    bread = np.linalg.inv(X.T @ X)
    return T * bread @ omega @ bread


def hac_trend_test(series, bandwidth: float | None = None) -> TrendTest:
    """OLS of ``series`` on (1, t) with HAC standard errors and a two-sided p-value.

    ``t`` counts observations from 1. Student-t reference with T - 2 degrees
    of freedom. A perfect fit (including a constant series) is flagged
    ``degenerate``.
    """
    y = np.asarray(series, dtype=float)
    T = len(y)
    if T < 10:
        raise ValueError(f"trend test needs at least 10 observations, got {T}")
    t = np.arange(1, T + 1, dtype=float)
    X = np.column_stack([np.ones(T), t])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    u = y - X @ beta
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.max(np.abs(u)) <= 1e-12 * scale:
        slope = float(beta[1]) if abs(beta[1]) > 1e-12 * scale else 0.0
        tstat = math.copysign(math.inf, slope) if slope else 0.0
        return TrendTest(slope, float(beta[0]), 0.0, tstat, 0.0 if slope else 1.0, 0.0, T, degenerate=True)
    if bandwidth is None:
        bandwidth = nw_automatic_bandwidth((t - t.mean()) * u)
    cov = hac_covariance(X, u, bandwidth)
    se = math.sqrt(max(cov[1, 1], 0.0))
    tstat = beta[1] / se if se > 0 else math.inf
    p = float(2.0 * stats.t.sf(abs(tstat), df=T - 2))
    return TrendTest(float(beta[1]), float(beta[0]), se, float(tstat), p, float(bandwidth), T)
