"""Log-determinant portmanteau test with Monte Carlo p-values."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

DEFAULT_MC_REPS = 500


class StatisticUndefinedError(ArithmeticError):
    pass


def autocorrelations(x: np.ndarray, lags: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = np.dot(xc, xc)
    if denom <= 0:
        raise StatisticUndefinedError("zero-variance series has no autocorrelations")
    n = len(x)
    return np.array([np.dot(xc[k:], xc[: n - k]) / denom for k in range(1, lags + 1)])


def _batch_autocorrelations(x: np.ndarray, lags: int) -> np.ndarray:
    """Row-wise autocorrelations of a (reps, n) array via FFT."""
    xc = x - x.mean(axis=1, keepdims=True)
    n = x.shape[1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, : lags + 1]
    return acov[:, 1:] / acov[:, :1]


def _statistic_from_acf(r: np.ndarray, n: int) -> np.ndarray:
    """-(n / (m + 1)) log det R_m with Ljung-Box-standardized autocorrelations."""
    r = np.atleast_2d(r)
    m = r.shape[1]
    k = np.arange(1, m + 1)
    rt = r * np.sqrt((n + 2.0) / (n - k))
    stats = np.empty(r.shape[0])
    for i, row in enumerate(rt):
        sign, logdet = np.linalg.slogdet(toeplitz(np.r_[1.0, row]))
        stats[i] = -(n / (m + 1.0)) * logdet if sign > 0 else np.nan
    return stats


def pena_rodriguez_statistic(x, lags: int = 20) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if lags >= n / 4:
        raise ValueError(f"lags={lags} must be below length/4={n / 4:.1f}")
    stat = _statistic_from_acf(autocorrelations(x, lags), n)[0]
    if not np.isfinite(stat):
        raise StatisticUndefinedError("autocorrelation matrix is not positive definite")
    return float(stat)


@lru_cache(maxsize=256)
def null_distribution(n: int, lags: int, squared: bool, mc_reps: int, seed: int) -> np.ndarray:
    """Sorted statistics of ``mc_reps`` iid Gaussian series of length ``n``."""
    rng = np.random.default_rng([seed, n, lags, int(squared)])
    out = []
    chunk = 250
    for start in range(0, mc_reps, chunk):
        z = rng.standard_normal((min(chunk, mc_reps - start), n))
        if squared:
            z = z * z
        out.append(_statistic_from_acf(_batch_autocorrelations(z, lags), n))
    stats = np.concatenate(out)
    stats = stats[np.isfinite(stats)]
    stats.sort()
    return stats


def pena_rodriguez_test(x, lags: int = 20, mc_reps: int = DEFAULT_MC_REPS, seed: int = 0,
                        squared: bool = False) -> float:
    """Monte Carlo p-value for no autocorrelation in ``x`` (or in ``x**2``).

    The null distribution is built from iid Gaussian series of equal length
    (squared as well when ``squared`` is set) and cached per configuration.
    """
    x = np.asarray(x, dtype=float)
    target = x * x if squared else x
    stat = pena_rodriguez_statistic(target, lags)
    null = null_distribution(len(x), lags, bool(squared), int(mc_reps), int(seed))
    exceed = len(null) - np.searchsorted(null, stat, side="left")
    return float((1 + exceed) / (len(null) + 1))
