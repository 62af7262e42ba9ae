"""ARFIMA mean-equation filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

DEFAULT_TRUNCATION = 1000


@dataclass(frozen=True)
class ArfimaSpec:
    p: int
    q: int
    d: float = 0.0
    mu: float = 0.0
    phi: tuple = field(default_factory=tuple)
    theta: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if abs(self.d) >= 0.5:
            raise ValueError(f"|d| must be < 0.5, got {self.d}")
        if len(self.phi) != self.p or len(self.theta) != self.q:
            raise ValueError("coefficient counts do not match (p, q)")


def frac_diff_weights(d: float, n: int) -> np.ndarray:
    """Binomial coefficients of (1 - L)^d up to lag ``n - 1``."""
    w = np.empty(n)
    w[0] = 1.0
    for k in range(1, n):
        w[k] = w[k - 1] * (k - 1 - d) / k
    return w


def frac_diff(z, d: float, trunc: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Apply (1 - L)^d with the expansion truncated at ``min(t, trunc)`` lags."""
    z = np.asarray(z, dtype=float)
    if trunc < 1:
        raise ValueError("trunc must be a positive integer")
    if d == 0.0:
        return z.copy()
    w = frac_diff_weights(d, min(len(z), trunc + 1))
    return np.convolve(z, w)[: len(z)]


@njit(cache=True, error_model="numpy")
def _frac_diff_nb(z, d, trunc):
    n = z.shape[0]
    m = min(n, trunc + 1)
    w = np.empty(m)
    w[0] = 1.0
    for k in range(1, m):
        w[k] = w[k - 1] * (k - 1 - d) / k
    out = np.empty(n)
    for t in range(n):
        acc = 0.0
        for k in range(min(t + 1, m)):
            acc += w[k] * z[t - k]
        out[t] = acc
    return out


@njit(cache=True, error_model="numpy")
def arma_residuals(w, phi, theta):
    """eps_t = w_t - sum phi_i w_{t-i} - sum theta_j eps_{t-j}, zero pre-sample."""
    n = w.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    eps = np.empty(n)
    for t in range(n):
        e = w[t]
        for i in range(p):
            if t - i - 1 >= 0:
                e -= phi[i] * w[t - i - 1]
        for j in range(q):
            if t - j - 1 >= 0:
                e -= theta[j] * eps[t - j - 1]
        eps[t] = e
    return eps


def polynomial_is_stable(coefs) -> bool:
    """True when 1 - c_1 L - ... - c_k L^k has all roots outside the unit circle."""
    c = np.asarray(coefs, dtype=float)
    if c.size == 0 or not np.any(c):
        return True
    if c.size == 1:
        return abs(c[0]) < 1.0
    if c.size == 2:
        return c[0] + c[1] < 1.0 and c[1] - c[0] < 1.0 and abs(c[1]) < 1.0
    roots = np.roots(np.r_[-c[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0))


def simulate_arfima(eps: np.ndarray, spec: ArfimaSpec, trunc: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Returns r = mu + z where (1 - phi(L))(1-L)^d z = (1 + theta(L)) eps."""
    n = len(eps)
    u = eps.copy()
    for j, th in enumerate(spec.theta, start=1):
        u[j:] += th * eps[:-j]
    w = u.copy()
    for t in range(n):
        for i, ph in enumerate(spec.phi, start=1):
            if t - i >= 0:
                w[t] += ph * w[t - i]
    z = frac_diff(w, -spec.d, trunc) if spec.d else w
    return spec.mu + z
