"""Conditional variance recursions for the supported GARCH family members."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

FAMILIES = ("GARCH", "GJR", "EGARCH", "APARCH")
FAMILY_CODE = {name: i for i, name in enumerate(FAMILIES)}
GAUSS_EABS = math.sqrt(2.0 / math.pi)


class NumericalOverflowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GarchSpec:
    """One conditional-variance specification.

    ``gamma`` is the per-lag asymmetry term (unused for plain GARCH) and
    ``delta`` the APARCH power (fixed at 2 otherwise).
    """

    family: str
    omega: float
    alpha: tuple
    beta: tuple
    gamma: tuple = field(default_factory=tuple)
    delta: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown GARCH family {self.family!r}")
        if self.family != "GARCH" and len(self.gamma) != len(self.alpha):
            raise ValueError(f"{self.family} needs one gamma per ARCH lag")

    @property
    def r(self) -> int:
        return len(self.alpha)

    @property
    def s(self) -> int:
        return len(self.beta)

    def n_params(self) -> int:
        return n_garch_params(self.family, self.r, self.s)

    def arrays(self):
        gamma = self.gamma if self.family != "GARCH" else (0.0,) * self.r
        return (
            FAMILY_CODE[self.family],
            float(self.omega),
            np.asarray(self.alpha, dtype=float),
            np.asarray(gamma, dtype=float),
            np.asarray(self.beta, dtype=float),
            float(self.delta),
        )


def n_garch_params(family: str, r: int, s: int) -> int:
    n = 1 + r + s
    if family in ("GJR", "EGARCH", "APARCH"):
        n += r
    if family == "APARCH":
        n += 1
    return n


def aparch_kappa(gamma: float, delta: float) -> float:
    """E(|z| - gamma z)^delta for standard normal z."""
    return (
        ((1 + gamma) ** delta + (1 - gamma) ** delta)
        * 2 ** (delta / 2 - 1)
        * math.gamma((delta + 1) / 2)
        / math.sqrt(math.pi)
    )


def persistence(spec: GarchSpec) -> float:
    a = np.asarray(spec.alpha, float)
    b = float(np.sum(spec.beta))
    if spec.family == "GARCH":
        return float(a.sum()) + b
    if spec.family == "GJR":
        return float(a.sum() + 0.5 * np.sum(spec.gamma)) + b
    if spec.family == "EGARCH":
        return abs(b)
    return float(sum(ai * aparch_kappa(g, spec.delta) for ai, g in zip(a, spec.gamma))) + b


def is_stationary(spec: GarchSpec) -> bool:
    a = np.asarray(spec.alpha, float)
    b = np.asarray(spec.beta, float)
    g = np.asarray(spec.gamma, float)
    if spec.family == "EGARCH":
        return persistence(spec) < 1.0
    if spec.omega <= 0 or np.any(a < 0) or np.any(b < 0):
        return False
    if spec.family == "GJR" and np.any(a + g < 0):
        return False
    if spec.family == "APARCH" and (spec.delta <= 0 or np.any(np.abs(g) >= 1)):
        return False
    return persistence(spec) < 1.0


def unconditional_variance(spec: GarchSpec) -> float:
    if spec.family in ("GARCH", "GJR"):
        return spec.omega / (1.0 - persistence(spec))
    if spec.family == "EGARCH":
        # exact only without the sign/size terms; used for seeding simulations
        return math.exp(spec.omega / (1.0 - sum(spec.beta)))
    return (spec.omega / (1.0 - persistence(spec))) ** (2.0 / spec.delta)


@njit(cache=True, error_model="numpy")
def _next_variance(family, eps, sig2, t, omega, alpha, gamma, beta, delta, sig0sq, eabs):
    r = alpha.shape[0]
    s = beta.shape[0]
    acc = omega
    if family == 2:
        for k in range(r):
            j = t - k - 1
            if j >= 0:
                eta = eps[j] / math.sqrt(sig2[j])
                acc += alpha[k] * eta + gamma[k] * (abs(eta) - eabs)
        for l in range(s):
            j = t - l - 1
            acc += beta[l] * (math.log(sig2[j]) if j >= 0 else math.log(sig0sq))
        return math.exp(min(acc, 700.0))
    if family == 3:
        pd0 = sig0sq ** (0.5 * delta)
        for k in range(r):
            j = t - k - 1
            acc += alpha[k] * ((abs(eps[j]) - gamma[k] * eps[j]) ** delta if j >= 0 else pd0)
        for l in range(s):
            j = t - l - 1
            acc += beta[l] * (sig2[j] ** (0.5 * delta) if j >= 0 else pd0)
        return acc ** (2.0 / delta)
    for k in range(r):
        j = t - k - 1
        if j >= 0:
            a = alpha[k]
            if family == 1 and eps[j] < 0:
                a += gamma[k]
            acc += a * eps[j] * eps[j]
        else:
            a = alpha[k]
            if family == 1:
                a += 0.5 * gamma[k]
            acc += a * sig0sq
    for l in range(s):
        j = t - l - 1
        acc += beta[l] * (sig2[j] if j >= 0 else sig0sq)
    return acc


@njit(cache=True, error_model="numpy")
def variance_recursion(family, eps, omega, alpha, gamma, beta, delta, sig0sq, eabs):
    n = eps.shape[0]
    out = np.empty(n)
    for t in range(n):
        out[t] = _next_variance(family, eps, out, t, omega, alpha, gamma, beta, delta, sig0sq, eabs)
    return out


def garch_variance_path(spec: GarchSpec, eps, sigma0_sq: float | None = None,
                        eabs: float = GAUSS_EABS) -> np.ndarray:
    """Conditional variances sigma_t^2 for t = 1..T given innovations ``eps``.

    Pre-sample squared innovations and variances are set to ``sigma0_sq``
    (default: sample variance of ``eps``).
    """
    eps = np.asarray(eps, dtype=float)
    if sigma0_sq is None:
        sigma0_sq = float(np.var(eps))
    fam, omega, alpha, gamma, beta, delta = spec.arrays()
    out = variance_recursion(fam, eps, omega, alpha, gamma, beta, delta, float(sigma0_sq), eabs)
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise NumericalOverflowError(f"{spec.family} variance path is not finite and positive")
    return out


def simulate_garch(spec: GarchSpec, eta: np.ndarray, burn: int = 500, eabs: float = GAUSS_EABS):
    """Drive the recursion with standardized innovations ``eta``; returns (eps, sigma2).

    The first ``burn`` innovations are discarded so the returned path starts
    close to stationarity.
    """
    eta = np.asarray(eta, dtype=float)
    fam, omega, alpha, gamma, beta, delta = spec.arrays()
    n = len(eta)
    eps = np.empty(n)
    sig2 = _simulate(fam, eta, omega, alpha, gamma, beta, delta, unconditional_variance(spec), eabs, eps)
    return eps[burn:], sig2[burn:]


@njit(cache=True, error_model="numpy")
def _simulate(family, eta, omega, alpha, gamma, beta, delta, sig0sq, eabs, eps):
    n = eta.shape[0]
    sig2 = np.empty(n)
    for t in range(n):
        sig2[t] = _next_variance(family, eps, sig2, t, omega, alpha, gamma, beta, delta, sig0sq, eabs)
        eps[t] = math.sqrt(sig2[t]) * eta[t]
    return sig2
