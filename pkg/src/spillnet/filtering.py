"""Joint ARFIMA-GARCH maximum likelihood with Johnson-SU innovations.

``fit_model`` estimates one specification; ``select_model`` runs the
parsimony-first selection ladder over the order grid and returns the fit whose
standardized residuals feed the causality tests.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .arfima import DEFAULT_TRUNCATION, ArfimaSpec, _frac_diff_nb, arma_residuals
from .diagnostics import DEFAULT_MC_REPS, StatisticUndefinedError, pena_rodriguez_test
from .garch import FAMILIES, FAMILY_CODE, GAUSS_EABS, GarchSpec, _next_variance, n_garch_params
from .johnson_su import JohnsonSuParams, _std_logpdf_sum

log = logging.getLogger(__name__)

MIN_FIT_LENGTH = 100
MIN_SELECT_LENGTH = 250
_BAD = 1e10


class FitFailedError(RuntimeError):
    pass


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelShape:
    p: int
    q: int
    d_free: bool
    family: str
    r: int
    s: int

    @property
    def order_sum(self) -> int:
        return self.p + self.q + self.r + self.s

    def n_params(self) -> int:
        # mean constant + ARMA + d + variance equation + (lambda, zeta)
        return 1 + self.p + self.q + int(self.d_free) + n_garch_params(self.family, self.r, self.s) + 2

    def label(self) -> str:
        d = "d" if self.d_free else "0"
        return f"ARFIMA({self.p},{d},{self.q})-{self.family}({self.r},{self.s})"


@dataclass(frozen=True)
class FilterFit:
    arfima: ArfimaSpec
    garch: GarchSpec
    dist: JohnsonSuParams
    loglik: float
    bic: float
    std_residuals: np.ndarray
    n_params: int
    nobs: int
    converged: bool = True
    diag_pvalues: tuple | None = None
    dates: np.ndarray | None = None
    stage: str = ""
    trace: tuple = field(default_factory=tuple)
    std_errors: dict | None = None

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.arfima.p, self.arfima.q, self.arfima.d != 0.0 or self.stage == "d-free",
                          self.garch.family, self.garch.r, self.garch.s)

    @property
    def order_sum(self) -> int:
        return self.arfima.p + self.arfima.q + self.garch.r + self.garch.s


def bic(loglik: float, k: int, nobs: int) -> float:
    return k * math.log(nobs) - 2.0 * loglik


# ---------------------------------------------------------------------------
# likelihood


@njit(cache=True, error_model="numpy")
def _unpack_variance(theta, i, fam, r, s):
    omega = theta[i]
    i += 1
    alpha = theta[i:i + r]
    i += r
    if fam == 0:
        gamma = np.zeros(r)
    else:
        gamma = theta[i:i + r]
        i += r
    beta = theta[i:i + s]
    i += s
    delta = 2.0
    if fam == 3:
        delta = theta[i]
        i += 1
    return omega, alpha, gamma, beta, delta, i


@njit(cache=True, error_model="numpy")
def _penalty(phi, th, fam, alpha, gamma, beta, delta):
    pen = 0.0
    # AR stationarity / MA invertibility for orders <= 2
    for c in (phi, -th):
        if c.shape[0] == 1:
            pen += max(0.0, abs(c[0]) - 0.999) ** 2
        elif c.shape[0] == 2:
            pen += max(0.0, c[0] + c[1] - 0.999) ** 2
            pen += max(0.0, c[1] - c[0] - 0.999) ** 2
    if fam == 2:
        pers = abs(beta.sum())
    elif fam == 3:
        k = 2.0 ** (delta / 2 - 1) * math.gamma((delta + 1) / 2) / math.sqrt(math.pi)
        pers = beta.sum()
        for j in range(alpha.shape[0]):
            pers += alpha[j] * ((1 + gamma[j]) ** delta + (1 - gamma[j]) ** delta) * k
    elif fam == 1:
        pers = alpha.sum() + 0.5 * gamma.sum() + beta.sum()
        for j in range(alpha.shape[0]):
            pen += max(0.0, -(alpha[j] + gamma[j])) ** 2
    else:
        pers = alpha.sum() + beta.sum()
    pen += max(0.0, pers - 0.999) ** 2
    return pen


@njit(cache=True, error_model="numpy")
def _filter(theta, y, p, q, dfree, fam, r, s, trunc, eabs):
    mu = theta[0]
    phi = theta[1:1 + p]
    th = theta[1 + p:1 + p + q]
    i = 1 + p + q
    z = y - mu
    if dfree:
        w = _frac_diff_nb(z, theta[i], trunc)
        i += 1
    else:
        w = z
    eps = arma_residuals(w, phi, th)
    omega, alpha, gamma, beta, delta, i = _unpack_variance(theta, i, fam, r, s)
    lam = theta[i]
    zeta = theta[i + 1]
    n = eps.shape[0]
    m = eps.mean()
    sig0 = 0.0
    for t in range(n):
        sig0 += (eps[t] - m) ** 2
    sig0 /= n
    sig2 = np.empty(n)
    for t in range(n):
        sig2[t] = _next_variance(fam, eps, sig2, t, omega, alpha, gamma, beta, delta, sig0, eabs)
    pen = _penalty(phi, th, fam, alpha, gamma, beta, delta)
    return eps, sig2, lam, zeta, pen


@njit(cache=True, error_model="numpy")
def _negloglik(theta, y, p, q, dfree, fam, r, s, trunc, eabs):
    eps, sig2, lam, zeta, pen = _filter(theta, y, p, q, dfree, fam, r, s, trunc, eabs)
    n = eps.shape[0]
    eta = np.empty(n)
    half_logv = 0.0
    for t in range(n):
        v = sig2[t]
        if not (v > 1e-300) or not math.isfinite(v):
            return _BAD
        eta[t] = eps[t] / math.sqrt(v)
        half_logv += 0.5 * math.log(v)
    ll = _std_logpdf_sum(eta, lam, zeta) - half_logv
    if not math.isfinite(ll):
        return _BAD
    return -ll + 1e3 * n * pen


# ---------------------------------------------------------------------------
# parameter layout


_VAR_BOUNDS = {
    # (omega, alpha, gamma, beta)
    "GARCH": ((1e-8, 5.0), (0.0, 0.99), None, (0.0, 0.9999)),
    "GJR": ((1e-8, 5.0), (0.0, 0.99), (-0.99, 0.99), (0.0, 0.9999)),
    "EGARCH": ((-5.0, 5.0), (-1.0, 1.0), (-1.0, 2.0), (-0.9999, 0.9999)),
    "APARCH": ((1e-8, 5.0), (0.0, 0.99), (-0.99, 0.99), (0.0, 0.9999)),
}


def _bounds(shape: ModelShape, mean: float):
    b = [(mean - 1.0, mean + 1.0)]
    b += [(-0.99, 0.99)] * (shape.p + shape.q)
    if shape.d_free:
        b.append((-0.49, 0.49))
    om, al, ga, be = _VAR_BOUNDS[shape.family]
    b.append(om)
    b += [al] * shape.r
    if ga is not None:
        b += [ga] * shape.r
    b += [be] * shape.s
    if shape.family == "APARCH":
        b.append((0.2, 3.5))
    b += [(-3.0, 3.0), (0.02, 3.0)]
    return b


def _split(total: float, n: int) -> list[float]:
    weights = [0.7, 0.3] if n == 2 else [1.0 / n] * n if n else []
    if n > 2:
        weights = list(np.geomspace(1, 0.3, n) / np.geomspace(1, 0.3, n).sum())
    return [total * w for w in weights]


_STARTS = (
    # (arch mass, garch mass, lambda, zeta, arma start)
    (0.05, 0.90, 0.0, 0.5, 0.0),
    (0.10, 0.85, 0.0, 0.2, 0.05),
    (0.03, 0.95, -0.1, 0.8, -0.05),
    (0.15, 0.70, 0.1, 0.35, 0.0),
    (0.08, 0.80, 0.0, 1.0, 0.1),
)


def _start(shape: ModelShape, y: np.ndarray, k: int) -> np.ndarray:
    a_tot, b_tot, lam, zeta, arma = _STARTS[k % len(_STARTS)]
    var = float(np.var(y))
    x = [float(np.mean(y))]
    x += [arma / (i + 1) for i in range(shape.p)]
    x += [arma / (i + 1) for i in range(shape.q)]
    if shape.d_free:
        x.append(0.1 if k % 2 == 0 else -0.1)
    fam = shape.family
    if fam == "GARCH":
        x += [var * (1 - a_tot - b_tot)] + _split(a_tot, shape.r) + _split(b_tot, shape.s)
    elif fam == "GJR":
        x += [var * (1 - a_tot - b_tot)] + _split(0.5 * a_tot, shape.r) + _split(a_tot, shape.r)
        x += _split(b_tot, shape.s)
    elif fam == "EGARCH":
        pers = min(a_tot + b_tot, 0.98)
        x += [(1 - pers) * math.log(var)] + _split(-0.05, shape.r) + _split(2 * a_tot, shape.r)
        x += _split(pers, shape.s)
    else:
        delta = 2.0 if k % 2 == 0 else 1.5
        gamma = 0.1
        kappa = 2 ** (delta / 2 - 1) * math.gamma((delta + 1) / 2) / math.sqrt(math.pi)
        kappa *= (1 + gamma) ** delta + (1 - gamma) ** delta
        x += [(1 - a_tot - b_tot) * var ** (delta / 2)] + _split(a_tot / kappa, shape.r)
        x += [gamma] * shape.r + _split(b_tot, shape.s) + [delta]
    x += [lam, zeta]
    return np.asarray(x, dtype=float)


def _params_from_vector(theta, shape: ModelShape, scale: float):
    i = 0
    mu = theta[i] * scale
    i += 1
    phi = tuple(float(v) for v in theta[i:i + shape.p])
    i += shape.p
    th = tuple(float(v) for v in theta[i:i + shape.q])
    i += shape.q
    d = 0.0
    if shape.d_free:
        d = float(theta[i])
        i += 1
    omega = float(theta[i])
    i += 1
    alpha = tuple(float(v) for v in theta[i:i + shape.r])
    i += shape.r
    gamma = ()
    if shape.family != "GARCH":
        gamma = tuple(float(v) for v in theta[i:i + shape.r])
        i += shape.r
    beta = tuple(float(v) for v in theta[i:i + shape.s])
    i += shape.s
    delta = 2.0
    if shape.family == "APARCH":
        delta = float(theta[i])
        i += 1
    lam, zeta = float(theta[i]), float(theta[i + 1])
    # back to the original return scale
    if shape.family in ("GARCH", "GJR"):
        omega *= scale ** 2
    elif shape.family == "EGARCH":
        omega += (1.0 - sum(beta)) * math.log(scale ** 2)
    else:
        omega *= scale ** delta
    arfima = ArfimaSpec(shape.p, shape.q, d, float(mu), phi, th)
    garch = GarchSpec(shape.family, omega, alpha, beta, gamma, delta)
    return arfima, garch, JohnsonSuParams(lam, zeta)


def _objective(shape: ModelShape, y: np.ndarray, trunc: int):
    args = (y, shape.p, shape.q, shape.d_free, FAMILY_CODE[shape.family], shape.r, shape.s, trunc, GAUSS_EABS)

    def f(theta):
        return _negloglik(theta, *args)

    return f


def _numerical_hessian(f, x, bounds, rel=1e-4):
    k = len(x)
    h = rel * np.maximum(np.abs(x), 1e-2)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    H = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        for j in range(i, k):
            def ev(si, sj):
                z = x.copy()
                z[i] += si * h[i]
                z[j] += sj * h[j]
                return f(np.clip(z, lo, hi))
            if i == j:
                H[i, i] = (ev(1, 0) - 2 * f0 + ev(-1, 0)) / h[i] ** 2
            else:
                H[i, j] = H[j, i] = (ev(1, 1) - ev(1, -1) - ev(-1, 1) + ev(-1, -1)) / (4 * h[i] * h[j])
    return H


def fit_model(r, p: int = 1, q: int = 1, d_free: bool = False, family: str = "GARCH",
              r_order: int = 1, s_order: int = 1, *, dates=None, n_starts: int = 5,
              trunc: int = DEFAULT_TRUNCATION, tol: float = 1e-8, compute_se: bool = False) -> FilterFit:
    """Maximize the joint Johnson-SU likelihood of one ARFIMA-GARCH specification.

    Bounded L-BFGS-B from ``n_starts`` deterministic starting points; the best
    finite optimum is kept. Returns are rescaled to unit variance internally
    and parameters are reported on the original scale.
    """
    r = np.asarray(r, dtype=float)
    if len(r) < MIN_FIT_LENGTH:
        raise FitFailedError(f"need at least {MIN_FIT_LENGTH} observations, got {len(r)}")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if not np.all(np.isfinite(r)):
        raise FitFailedError("returns contain non-finite values")
    scale = float(np.std(r))
    if not scale > 1e-12 * max(1.0, float(np.max(np.abs(r)))):
        raise FitFailedError("degenerate (constant) series")
    y = r / scale
    shape = ModelShape(p, q, d_free, family, r_order, s_order)
    f = _objective(shape, y, trunc)
    bounds = _bounds(shape, float(np.mean(y)))
    best = None
    for k in range(n_starts):
        x0 = np.clip(_start(shape, y, k), [b[0] for b in bounds], [b[1] for b in bounds])
        if f(x0) >= _BAD:
            continue
        res = minimize(f, x0, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": tol, "gtol": 1e-6, "maxiter": 1000})
        if np.isfinite(res.fun) and res.fun < _BAD and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailedError(f"{shape.label()}: no start reached a finite likelihood")
    theta = best.x
    eps, sig2, *_ = _filter(theta, y, p, q, d_free, FAMILY_CODE[family], r_order, s_order, trunc, GAUSS_EABS)
    if np.any(~np.isfinite(sig2)) or np.any(sig2 <= 0):
        raise FitFailedError(f"{shape.label()}: non-positive conditional variance")
    if np.min(sig2) < 1e-10:
        raise FitFailedError(f"{shape.label()}: degenerate conditional variance")
    std_res = eps / np.sqrt(sig2)
    n = len(y)
    loglik = -float(_negloglik(theta, y, p, q, d_free, FAMILY_CODE[family], r_order, s_order, trunc,
                               GAUSS_EABS)) - n * math.log(scale)
    arfima, garch, dist = _params_from_vector(theta, shape, scale)
    k = shape.n_params()
    se = None
    if compute_se:
        H = _numerical_hessian(f, theta, bounds)
        try:
            cov = np.linalg.inv(H)
            se = dict(zip(_param_names(shape), np.sqrt(np.clip(np.diag(cov), 0, None))))
        except np.linalg.LinAlgError:
            se = None
    return FilterFit(
        arfima=arfima, garch=garch, dist=dist, loglik=loglik, bic=bic(loglik, k, n),
        std_residuals=std_res, n_params=k, nobs=n, converged=bool(best.success),
        dates=None if dates is None else np.asarray(dates, dtype="datetime64[D]"),
        std_errors=se,
    )


def _param_names(shape: ModelShape) -> list[str]:
    """Names in vector order; standard errors are on the unit-variance scale."""
    names = ["mu"] + [f"phi{i + 1}" for i in range(shape.p)] + [f"theta{j + 1}" for j in range(shape.q)]
    if shape.d_free:
        names.append("d")
    names.append("omega")
    names += [f"alpha{i + 1}" for i in range(shape.r)]
    if shape.family != "GARCH":
        names += [f"gamma{i + 1}" for i in range(shape.r)]
    names += [f"beta{i + 1}" for i in range(shape.s)]
    if shape.family == "APARCH":
        names.append("delta")
    return names + ["lambda", "zeta"]


# ---------------------------------------------------------------------------
# selection ladder


def candidate_grid(families=FAMILIES, orders=(1, 2), d_free: bool = False) -> list[ModelShape]:
    """All (p, q, r, s) x family shapes, ordered by parameter-order sum then family."""
    shapes = [
        ModelShape(p, q, d_free, fam, r, s)
        for p, q, r, s in itertools.product(orders, repeat=4)
        for fam in families
    ]
    rank = {fam: i for i, fam in enumerate(FAMILIES)}
    return sorted(shapes, key=lambda m: (m.order_sum, rank[m.family], m.p, m.q, m.r, m.s))


def residual_diagnostics(s: np.ndarray, lags: int = 20, mc_reps: int = DEFAULT_MC_REPS,
                         seed: int = 0) -> tuple[float, float]:
    """Portmanteau p-values on standardized residuals and on their squares."""
    p_lev = pena_rodriguez_test(s, lags, mc_reps, seed, squared=False)
    p_sq = pena_rodriguez_test(s, lags, mc_reps, seed, squared=True)
    return p_lev, p_sq


def select_model(r, *, dates=None, families=FAMILIES, orders=(1, 2), lags: int = 20,
                 mc_reps: int = DEFAULT_MC_REPS, level: float = 0.05, seed: int = 0,
                 n_starts: int = 5, trunc: int = DEFAULT_TRUNCATION, name: str = "series") -> FilterFit:
    """Select the preferred ARFIMA-GARCH specification for one return series.

    1. fit the (p, q, r, s) grid with d = 0;
    2. keep fits whose standardized residuals and squared residuals both pass
       the portmanteau test at ``level``;
    3. among survivors take the smallest p + q + r + s, ties broken by BIC.

    With no survivors the ladder is repeated with d estimated; failing that,
    the BIC minimizer over every fitted model is returned.

    Order-sum groups are fitted in increasing order and the ladder stops at the
    first group with a survivor, which yields the same choice as fitting the
    whole grid first.
    """
    r = np.asarray(r, dtype=float)
    if len(r) < MIN_SELECT_LENGTH:
        raise SelectionError(f"{name}: need at least {MIN_SELECT_LENGTH} returns, got {len(r)}")
    all_fits: list[FilterFit] = []
    trace: list[tuple] = []
    for stage, d_free in (("d=0", False), ("d-free", True)):
        grid = candidate_grid(families, orders, d_free)
        for order_sum, group in itertools.groupby(grid, key=lambda m: m.order_sum):
            survivors = []
            for shape in group:
                try:
                    fit = fit_model(r, shape.p, shape.q, d_free, shape.family, shape.r, shape.s,
                                    dates=dates, n_starts=n_starts, trunc=trunc)
                except FitFailedError as exc:
                    log.debug("%s: %s skipped (%s)", name, shape.label(), exc)
                    trace.append((stage, shape.label(), "failed", math.nan))
                    continue
                try:
                    pv = residual_diagnostics(fit.std_residuals, lags, mc_reps, seed)
                except StatisticUndefinedError:
                    pv = (0.0, 0.0)
                fit = replace(fit, diag_pvalues=pv)
                all_fits.append((fit, stage))
                passed = min(pv) >= level
                trace.append((stage, shape.label(), "pass" if passed else "reject", fit.bic))
                if passed:
                    survivors.append(fit)
            if survivors:
                best = min(survivors, key=lambda f: f.bic)
                return replace(best, stage=stage, trace=tuple(trace))
    if not all_fits:
        raise SelectionError(f"{name}: every candidate specification failed to fit")
    best, _ = min(all_fits, key=lambda fs: fs[0].bic)
    return replace(best, stage="fallback-bic", trace=tuple(trace))
