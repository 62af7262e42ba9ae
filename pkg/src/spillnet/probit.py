"""Spatial autoregressive probit for edge formation in spillover networks.

Every ordered market pair of a window is one observation: ``y = 1`` when the
pair is an edge. Pairs are neighbours when they share the outgoing or the
incoming market, and the latent propensity follows

    y* = rho W y* + X beta + e,   e ~ N(0, I),   y = 1{y* > 0}.

Estimation is the Gibbs sampler of LeSage (2000): latent draws from truncated
normals, a conjugate normal draw for ``beta`` under a flat prior and a griddy
Gibbs draw for ``rho`` under a uniform(-1, 1) prior.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numba import njit
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu
from scipy.stats import norm

from .calendar import DataValidationError, MarketSpec, temporal_distance

log = logging.getLogger(__name__)

COVARIATES = (
    "const",
    "eq_return",
    "eq_vol",
    "fx_return",
    "fx_vol",
    "log_mcap",
    "log_mc_gdp",
    "dev_to_frontier",
    "dev_to_emerging",
    "temporal_distance",
    "temporal_distance_us",
)

# (key, label, panel) in the published table order
TABLE_ROWS = (
    ("rho", "Spatial coefficient", "A"),
    ("temporal_distance", "Temporal distance", "A"),
    ("temporal_distance_us", "Temporal distance to US", "A"),
    ("eq_return", "Return on equity market", "B"),
    ("eq_vol", "Volatility on equity market", "B"),
    ("fx_return", "Return on FOREX", "B"),
    ("fx_vol", "Volatility on FOREX", "B"),
    ("log_mcap", "Market capitalization", "B"),
    ("log_mc_gdp", "Market capitalization to GDP", "B"),
    ("dev_to_frontier", "Developed to frontier market", "B"),
    ("dev_to_emerging", "Developed to emerging market", "B"),
)

RHO_GRID_SIZE = 200
RHO_BOUND = 0.995
# covariate rows must reach this close to both ends of a window
COVERAGE_SLACK = pd.Timedelta(days=10)


class RankDeficiencyError(ValueError):
    pass


class SamplerError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# spatial weights


def edge_pairs(ids) -> list[tuple]:
    """All ordered non-loop pairs, lexicographic in (out, in)."""
    ids = list(ids)
    return [(a, b) for a in ids for b in ids if a != b]


@dataclass(frozen=True)
class SpatialWeights:
    W: sparse.csr_matrix
    row_standardized: bool
    n_markets: int

    @property
    def n(self) -> int:
        return self.W.shape[0]


def build_weights(N: int, standardize: bool = True) -> SpatialWeights:
    """Weights over the N(N-1) ordered pairs; neighbours share the out or in vertex.

    Pair order matches :func:`edge_pairs` on ``range(N)``. Each row has
    2(N - 2) neighbours, so the standardized matrix is W0 / (2(N - 2)).
    """
    if N < 3:
        raise ValueError(f"need at least 3 markets, got {N}")
    pairs = edge_pairs(range(N))
    index = {p: k for k, p in enumerate(pairs)}
    rows, cols = [], []
    for k, (i, j) in enumerate(pairs):
        for m in range(N):
            if m != i and m != j:
                rows += [k, k]
                cols += [index[(i, m)], index[(m, j)]]
    n = len(pairs)
    vals = np.ones(len(rows))
    if standardize:
        vals /= 2.0 * (N - 2)
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    W.sort_indices()
    return SpatialWeights(W, standardize, N)


class LogDetGrid:
    """log|det(I - rho W)| on an equally spaced grid of rho in (-1, 1).

    Each grid point is one sparse LU factorization; values between grid points
    are interpolated with a cubic spline.
    """

    def __init__(self, W, size: int = RHO_GRID_SIZE, bound: float = RHO_BOUND):
        W = sparse.csc_matrix(W)
        n = W.shape[0]
        eye = sparse.identity(n, format="csc")
        self.rho = np.linspace(-bound, bound, size)
        self.values = np.array([sparse_logdet(eye - r * W) for r in self.rho])
        self._spline = CubicSpline(self.rho, self.values)

    def __call__(self, rho):
        return self._spline(rho)


def sparse_logdet(A) -> float:
    lu = splu(sparse.csc_matrix(A))
    return float(np.sum(np.log(np.abs(lu.U.diagonal()))))


@functools.lru_cache(maxsize=8)
def logdet_grid(N: int, size: int = RHO_GRID_SIZE) -> LogDetGrid:
    """Grid for the standardized weights of ``N`` markets, shared across windows."""
    return LogDetGrid(build_weights(N).W, size)


# ---------------------------------------------------------------------------
# design


@dataclass
class EdgePanel:
    window_end: str
    y: np.ndarray
    X: np.ndarray
    columns: tuple
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be a matrix with one row per element of y")
        if self.X.shape[1] != len(self.columns):
            raise ValueError("column names do not match X")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("y must be binary")

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.columns))
        if self.pairs:
            df.insert(0, "in", [p[1] for p in self.pairs])
            df.insert(0, "out", [p[0] for p in self.pairs])
        df.insert(0, "y", self.y)
        return df


def _daily_z(returns: pd.Series) -> pd.Series:
    sd = returns.std(ddof=0)
    if not np.isfinite(sd) or sd == 0:
        return returns * 0.0
    return (returns - returns.mean()) / sd


def market_window_covariates(covariates: pd.DataFrame, windows, markets) -> pd.DataFrame:
    """Out-vertex covariates per (window, market).

    ``covariates`` has columns date, market_id, equity_close, fx_rate_usd,
    market_cap_usd, mc_to_gdp. Window returns are summed daily log returns
    standardized over all windows and markets pooled; realized volatilities
    are root mean squares of daily returns standardized per market over the
    full sample; size measures are window means of logged values. A market
    whose rows stop short of either end of a window counts as a gap.
    """
    df = covariates.copy()
    df["date"] = pd.to_datetime(df["date"])
    df = df.sort_values(["market_id", "date"])
    rows, gaps = [], []
    for m in markets:
        d = df[df["market_id"] == m].set_index("date")
        if d.empty:
            gaps.append(f"{m}: no covariate rows")
            continue
        eq = np.log(d["equity_close"]).diff()
        fx = np.log(d["fx_rate_usd"]).diff()
        zeq, zfx = _daily_z(eq.dropna()), _daily_z(fx.dropna())
        for w in windows:
            lo, hi = pd.Timestamp(w.start), pd.Timestamp(w.end)
            sl = d.loc[lo:hi]
            if (len(sl) < 2 or sl.index[0] - lo > COVERAGE_SLACK or hi - sl.index[-1] > COVERAGE_SLACK
                    or sl[["equity_close", "fx_rate_usd", "market_cap_usd", "mc_to_gdp"]].isna().any().any()):
                gaps.append(f"{m}: {w.label}")
                continue
            e, f = eq.loc[lo:hi].dropna(), fx.loc[lo:hi].dropna()
            rows.append({
                "window": w.label,
                "market_id": m,
                "eq_return": float(e.sum()),
                "eq_vol": float(np.sqrt(np.mean(zeq.loc[lo:hi] ** 2))),
                "fx_return": float(f.sum()),
                "fx_vol": float(np.sqrt(np.mean(zfx.loc[lo:hi] ** 2))),
                "log_mcap": float(np.log(sl["market_cap_usd"]).mean()),
                "log_mc_gdp": float(np.log(sl["mc_to_gdp"]).mean()),
            })
    if gaps:
        raise DataValidationError("missing covariates: " + "; ".join(gaps))
    out = pd.DataFrame(rows).set_index(["window", "market_id"])
    for c in ("eq_return", "fx_return"):
        sd = out[c].std(ddof=0)
        out[c] = (out[c] - out[c].mean()) / sd if sd > 0 else 0.0
    return out


def build_design(network, window, market_covs: pd.DataFrame, registry: dict[str, MarketSpec],
                 columns=COVARIATES, hub: str = "US") -> EdgePanel:
    """Edge indicator and covariate rows for one window, pairs in canonical order.

    ``market_covs`` is the output of :func:`market_window_covariates`.
    Calendar quantities are taken as of the last day of the window.
    """
    unknown = [c for c in columns if c not in COVARIATES]
    if unknown:
        raise ValueError(f"unknown covariates {unknown}")
    ids = sorted(network.vertices)
    pairs = edge_pairs(ids)
    asof = window.end
    need_hub = "temporal_distance_us" in columns
    if need_hub and hub not in registry:
        raise DataValidationError(f"hub market {hub!r} not in registry")
    try:
        mc = market_covs.loc[window.label]
    except KeyError:
        raise DataValidationError(f"no covariates for window {window.label}") from None
    missing = [m for m in ids if m not in mc.index]
    if missing:
        raise DataValidationError(f"missing covariates for {missing} in window {window.label}")
    X = np.empty((len(pairs), len(columns)))
    for r, (a, b) in enumerate(pairs):
        ca, cb = registry[a].classification, registry[b].classification
        values = {
            "const": 1.0,
            "dev_to_frontier": float(ca == "developed" and cb == "frontier"),
            "dev_to_emerging": float(ca == "developed" and cb == "emerging"),
            "temporal_distance": temporal_distance(registry[a], registry[b], asof).hours,
        }
        if need_hub:
            values["temporal_distance_us"] = 0.0 if a == hub else temporal_distance(registry[a], registry[hub], asof).hours
        for c in columns:
            X[r, columns.index(c)] = values[c] if c in values else mc.loc[a, c]
    y = np.array([int(p in network.edges) for p in pairs])
    return EdgePanel(window.label, y, X, tuple(columns), pairs)


def collinear_columns(X: np.ndarray, names) -> list[str]:
    """Columns that add nothing to the span of the columns before them."""
    out, keep = [], []
    tol = 1e-10 * max(1.0, np.abs(X).max())
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial], tol=tol * math.sqrt(X.shape[0])) == len(trial):
            keep = trial
        else:
            out.append(names[j])
    return out


def check_rank(X: np.ndarray, names) -> None:
    bad = collinear_columns(X, names)
    if bad:
        raise RankDeficiencyError(f"design is rank deficient; collinear columns: {bad}")


# ---------------------------------------------------------------------------
# Gibbs sampler


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _tn_lower(a):
    """Standard normal truncated to [a, inf): plain rejection below 0, Robert (1995) above."""
    if a < 0.0:
        while True:
            z = np.random.standard_normal()
            if z >= a:
                return z
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + np.random.exponential(1.0 / alpha)
        if np.random.random() <= math.exp(-0.5 * (z - alpha) ** 2):
            return z


@njit(cache=True)
def _latent_sweep(ystar, y, H, c):
    """One Gauss-Seidel pass of truncated-normal draws for y* ~ N(H^-1 c, H^-1)."""
    n = ystar.shape[0]
    r = H @ ystar - c
    for i in range(n):
        hii = H[i, i]
        sd = 1.0 / math.sqrt(hii)
        m = ystar[i] - r[i] / hii
        if y[i] == 1:
            new = m + sd * _tn_lower(-m / sd)
        else:
            new = m - sd * _tn_lower(m / sd)
        d = new - ystar[i]
        if d != 0.0:
            for j in range(n):
                r[j] += d * H[i, j]
        ystar[i] = new


def _draw_rho(rng, grid: np.ndarray, logdet: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    # log p(rho) = logdet(rho) - |a - rho b|^2 / 2, inverted through its piecewise-linear CDF
    aa, ab, bb = a @ a, a @ b, b @ b
    lp = logdet - 0.5 * (aa - 2.0 * grid * ab + grid * grid * bb)
    p = np.exp(lp - lp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))])
    u = rng.random() * cdf[-1]
    return float(np.interp(u, cdf, grid))


@dataclass(frozen=True)
class SamplerConfig:
    draws: int = 2000
    burn_in: int = 500
    seed: int = 0
    rho_fixed: float | None = None
    keep_draws: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.draws <= self.burn_in:
            raise ValueError("need draws > burn_in >= 0")
        if self.rho_fixed is not None and not -1 < self.rho_fixed < 1:
            raise ValueError("fixed rho must lie in (-1, 1)")


@dataclass
class SarProbitFit:
    window_end: str
    columns: tuple
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    beta_ci: np.ndarray
    rho_mean: float
    rho_sd: float
    rho_ci: tuple
    draws: int
    burn_in: int
    acceptance_rate: float
    seed: int
    beta_draws: np.ndarray | None = field(default=None, repr=False)
    rho_draws: np.ndarray | None = field(default=None, repr=False)

    @property
    def beta_significant(self) -> np.ndarray:
        return (self.beta_ci[:, 0] > 0) | (self.beta_ci[:, 1] < 0)

    @property
    def rho_significant(self) -> bool:
        return bool(self.rho_ci[0] > 0 or self.rho_ci[1] < 0)

    def coefficients(self) -> dict:
        """Posterior mean and 5% significance per term, ``rho`` included."""
        out = {c: (float(m), bool(s)) for c, m, s in zip(self.columns, self.beta_mean, self.beta_significant)}
        out["rho"] = (self.rho_mean, self.rho_significant)
        return out

    def table(self) -> pd.DataFrame:
        names = list(self.columns) + ["rho"]
        return pd.DataFrame({
            "term": names,
            "mean": np.append(self.beta_mean, self.rho_mean),
            "sd": np.append(self.beta_sd, self.rho_sd),
            "ci_low": np.append(self.beta_ci[:, 0], self.rho_ci[0]),
            "ci_high": np.append(self.beta_ci[:, 1], self.rho_ci[1]),
            "significant": np.append(self.beta_significant, self.rho_significant),
        })


def fit_sar_probit(panel: EdgePanel, weights: SpatialWeights, config: SamplerConfig = SamplerConfig(),
                   logdet: LogDetGrid | None = None) -> SarProbitFit:
    """Posterior summaries of the SAR probit for one window's edge panel."""
    y, X = panel.y, panel.X
    n, k = X.shape
    if weights.n != n:
        raise ValueError(f"weights of order {weights.n} do not match {n} observations")
    check_rank(X, panel.columns)
    W = weights.W
    Wd = W.toarray()
    S1 = Wd + Wd.T
    S2 = Wd.T @ Wd
    if config.rho_fixed is None and logdet is None:
        logdet = logdet_grid(weights.n_markets) if weights.row_standardized else LogDetGrid(W)

    rng = np.random.default_rng(config.seed)
    _seed(int(rng.integers(2 ** 31 - 1)))
    XtX_inv = np.linalg.inv(X.T @ X)
    chol = np.linalg.cholesky(XtX_inv)
    proj = XtX_inv @ X.T

    rho = 0.0 if config.rho_fixed is None else float(config.rho_fixed)
    ystar = np.where(y == 1, 0.5, -0.5).astype(float)
    beta = proj @ ystar
    eye = np.eye(n)
    keep = config.draws - config.burn_in
    bdraws = np.empty((keep, k))
    rdraws = np.empty(keep)
    for it in range(config.draws):
        H = eye - rho * S1 + (rho * rho) * S2
        xb = X @ beta
        c = xb - rho * (W.T @ xb)
        _latent_sweep(ystar, y, H, c)
        wy = W @ ystar
        beta = proj @ (ystar - rho * wy) + chol @ rng.standard_normal(k)
        if config.rho_fixed is None:
            rho = _draw_rho(rng, logdet.rho, logdet.values, ystar - X @ beta, wy)
        if not (np.isfinite(beta).all() and math.isfinite(rho)):
            raise SamplerError(f"non-finite draw at iteration {it} (seed={config.seed})")
        if it >= config.burn_in:
            bdraws[it - config.burn_in] = beta
            rdraws[it - config.burn_in] = rho
    ci = np.quantile(bdraws, [0.025, 0.975], axis=0).T
    rci = tuple(float(v) for v in np.quantile(rdraws, [0.025, 0.975]))
    return SarProbitFit(
        window_end=panel.window_end,
        columns=tuple(panel.columns),
        beta_mean=bdraws.mean(axis=0),
        beta_sd=bdraws.std(axis=0, ddof=1),
        beta_ci=ci,
        rho_mean=float(rdraws.mean()),
        rho_sd=float(rdraws.std(ddof=1)),
        rho_ci=rci,
        draws=config.draws,
        burn_in=config.burn_in,
        # griddy Gibbs draws rho exactly from its conditional; nothing is rejected
        acceptance_rate=1.0,
        seed=config.seed,
        beta_draws=bdraws if config.keep_draws else None,
        rho_draws=rdraws if config.keep_draws else None,
    )


def simulate_sar_probit(X: np.ndarray, beta, rho: float, weights: SpatialWeights,
                        rng: np.random.Generator) -> np.ndarray:
    """Binary outcomes from y* = (I - rho W)^-1 (X beta + e)."""
    n = X.shape[0]
    A = sparse.identity(n, format="csc") - rho * sparse.csc_matrix(weights.W)
    ystar = splu(A).solve(X @ np.asarray(beta, dtype=float) + rng.standard_normal(n))
    return (ystar > 0).astype(np.int64)


# ---------------------------------------------------------------------------
# non-spatial probit


@dataclass(frozen=True)
class ProbitFit:
    beta: np.ndarray
    se: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    separation: bool


def _probit_loglik(y, eta):
    return float(np.sum(np.where(y == 1, norm.logcdf(eta), norm.logcdf(-eta))))


def fit_standard_probit(y, X, tol: float = 1e-10, max_iter: int = 100) -> ProbitFit:
    """Probit MLE by Newton-Raphson with step halving.

    Perfect or quasi-complete separation shows up as fitted probabilities
    collapsing to 0/1 with a diverging linear predictor and is flagged rather
    than raised.
    """
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    check_rank(X, [f"x{j}" for j in range(X.shape[1])])
    q = 2.0 * y - 1.0
    beta = np.zeros(X.shape[1])
    ll = _probit_loglik(y, X @ beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        # lambda = q phi(q eta) / Phi(q eta), computed in log space for the tails
        lam = q * np.exp(norm.logpdf(q * eta) - norm.logcdf(q * eta))
        grad = X.T @ lam
        w = lam * (lam + eta)
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _probit_loglik(y, X @ cand)
            if ll_new >= ll - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        beta, ll_old, ll = cand, ll, ll_new
        if abs(ll - ll_old) < tol * (1.0 + abs(ll)) and np.max(np.abs(t * step)) < 1e-6:
            converged = True
            break
    eta = X @ beta
    lam = q * np.exp(norm.logpdf(q * eta) - norm.logcdf(q * eta))
    info = (X * (lam * (lam + eta))[:, None]).T @ X
    separation = bool(np.max(np.abs(eta)) > 8.0 and ll > -1e-6 * len(y)) or np.max(np.abs(beta)) > 1e3
    try:
        se = np.sqrt(np.diag(np.linalg.inv(info)))
    except np.linalg.LinAlgError:
        se = np.full(len(beta), np.inf)
        separation = True
    return ProbitFit(beta, se, ll, it, converged and not separation, separation)


# ---------------------------------------------------------------------------
# summaries


def summarize_coefficients(fits) -> pd.DataFrame:
    """Average coefficient and sign/significance counts across windows, table layout.

    Terms absent from every fit keep their row with a missing mean and zero
    counts.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("need at least one fit")
    rows = []
    for key, label, panel in TABLE_ROWS:
        vals = [f.coefficients()[key] for f in fits if key in f.coefficients()]
        m = np.array([v[0] for v in vals], dtype=float)
        s = np.array([v[1] for v in vals], dtype=bool)
        rows.append({
            "panel": panel,
            "term": key,
            "label": label,
            "mean": float(m.mean()) if len(m) else math.nan,
            "n_positive": int(np.sum(m > 0)),
            "n_positive_significant": int(np.sum((m > 0) & s)),
            "n_negative": int(np.sum(m < 0)),
            "n_negative_significant": int(np.sum((m < 0) & s)),
        })
    return pd.DataFrame(rows)
