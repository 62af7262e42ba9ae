"""Kernel-weighted cross-correlation tests for Granger non-causality in mean.

For a market pair the standardized residuals are aligned by closing hour
(see :mod:`spillnet.calendar`), squared cross-lagged correlations are weighted
with a Bartlett kernel of bandwidth ``M`` and the centred/scaled sum is
compared with a one-sided standard normal. Every ordered pair of a rolling
window is tested at a Bonferroni-adjusted level and the significant pairs form
that window's spillover network.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

from .calendar import CalendarGapError, DataValidationError, DatedSeries, MarketSpec, align_series
from .network import SpilloverNetwork

log = logging.getLogger(__name__)

_P_FLOOR = 1e-300


class InsufficientSampleError(ValueError):
    pass


class UndefinedCorrelationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class HongConfig:
    M: int = 5
    base_level: float = 0.01
    window_months: int = 12
    drift_months: int = 1
    # include the k = 0 term in centring and scaling when k = 0 is admitted
    center_k0: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("bandwidth M must be >= 1")
        if not 0 < self.base_level < 1:
            raise ValueError("base_level must lie in (0, 1)")
        if self.window_months < 1 or self.drift_months < 1:
            raise ValueError("window and drift must be positive month counts")


@dataclass(frozen=True)
class HongResult:
    out: str
    in_: str
    Q: float
    p: float
    k_start: int
    T: int


@dataclass(frozen=True)
class EdgeDecision:
    out: str
    in_: str
    significant: bool
    level_used: float


def bartlett_weight(z: float) -> float:
    z = abs(z)
    return 1.0 - z if z < 1.0 else 0.0


def _bartlett(z: np.ndarray) -> np.ndarray:
    z = np.abs(z)
    return np.where(z < 1.0, 1.0 - z, 0.0)


def cross_corr(s_out, s_in, k: int) -> float:
    """rho(k) = C(k) / sqrt(C_out(0) C_in(0)) with C(k) = (1/T) sum_{t>k} s_in[t] s_out[t-k]."""
    s_out = np.asarray(s_out, dtype=float)
    s_in = np.asarray(s_in, dtype=float)
    T = len(s_in)
    if len(s_out) != T:
        raise ValueError("series must be aligned to equal length")
    if not 0 <= k < T:
        raise ValueError(f"lag k={k} outside [0, {T})")
    c_oo = np.dot(s_out, s_out) / T
    c_ii = np.dot(s_in, s_in) / T
    if c_oo <= 0 or c_ii <= 0:
        raise UndefinedCorrelationError("zero-variance series")
    c = np.dot(s_in[k:], s_out[: T - k]) / T
    return float(c / math.sqrt(c_oo * c_ii))


def _centering(T: int, M: int, include_k0: bool) -> tuple[float, float]:
    k = np.arange(0 if include_k0 else 1, min(M, T))
    w = _bartlett(k / M)
    C = float(np.sum((1 - k / T) * w ** 2))
    D = float(2 * np.sum((1 - k / T) * (1 - (k + 1) / T) * w ** 4))
    return C, D


def hong_q(s_out, s_in, cfg: HongConfig = HongConfig(), k_start: int = 1,
           out: str = "", in_: str = "") -> HongResult:
    """Hong's one-sided kernel test of ``out`` not Granger-causing ``in_``.

    ``k_start = 1`` gives the usual statistic with lags 1..T-1; ``k_start = 0``
    admits the contemporaneous term (lags 0..T-2) for pairs with simultaneous
    closes. Centring and scaling always run over k = 1..T-1 unless
    ``cfg.center_k0`` is set. Since the Bartlett weight vanishes for k >= M,
    every sum stops at M - 1.
    """
    if k_start not in (0, 1):
        raise ValueError("k_start must be 0 or 1")
    s_out = np.asarray(s_out, dtype=float)
    s_in = np.asarray(s_in, dtype=float)
    T = len(s_in)
    M = cfg.M
    if T <= 2 * M:
        raise InsufficientSampleError(f"T={T} must exceed 2M={2 * M}")
    if len(s_out) != T:
        raise ValueError("series must be aligned to equal length")
    c_oo = np.dot(s_out, s_out) / T
    c_ii = np.dot(s_in, s_in) / T
    if c_oo <= 0 or c_ii <= 0:
        raise UndefinedCorrelationError("zero-variance series")
    k_hi = min(M - 1, T - 1 - k_start)
    ks = np.arange(k_start, k_hi + 1)
    rho = np.array([np.dot(s_in[k:], s_out[: T - k]) for k in ks]) / (T * math.sqrt(c_oo * c_ii))
    S = float(np.sum(_bartlett(ks / M) ** 2 * rho ** 2))
    C, D = _centering(T, M, cfg.center_k0 and k_start == 0)
    if D <= 0:
        raise ValueError(f"bandwidth M={M} gives every centred lag zero Bartlett weight")
    Q = (T * S - C) / math.sqrt(D)
    p = float(min(max(norm.sf(Q), _P_FLOOR), 1.0 - 1e-16))
    return HongResult(out, in_, float(Q), p, k_start, T)


def bonferroni_level(N: int, base: float = 0.01) -> float:
    if N < 2:
        raise ValueError("need at least two markets")
    return base / (N * (N - 1))


# ---------------------------------------------------------------------------
# rolling windows


@dataclass(frozen=True)
class Window:
    start: dt.date
    end: dt.date

    @property
    def label(self) -> str:
        return f"{self.end.year:04d}-{self.end.month:02d}"


def rolling_windows(first, last, window_months: int = 12, drift_months: int = 1) -> list[Window]:
    """Month-anchored windows of ``window_months`` full months stepping by ``drift_months``.

    The first window starts on the first day of ``first``'s month; windows end
    on month-ends no later than ``last``.
    """
    first = pd.Timestamp(first)
    last = pd.Timestamp(last)
    start = first.to_period("M")
    final = last.to_period("M")
    if last != final.end_time.normalize():
        final = final - 1
    out = []
    while True:
        end = start + window_months - 1
        if end > final:
            break
        out.append(Window(start.start_time.date(), end.end_time.date()))
        start = start + drift_months
    return out


# ---------------------------------------------------------------------------
# network construction


def run_pair_test(res_out: DatedSeries, res_in: DatedSeries, out: MarketSpec, in_: MarketSpec,
                  cfg: HongConfig) -> HongResult:
    aligned = align_series(res_out, res_in, out, in_)
    return hong_q(aligned.r_out, aligned.r_in, cfg, aligned.k_min, out.id, in_.id)


def build_window_network(residuals: dict, window: Window, registry: dict, cfg: HongConfig = HongConfig(),
                         markets=None) -> SpilloverNetwork:
    """Test every ordered market pair on ``window`` and keep Bonferroni-significant edges.

    ``residuals`` maps market id to a dated standardized-residual series. Pairs
    that cannot be tested are recorded in ``skipped`` with a reason and are
    non-edges.
    """
    ids = sorted(markets if markets is not None else residuals)
    missing = [m for m in ids if m not in residuals]
    if missing:
        raise DataValidationError(f"no residuals for markets {missing} in window {window.label}")
    level = bonferroni_level(len(ids), cfg.base_level)
    sliced = {m: residuals[m].between(window.start, window.end) for m in ids}
    tests, skipped, edges = {}, {}, set()
    for a in ids:
        for b in ids:
            if a == b:
                continue
            try:
                res = run_pair_test(sliced[a], sliced[b], registry[a], registry[b], cfg)
            except (DataValidationError, InsufficientSampleError, UndefinedCorrelationError,
                    CalendarGapError) as exc:
                skipped[(a, b)] = f"{type(exc).__name__}: {exc}"
                continue
            tests[(a, b)] = res
            if res.p < level:
                edges.add((a, b))
    return SpilloverNetwork(window.label, tuple(ids), frozenset(edges), tests=tests, skipped=skipped,
                            level=level)


def edge_decisions(net: SpilloverNetwork) -> list[EdgeDecision]:
    out = []
    for a in net.vertices:
        for b in net.vertices:
            if a != b:
                out.append(EdgeDecision(a, b, (a, b) in net.edges, net.level))
    return out
