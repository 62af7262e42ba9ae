"""Synthetic multi-market worlds with planted spillovers and known ground truth.

Standardized innovations are generated in the chronological order of all
closes. A planted edge (out, in, b, k) feeds the out-market innovation of its
k-th most recent close strictly before the in-market close (the simultaneous
close when k = 0) into the in-market innovation, which is then rescaled to
unit variance. Each market wraps its innovations in its own GARCH recursion
and cumulates the returns into prices.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .calendar import (
    CloseEntry,
    MarketSpec,
    ZoneRule,
    align_series,
    DatedSeries,
    dump_registry,
    utc_close_instant,
)
from .garch import GarchSpec, simulate_garch
from .johnson_su import JohnsonSuParams, johnson_su_rvs


class WorldConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlantedEdge:
    out: str
    in_: str
    b: float
    lag: int = 1


DEFAULT_GARCH = GarchSpec("GARCH", 2e-6, (0.08,), (0.90,))
DEFAULT_DIST = JohnsonSuParams(0.0, 0.3)


@dataclass(frozen=True)
class WorldConfig:
    markets: tuple
    edges: tuple = ()
    start: dt.date = dt.date(2006, 1, 1)
    end: dt.date = dt.date(2008, 12, 31)
    seed: int = 0
    garch: dict = field(default_factory=dict)
    dist: dict = field(default_factory=dict)
    mean_return: float = 2e-4
    holiday_rate: float = 0.01
    burn: int = 500

    def __post_init__(self):
        ids = [m.id for m in self.markets]
        if len(set(ids)) != len(ids):
            raise WorldConfigError("duplicate market ids")
        if self.end <= self.start:
            raise WorldConfigError("end must follow start")
        seen = set()
        for e in self.edges:
            if e.out not in ids or e.in_ not in ids or e.out == e.in_:
                raise WorldConfigError(f"planted edge {e.out}->{e.in_} does not join two distinct markets")
            if (e.out, e.in_) in seen:
                raise WorldConfigError(f"planted edge {e.out}->{e.in_} listed twice")
            if e.lag < 0:
                raise WorldConfigError("planted lags are non-negative")
            seen.add((e.out, e.in_))

    def market(self, mid: str) -> MarketSpec:
        return next(m for m in self.markets if m.id == mid)

    def business_days(self) -> np.ndarray:
        return np.arange(np.datetime64(self.start, "D"), np.datetime64(self.end, "D") + 1)[
            np.is_busday(np.arange(np.datetime64(self.start, "D"), np.datetime64(self.end, "D") + 1))
        ]

    @property
    def T(self) -> int:
        return len(self.business_days())

    @property
    def truth(self) -> frozenset:
        return frozenset((e.out, e.in_) for e in self.edges if e.b != 0)


@dataclass
class World:
    config: WorldConfig
    prices: dict
    innovations: dict
    covariates: pd.DataFrame

    @property
    def registry(self) -> dict:
        return {m.id: m for m in self.config.markets}


def _pair_k_min(out: MarketSpec, in_: MarketSpec, days: np.ndarray) -> int:
    probe = DatedSeries("x", days, np.zeros(len(days)))
    return align_series(probe, probe, out, in_).k_min


def check_feasible(cfg: WorldConfig) -> None:
    days = cfg.business_days()
    for e in cfg.edges:
        k_min = _pair_k_min(cfg.market(e.out), cfg.market(e.in_), days)
        if e.lag < k_min:
            raise WorldConfigError(
                f"planted lag {e.lag} for {e.out}->{e.in_} is below the pair's k_min={k_min}"
            )


def _lag0_order(cfg: WorldConfig) -> dict:
    """Rank markets so that sources of contemporaneous edges are processed first."""
    ids = [m.id for m in cfg.markets]
    preds = {m: {e.out for e in cfg.edges if e.in_ == m and e.lag == 0} for m in ids}
    rank, done = {}, set()
    while len(done) < len(ids):
        ready = [m for m in ids if m not in done and preds[m] <= done]
        if not ready:
            raise WorldConfigError("contemporaneous planted edges form a cycle")
        for m in ready:
            rank[m] = len(rank)
            done.add(m)
    return rank


def gen_world(cfg: WorldConfig) -> World:
    """Simulate prices, innovations and covariates for ``cfg``; pure given the seed."""
    check_feasible(cfg)
    ss = np.random.SeedSequence(cfg.seed)
    rngs = dict(zip([m.id for m in cfg.markets], [np.random.default_rng(s) for s in ss.spawn(len(cfg.markets))]))
    master = np.random.default_rng(ss.spawn(1)[0])
    days = cfg.business_days()

    open_days, events = {}, []
    rank = _lag0_order(cfg)
    for m in cfg.markets:
        keep = rngs[m.id].random(len(days)) >= cfg.holiday_rate
        keep[0] = True
        open_days[m.id] = days[keep]
        for d in open_days[m.id].astype(object):
            events.append((utc_close_instant(m, d), rank[m.id], m.id))
    events.sort()

    incoming = {m.id: [e for e in cfg.edges if e.in_ == m.id and e.b != 0] for m in cfg.markets}
    base = {
        m.id: johnson_su_rvs(cfg.dist.get(m.id, DEFAULT_DIST), len(open_days[m.id]), rngs[m.id])
        for m in cfg.markets
    }
    eta = {m.id: [] for m in cfg.markets}
    # closes strictly before the current instant, per market
    settled = {m.id: 0 for m in cfg.markets}
    i = 0
    while i < len(events):
        j = i
        while j < len(events) and events[j][0] == events[i][0]:
            j += 1
        group = events[i:j]
        for _, _, mid in group:
            pos = len(eta[mid])
            value = base[mid][pos]
            edges = incoming[mid]
            if edges:
                total, norm2 = value, 1.0
                for e in edges:
                    src = eta[e.out]
                    idx = settled[e.out] - e.lag if e.lag > 0 else len(src) - 1
                    if e.lag == 0 and settled[e.out] == len(src):
                        idx = -1  # source did not close at this instant
                    if 0 <= idx < len(src):
                        total += e.b * src[idx]
                    norm2 += e.b * e.b
                value = total / math.sqrt(norm2)
            eta[mid].append(value)
        for _, _, mid in group:
            settled[mid] = len(eta[mid])
        i = j

    prices, innov = {}, {}
    for m in cfg.markets:
        spec = cfg.garch.get(m.id, DEFAULT_GARCH)
        e = np.asarray(eta[m.id])
        warm = rngs[m.id].standard_normal(cfg.burn)
        eps, _ = simulate_garch(spec, np.concatenate([warm, e]), burn=cfg.burn)
        r = cfg.mean_return + eps
        r[0] = 0.0
        level = 100.0 * math.exp(rngs[m.id].normal(0.0, 0.5))
        prices[m.id] = DatedSeries(m.id, open_days[m.id], level * np.exp(np.cumsum(r)))
        innov[m.id] = DatedSeries(m.id, open_days[m.id], e)
    covs = _covariates(cfg, open_days, prices, master)
    return World(cfg, prices, innov, covs)


def _covariates(cfg: WorldConfig, open_days: dict, prices: dict, rng: np.random.Generator) -> pd.DataFrame:
    frames = []
    for m in cfg.markets:
        d = open_days[m.id]
        n = len(d)
        if m.id == "US":
            fx = np.ones(n)
        else:
            fx = math.exp(rng.normal(0.0, 1.0)) * np.exp(np.cumsum(rng.normal(0.0, 0.006, n)))
        years = d.astype("datetime64[Y]").astype(int) + 1970
        uniq = np.unique(years)
        mcap_y = dict(zip(uniq, math.exp(rng.normal(26.0, 1.0)) * np.exp(np.cumsum(rng.normal(0.0, 0.2, len(uniq))))))
        gdp_y = dict(zip(uniq, math.exp(rng.normal(3.8, 0.6)) * np.exp(np.cumsum(rng.normal(0.0, 0.15, len(uniq))))))
        frames.append(pd.DataFrame({
            "date": d.astype(str),
            "market_id": m.id,
            "equity_close": prices[m.id].values,
            "fx_rate_usd": fx,
            "market_cap_usd": [mcap_y[y] for y in years],
            "mc_to_gdp": [gdp_y[y] for y in years],
        }))
    return pd.concat(frames, ignore_index=True).sort_values(["date", "market_id"], kind="stable").reset_index(drop=True)


# ---------------------------------------------------------------------------
# calendars for synthetic markets


def _nth_sunday(year: int, month: int, n: int) -> dt.date:
    d = dt.date(year, month, 1)
    d += dt.timedelta(days=(6 - d.weekday()) % 7)
    return d + dt.timedelta(weeks=n - 1)


def _last_sunday(year: int, month: int) -> dt.date:
    d = dt.date(year + (month == 12), month % 12 + 1, 1) - dt.timedelta(days=1)
    return d - dt.timedelta(days=(d.weekday() + 1) % 7)


def zone_rules(style: str, std_offset_minutes: int, years) -> tuple:
    """Per-year rules: 'none', 'eu' (last Sun Mar - last Sun Oct), 'us' (2nd Sun Mar - 1st Sun Nov)
    or 'south' (1st Sun Oct - 1st Sun Apr, wrapping the new year)."""
    out = []
    for y in years:
        if style == "none":
            out.append(ZoneRule(y, std_offset_minutes))
        elif style == "eu":
            out.append(ZoneRule(y, std_offset_minutes, _last_sunday(y, 3), _last_sunday(y, 10), 60))
        elif style == "us":
            out.append(ZoneRule(y, std_offset_minutes, _nth_sunday(y, 3, 2), _nth_sunday(y, 11, 1), 60))
        elif style == "south":
            out.append(ZoneRule(y, std_offset_minutes, _nth_sunday(y, 10, 1), _nth_sunday(y, 4, 1), 60))
        else:
            raise ValueError(f"unknown DST style {style!r}")
    return tuple(out)


def synthetic_market(mid: str, classification: str, std_offset_minutes: int, local_close: str,
                     dst: str, years, schedule_change: tuple | None = None) -> MarketSpec:
    first = dt.date(min(years), 1, 1)
    sched = [CloseEntry(first, dt.time.fromisoformat(local_close))]
    if schedule_change is not None:
        when, new_close = schedule_change
        sched.append(CloseEntry(when, dt.time.fromisoformat(new_close)))
    return MarketSpec(mid, classification, zone_rules(dst, std_offset_minutes, years), tuple(sched), name=mid)


def default_markets(first_year: int = 2006, last_year: int = 2008) -> tuple:
    """Six markets closing at 02:00, 06:00, 08:00, 14:00, 16:30 and 21:00 UTC in standard time."""
    years = range(first_year, last_year + 1)
    mid_sample = dt.date(first_year + (last_year - first_year + 1) // 2, 3, 1)
    return (
        synthetic_market("AS", "developed", 540, "11:00", "none", years),
        synthetic_market("AU", "developed", 600, "16:00", "south", years),
        synthetic_market("EM", "emerging", 120, "10:00", "eu", years),
        synthetic_market("EU", "developed", 60, "15:00", "eu", years),
        # closing hour moves 30 minutes later mid-sample
        synthetic_market("LA", "frontier", -180, "13:30", "us", years, (mid_sample, "14:00")),
        synthetic_market("US", "developed", -300, "16:00", "us", years),
    )


# planted where the out-market closes shortly after the in-market, chosen so that few
# two-step chains create indirect causality; AS->US (5 h) and EU->EM (6 h) stay
# unplanted so temporal distance does not separate edges perfectly
DEFAULT_EDGES = (
    ("AU", "AS"), ("EM", "AS"), ("EM", "AU"), ("EU", "AU"),
    ("LA", "EU"), ("US", "EU"), ("US", "LA"),
)


def default_world(seed: int = 0, b: float = 0.32, first_year: int = 2006, last_year: int = 2008) -> WorldConfig:
    markets = default_markets(first_year, last_year)
    edges = tuple(PlantedEdge(a, c, b, 1) for a, c in DEFAULT_EDGES)
    return WorldConfig(markets, edges, dt.date(first_year, 1, 1), dt.date(last_year, 12, 31), seed)


_SPREAD_STYLES = ("none", "eu", "us", "south")
_CLASSES = ("developed", "emerging", "frontier")


def spread_world(N: int, seed: int = 0, edges=(), first_year: int = 2006, last_year: int = 2008) -> WorldConfig:
    """``N`` markets with UTC closes spread evenly over the day and mixed DST styles."""
    years = range(first_year, last_year + 1)
    markets = []
    for i in range(N):
        utc_minutes = int(round(i * 24 * 60 / N / 30.0)) * 30
        offset = 60 * ((i % 5) - 2)
        local = (utc_minutes + offset) % (24 * 60)
        markets.append(synthetic_market(
            f"M{i:02d}", _CLASSES[i % 3], offset, f"{local // 60:02d}:{local % 60:02d}",
            _SPREAD_STYLES[i % 4], years,
        ))
    return WorldConfig(tuple(markets), tuple(edges), dt.date(first_year, 1, 1), dt.date(last_year, 12, 31), seed)


# ---------------------------------------------------------------------------
# files


def write_world(world: World, out_dir, header: str = "") -> dict:
    """Registry YAML, price CSV, covariate CSV and ground-truth YAML in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "registry": out_dir / "registry.yaml",
        "prices": out_dir / "prices.csv",
        "covariates": out_dir / "covariates.csv",
        "truth": out_dir / "truth.yaml",
    }
    dump_registry(world.config.markets, paths["registry"], header=header)
    rows = pd.concat([
        pd.DataFrame({"date": s.dates.astype(str), "market_id": s.market_id, "close": s.values})
        for s in world.prices.values()
    ]).sort_values(["date", "market_id"], kind="stable")
    with open(paths["prices"], "w") as fh:
        fh.write(header)
        rows.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")
    with open(paths["covariates"], "w") as fh:
        fh.write(header)
        world.covariates.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")
    truth = {
        "seed": world.config.seed,
        "edges": [{"out": e.out, "in": e.in_, "b": float(e.b), "lag": int(e.lag)} for e in world.config.edges],
    }
    with open(paths["truth"], "w") as fh:
        fh.write(header)
        yaml.safe_dump(truth, fh, sort_keys=False)
    return paths


def load_truth(path) -> frozenset:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return frozenset((e["out"], e["in"]) for e in doc.get("edges", []) if float(e.get("b", 1.0)) != 0)


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class RecoveryScore:
    precision: float
    recall: float
    false_positive_rate: float
    true_positives: int
    false_positives: int
    false_negatives: int
    per_window: tuple = ()


def _score(edges, truth, vertices) -> tuple:
    edges, truth = set(edges), set(truth)
    tp = len(edges & truth)
    fp = len(edges - truth)
    fn = len(truth - edges)
    n = len(vertices)
    negatives = n * (n - 1) - len(truth)
    precision = tp / (tp + fp) if tp + fp else math.nan
    recall = tp / (tp + fn) if tp + fn else math.nan
    fpr = fp / negatives if negatives else math.nan
    return precision, recall, fpr, tp, fp, fn


def recovery_score(networks, truth) -> RecoveryScore:
    """Precision/recall of estimated edge sets against planted pairs.

    ``networks`` is one network or a sequence of them; pooled figures count
    every (window, pair) decision. Undefined ratios are NaN.
    """
    if hasattr(networks, "edges"):
        networks = [networks]
    truth = frozenset(truth)
    per = []
    TP = FP = FN = NEG = 0
    for g in networks:
        unknown = {v for pair in truth for v in pair} - set(g.vertices)
        if unknown:
            raise ValueError(f"truth references vertices {sorted(unknown)} missing from window {g.window_end}")
        p, r, f, tp, fp, fn = _score(g.edges, truth, g.vertices)
        per.append((g.window_end, p, r, f))
        TP, FP, FN = TP + tp, FP + fp, FN + fn
        NEG += g.n * (g.n - 1) - len(truth)
    return RecoveryScore(
        precision=TP / (TP + FP) if TP + FP else math.nan,
        recall=TP / (TP + FN) if TP + FN else math.nan,
        false_positive_rate=FP / NEG if NEG else math.nan,
        true_positives=TP,
        false_positives=FP,
        false_negatives=FN,
        per_window=tuple(per),
    )
