"""Market clocks and return alignment for non-synchronously traded markets.

Each market carries a per-year UTC offset/DST table and a dated closing-hour
schedule. From these we resolve the UTC instant of every daily close, measure
temporal distances between markets, and align return series of a market pair
so that lagged cross-correlations only ever use information that was public
before the in-market closed.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

CLASSIFICATIONS = ("developed", "emerging", "frontier")


class CalendarGapError(ValueError):
    """A date is not covered by a market's zone rules or closing schedule."""


class DataValidationError(ValueError):
    """Input data violates a structural invariant."""


@dataclass(frozen=True)
class ZoneRule:
    """UTC offset regime for one calendar year.

    DST is in force on ``dst_start <= date < dst_end``. When ``dst_start`` is
    later in the year than ``dst_end`` (southern hemisphere) the interval wraps
    around the new year.
    """

    year: int
    std_offset_minutes: int
    dst_start: dt.date | None = None
    dst_end: dt.date | None = None
    dst_offset_minutes: int = 0

    def offset_minutes(self, date: dt.date) -> int:
        if self.dst_start is None or self.dst_end is None:
            return self.std_offset_minutes
        if self.dst_start <= self.dst_end:
            in_dst = self.dst_start <= date < self.dst_end
        else:
            in_dst = date >= self.dst_start or date < self.dst_end
        return self.std_offset_minutes + (self.dst_offset_minutes if in_dst else 0)


@dataclass(frozen=True)
class CloseEntry:
    effective: dt.date
    local_close: dt.time


@dataclass(frozen=True)
class MarketSpec:
    id: str
    classification: str
    zone_rules: tuple[ZoneRule, ...]
    close_schedule: tuple[CloseEntry, ...]
    name: str = ""
    _rules_by_year: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.classification not in CLASSIFICATIONS:
            raise DataValidationError(
                f"{self.id}: classification must be one of {CLASSIFICATIONS}, got {self.classification!r}"
            )
        if not self.close_schedule:
            raise DataValidationError(f"{self.id}: close_schedule is empty")
        eff = [c.effective for c in self.close_schedule]
        if any(b <= a for a, b in zip(eff, eff[1:])):
            raise DataValidationError(f"{self.id}: close_schedule must be strictly increasing in effective date")
        by_year = {}
        for rule in self.zone_rules:
            if rule.year in by_year:
                raise DataValidationError(f"{self.id}: duplicate zone rule for {rule.year}")
            by_year[rule.year] = rule
        object.__setattr__(self, "_rules_by_year", by_year)

    def local_close(self, date: dt.date) -> dt.time:
        if date < self.close_schedule[0].effective:
            raise CalendarGapError(f"{self.id}: no closing hour in force on {date}")
        current = self.close_schedule[0].local_close
        for entry in self.close_schedule:
            if entry.effective > date:
                break
            current = entry.local_close
        return current

    def utc_offset_minutes(self, date: dt.date) -> int:
        rule = self._rules_by_year.get(date.year)
        if rule is None:
            raise CalendarGapError(f"{self.id}: no zone rule for year {date.year}")
        return rule.offset_minutes(date)


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return pd.Timestamp(value).date()
    return dt.date.fromisoformat(str(value))


def utc_close_instant(market: MarketSpec, date) -> dt.datetime:
    """UTC timestamp of ``market``'s close on local trading date ``date``."""
    date = _as_date(date)
    local = dt.datetime.combine(date, market.local_close(date))
    offset = dt.timedelta(minutes=market.utc_offset_minutes(date))
    return (local - offset).replace(tzinfo=dt.timezone.utc)


def close_gap_hours(out: MarketSpec, in_: MarketSpec, date) -> float:
    """Signed hours between the two closes on the same local date (out minus in)."""
    delta = utc_close_instant(out, date) - utc_close_instant(in_, date)
    return delta.total_seconds() / 3600.0


@dataclass(frozen=True)
class TemporalDistance:
    out: str
    in_: str
    hours: float


def temporal_distance(out: MarketSpec, in_: MarketSpec, date) -> TemporalDistance:
    """Hours from the out-market close back to the preceding in-market close."""
    hours = close_gap_hours(out, in_, date) % 24.0
    return TemporalDistance(out.id, in_.id, hours)


# ---------------------------------------------------------------------------
# series


@dataclass(frozen=True)
class DatedSeries:
    """Values on strictly increasing calendar dates (``datetime64[D]``)."""

    market_id: str
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise DataValidationError(f"{self.market_id}: dates and values must be 1-D and equally long")
        if len(dates) > 1 and np.any(np.diff(dates).astype(int) <= 0):
            raise DataValidationError(f"{self.market_id}: dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.dates)

    def between(self, start, end) -> "DatedSeries":
        lo = np.datetime64(start, "D")
        hi = np.datetime64(end, "D")
        mask = (self.dates >= lo) & (self.dates <= hi)
        return DatedSeries(self.market_id, self.dates[mask], self.values[mask])


class PriceSeries(DatedSeries):
    def __post_init__(self):
        super().__post_init__()
        if np.any(~(self.values > 0)):
            raise DataValidationError(f"{self.market_id}: closing prices must be strictly positive")


def compute_log_returns(prices: DatedSeries) -> DatedSeries:
    """Log returns between consecutive trading days.

    A return is kept only when the two trading dates are separated by
    Saturdays/Sundays alone; any skipped weekday drops it. The returned series
    is dated by the later trading day.
    """
    if len(prices) < 2:
        raise DataValidationError(f"{prices.market_id}: need at least two prices")
    if np.any(~(prices.values > 0)):
        raise DataValidationError(f"{prices.market_id}: closing prices must be strictly positive")
    d0, d1 = prices.dates[:-1], prices.dates[1:]
    skipped_weekdays = np.busday_count(d0 + 1, d1)
    keep = skipped_weekdays == 0
    r = np.diff(np.log(prices.values))
    return DatedSeries(prices.market_id, d1[keep], r[keep])


@dataclass(frozen=True)
class AlignedReturnPair:
    """Return (or residual) series of a market pair arranged for lagged correlation.

    ``r_in[n]`` is the in-market value on ``dates[n]`` and ``r_out[n]`` the
    out-market value dated ``out_dates[n]``. The arrangement is such that the
    lag-``k`` term pairs ``r_in[n]`` with ``r_out[n - k]``; lag 1 is the most
    recent out-market close strictly before the in-market close, and lag 0 is
    the simultaneous close on dates where both markets close at the same
    instant. ``k_min`` is the smallest lag admissible on every retained date.
    """

    out_market: str
    in_market: str
    dates: np.ndarray
    out_dates: np.ndarray
    r_out: np.ndarray
    r_in: np.ndarray
    simultaneous: np.ndarray
    day_lag: np.ndarray
    k_min: int
    regime_breaks: tuple

    def __len__(self):
        return len(self.dates)

    def primary_pairs(self) -> list[tuple[np.datetime64, np.datetime64]]:
        """(out date, in date) of the lag-``k_min`` pairing for each in date."""
        k = self.k_min
        return [(self.out_dates[n - k], self.dates[n]) for n in range(k, len(self.dates))]


def _intersect(a: DatedSeries, b: DatedSeries):
    common, ia, ib = np.intersect1d(a.dates, b.dates, assume_unique=True, return_indices=True)
    return common, a.values[ia], b.values[ib]


def _date_regimes(out: MarketSpec, in_: MarketSpec, dates: np.ndarray):
    """Per-date (position shift, simultaneity) for the lag-1 convention above."""
    shifts = np.empty(len(dates), dtype=int)
    simult = np.empty(len(dates), dtype=bool)
    cache = {}
    for n, d in enumerate(dates.astype(object)):
        key = (out.local_close(d), out.utc_offset_minutes(d), in_.local_close(d), in_.utc_offset_minutes(d))
        if key not in cache:
            gap = close_gap_hours(out, in_, d)
            ratio = gap / 24.0
            is_sim = math.isclose(ratio, round(ratio), abs_tol=1e-9)
            shift = -int(round(ratio)) if is_sim else -math.floor(ratio)
            cache[key] = (shift, is_sim)
        shifts[n], simult[n] = cache[key]
    return shifts, simult


def align_series(out_series: DatedSeries, in_series: DatedSeries,
                 out: MarketSpec, in_: MarketSpec) -> AlignedReturnPair:
    """Align two already-computed dated series (returns or standardized residuals).

    Dates are intersected first; each in-date then uses the closing-hour and
    DST regime in force on that date.
    """
    dates, v_out, v_in = _intersect(out_series, in_series)
    if len(dates) == 0:
        raise DataValidationError(f"no common dates for {out.id} -> {in_.id}")
    shifts, simult = _date_regimes(out, in_, dates)
    src = np.arange(len(dates)) + shifts
    ok = (src >= 0) & (src < len(dates))
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        raise DataValidationError(f"no common dates for {out.id} -> {in_.id} after alignment")
    src = src[idx]
    sim = simult[idx]
    # trading-day distance between the in date and its primary out partner
    day_lag = np.where(sim, idx - src, idx - src + 1)
    regime = shifts[idx] * 2 + sim
    breaks = tuple(dates[idx][1:][np.diff(regime) != 0])
    return AlignedReturnPair(
        out_market=out.id,
        in_market=in_.id,
        dates=dates[idx],
        out_dates=dates[src],
        r_out=v_out[src],
        r_in=v_in[idx],
        simultaneous=sim,
        day_lag=day_lag,
        k_min=0 if bool(np.all(sim)) else 1,
        regime_breaks=breaks,
    )


def align_pair(p_out: DatedSeries, p_in: DatedSeries, out: MarketSpec, in_: MarketSpec) -> AlignedReturnPair:
    """List-wise deletion of prices, log returns, then closing-hour alignment."""
    dates, c_out, c_in = _intersect(p_out, p_in)
    if len(dates) < 2:
        raise DataValidationError(f"no common dates for {out.id} -> {in_.id}")
    r_out = compute_log_returns(DatedSeries(out.id, dates, c_out))
    r_in = compute_log_returns(DatedSeries(in_.id, dates, c_in))
    return align_series(r_out, r_in, out, in_)


# ---------------------------------------------------------------------------
# registry and CSV IO


def _parse_time(value) -> dt.time:
    if isinstance(value, int):
        # YAML 1.1 reads unquoted 16:00 as sexagesimal minutes
        return dt.time(value // 60, value % 60)
    return dt.time.fromisoformat(str(value))


def _rule_from_dict(d: dict) -> list[ZoneRule]:
    if "years" in d:
        first, last = d["years"]
        years = range(int(first), int(last) + 1)
    else:
        years = [int(d["year"])]
    start = d.get("dst_start")
    end = d.get("dst_end")
    if start in (None, "none") or end in (None, "none"):
        if len(years) != 1 and start not in (None, "none"):
            raise DataValidationError("DST transition dates need one rule per year")
        return [ZoneRule(y, int(d["std_offset_minutes"])) for y in years]
    if len(years) != 1:
        raise DataValidationError("DST transition dates need one rule per year")
    return [ZoneRule(years[0], int(d["std_offset_minutes"]), _as_date(start), _as_date(end),
                     int(d.get("dst_offset_minutes", 60)))]


def market_from_dict(d: dict) -> MarketSpec:
    rules = []
    for r in d.get("zone_rules", []):
        rules.extend(_rule_from_dict(r))
    schedule = tuple(
        CloseEntry(_as_date(c["effective"]), _parse_time(c["close"])) for c in d["close_schedule"]
    )
    return MarketSpec(
        id=str(d["id"]),
        name=str(d.get("name", "")),
        classification=str(d["classification"]),
        zone_rules=tuple(sorted(rules, key=lambda r: r.year)),
        close_schedule=schedule,
    )


def market_to_dict(m: MarketSpec) -> dict:
    rules = []
    for r in m.zone_rules:
        entry = {"year": r.year, "std_offset_minutes": r.std_offset_minutes}
        if r.dst_start is not None:
            entry.update(dst_start=r.dst_start.isoformat(), dst_end=r.dst_end.isoformat(),
                         dst_offset_minutes=r.dst_offset_minutes)
        else:
            entry.update(dst_start="none", dst_end="none")
        rules.append(entry)
    return {
        "id": m.id,
        "name": m.name,
        "classification": m.classification,
        "zone_rules": rules,
        "close_schedule": [
            {"effective": c.effective.isoformat(), "close": c.local_close.strftime("%H:%M")}
            for c in m.close_schedule
        ],
    }


def load_registry(path) -> dict[str, MarketSpec]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    markets = {}
    for d in doc["markets"]:
        m = market_from_dict(d)
        if m.id in markets:
            raise DataValidationError(f"duplicate market id {m.id}")
        markets[m.id] = m
    return markets


def dump_registry(markets, path, header: str | None = None) -> None:
    doc = {"markets": [market_to_dict(m) for m in markets]}
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write(text)


def load_prices(path) -> dict[str, PriceSeries]:
    df = pd.read_csv(path, comment="#", dtype={"market_id": str})
    missing = {"date", "market_id", "close"} - set(df.columns)
    if missing:
        raise DataValidationError(f"{path}: missing columns {sorted(missing)}")
    df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
    out = {}
    for mid, g in df.groupby("market_id", sort=True):
        g = g.sort_values("date")
        if g["date"].duplicated().any():
            raise DataValidationError(f"{mid}: duplicate dates in price file")
        out[mid] = PriceSeries(mid, g["date"].values.astype("datetime64[D]"), g["close"].to_numpy(float))
    return out


def write_dated_csv(series, path, value_name: str, header: str | None = None) -> None:
    """Write ``date,market_id,<value_name>`` rows for a collection of DatedSeries."""
    frames = [
        pd.DataFrame({"date": s.dates.astype(str), "market_id": s.market_id, value_name: s.values})
        for s in series
    ]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["date", "market_id", value_name])
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        df.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")


def read_dated_csv(path, value_name: str) -> dict[str, DatedSeries]:
    df = pd.read_csv(path, comment="#", dtype={"market_id": str})
    out = {}
    for mid, g in df.groupby("market_id", sort=True):
        g = g.sort_values("date")
        out[mid] = DatedSeries(mid, g["date"].to_numpy().astype("datetime64[D]"), g[value_name].to_numpy(float))
    return out
