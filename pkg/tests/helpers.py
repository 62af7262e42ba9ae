"""Small builders shared by the test modules."""

import datetime as dt

import numpy as np

from spillnet.calendar import CloseEntry, DatedSeries, MarketSpec, ZoneRule


def make_market(mid, offset_minutes=0, close="16:00", classification="developed",
                years=range(2000, 2021), dst=None, schedule=None):
    """Market with a fixed standard offset and optional per-year DST window.

    ``dst`` is ``(start_month_day, end_month_day, minutes)``, e.g.
    ``((3, 31), (10, 31), 60)``.
    """
    rules = []
    for y in years:
        if dst is None:
            rules.append(ZoneRule(y, offset_minutes))
        else:
            (sm, sd), (em, ed), mins = dst
            rules.append(ZoneRule(y, offset_minutes, dt.date(y, sm, sd), dt.date(y, em, ed), mins))
    if schedule is None:
        schedule = [(dt.date(min(years), 1, 1), close)]
    entries = tuple(CloseEntry(d, dt.time.fromisoformat(t)) for d, t in schedule)
    return MarketSpec(mid, classification, tuple(rules), entries)


def business_days(start, n):
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def series(mid, dates, values):
    return DatedSeries(mid, np.asarray(dates, dtype="datetime64[D]"), np.asarray(values, dtype=float))


# (criterion, verdict, detail) lines printed in the terminal summary
ACCEPTANCE = []


def record(n, ok, detail):
    line = (n, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE.append(line)
    print(f"criterion {n:2d}: {line[1]}  {detail}")
    return ok
