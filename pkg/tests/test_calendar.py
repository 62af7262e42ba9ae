import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import business_days, make_market, series
from spillnet.calendar import (
    CalendarGapError,
    CloseEntry,
    DataValidationError,
    MarketSpec,
    PriceSeries,
    ZoneRule,
    align_pair,
    align_series,
    close_gap_hours,
    compute_log_returns,
    dump_registry,
    load_prices,
    load_registry,
    temporal_distance,
    utc_close_instant,
)

UTC = dt.timezone.utc


def utc(y, m, d, hh, mm=0):
    return dt.datetime(y, m, d, hh, mm, tzinfo=UTC)


class TestUtcCloseInstant:
    def test_identity_offset(self):
        m = make_market("A", 0, "16:00")
        assert utc_close_instant(m, dt.date(2010, 5, 3)) == utc(2010, 5, 3, 16)

    def test_summer_offset(self):
        m = make_market("A", 60, "16:00", dst=((3, 28), (10, 31), 60))
        assert utc_close_instant(m, dt.date(2010, 7, 15)) == utc(2010, 7, 15, 14)
        assert utc_close_instant(m, dt.date(2010, 1, 15)) == utc(2010, 1, 15, 15)

    def test_schedule_lookup(self):
        m = make_market("A", 0, schedule=[(dt.date(2010, 1, 1), "15:00"),
                                          (dt.date(2011, 3, 1), "16:30"),
                                          (dt.date(2012, 6, 1), "17:00")])
        assert m.local_close(dt.date(2011, 2, 28)) == dt.time(15, 0)
        assert m.local_close(dt.date(2011, 3, 1)) == dt.time(16, 30)
        assert m.local_close(dt.date(2012, 5, 31)) == dt.time(16, 30)
        assert m.local_close(dt.date(2015, 1, 1)) == dt.time(17, 0)
        assert utc_close_instant(m, "2011-03-01") == utc(2011, 3, 1, 16, 30)

    def test_southern_dst_wraps_new_year(self):
        m = make_market("S", 600, "16:00", dst=((10, 3), (4, 4), 60))
        assert utc_close_instant(m, dt.date(2010, 1, 15)).hour == 5
        assert utc_close_instant(m, dt.date(2010, 6, 15)).hour == 6
        assert utc_close_instant(m, dt.date(2010, 12, 15)).hour == 5

    def test_calendar_gaps(self):
        m = make_market("A", 0, years=range(2005, 2011))
        with pytest.raises(CalendarGapError):
            utc_close_instant(m, dt.date(2011, 1, 3))
        with pytest.raises(CalendarGapError):
            utc_close_instant(m, dt.date(2004, 12, 31))

    def test_schedule_must_increase(self):
        with pytest.raises(DataValidationError):
            make_market("A", schedule=[(dt.date(2010, 1, 1), "15:00"), (dt.date(2010, 1, 1), "16:00")])
        with pytest.raises(DataValidationError):
            MarketSpec("A", "developed", (ZoneRule(2010, 0),), ())
        with pytest.raises(DataValidationError):
            make_market("A", classification="submerging")


class TestTemporalDistance:
    day = dt.date(2010, 5, 3)

    def test_simultaneous(self):
        a, b = make_market("A", 0, "16:00"), make_market("B", 60, "17:00")
        assert temporal_distance(a, b, self.day).hours == 0.0

    def test_direct_subtraction(self):
        a, b = make_market("A", 0, "16:00"), make_market("B", 0, "15:00")
        assert temporal_distance(a, b, self.day).hours == 1.0

    def test_wraps_to_previous_day(self):
        # Asia closes 07:00 UTC, the Americas close 21:00 UTC the day before
        asia = make_market("AS", 540, "16:00")
        amer = make_market("AM", -300, "16:00")
        td = temporal_distance(asia, amer, self.day)
        assert (td.out, td.in_, td.hours) == ("AS", "AM", 10.0)
        assert temporal_distance(amer, asia, self.day).hours == 14.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(-720, 780), st.integers(-720, 780),
           st.integers(0, 23), st.sampled_from([0, 15, 30, 45]),
           st.integers(0, 23), st.sampled_from([0, 15, 30, 45]))
    def test_pair_sum_is_zero_or_day(self, off_a, off_b, ha, ma, hb, mb):
        a = make_market("A", off_a, f"{ha:02d}:{ma:02d}", years=[2010])
        b = make_market("B", off_b, f"{hb:02d}:{mb:02d}", years=[2010])
        ab = temporal_distance(a, b, self.day).hours
        ba = temporal_distance(b, a, self.day).hours
        assert 0 <= ab < 24 and 0 <= ba < 24
        simultaneous = utc_close_instant(a, self.day).time() == utc_close_instant(b, self.day).time()
        assert ab + ba == (0.0 if simultaneous else 24.0)


class TestLogReturns:
    def test_constant_prices(self):
        p = series("A", business_days("2010-01-04", 3), [100, 100, 100])
        r = compute_log_returns(p)
        np.testing.assert_array_equal(r.values, [0.0, 0.0])

    def test_weekend_return_kept(self):
        p = series("A", ["2010-01-08", "2010-01-11"], [100, 110])
        r = compute_log_returns(p)
        assert r.dates.tolist() == [dt.date(2010, 1, 11)]
        assert r.values[0] == pytest.approx(math.log(1.1), abs=1e-15)

    def test_weekday_holiday_drops_return(self):
        # Monday 2010-01-11 is a holiday: the Fri->Tue return goes, Tue->Wed stays
        p = series("A", ["2010-01-08", "2010-01-12", "2010-01-13"], [100, 120, 121])
        r = compute_log_returns(p)
        assert r.dates.tolist() == [dt.date(2010, 1, 13)]
        assert r.values[0] == pytest.approx(math.log(121 / 120))

    def test_invalid_prices(self):
        with pytest.raises(DataValidationError):
            PriceSeries("A", np.array(["2010-01-04", "2010-01-05"], dtype="datetime64[D]"), np.array([1.0, 0.0]))
        with pytest.raises(DataValidationError):
            compute_log_returns(series("A", ["2010-01-04", "2010-01-05"], [1.0, -2.0]))
        with pytest.raises(DataValidationError):
            compute_log_returns(series("A", ["2010-01-04"], [1.0]))
        with pytest.raises(DataValidationError):
            series("A", ["2010-01-05", "2010-01-04"], [1.0, 2.0])


def _prices(mid, dates, seed):
    rng = np.random.default_rng(seed)
    return series(mid, dates, 100 * np.exp(np.cumsum(rng.normal(0, 0.01, len(dates)))))


class TestAlignment:
    dates = business_days("2010-01-04", 8)

    def _pair(self, out_close, in_close, out_offset=0, in_offset=0):
        out = make_market("O", out_offset, out_close)
        inn = make_market("I", in_offset, in_close)
        return align_pair(_prices("O", self.dates, 1), _prices("I", self.dates, 2), out, inn)

    def test_out_closes_later_pairs_previous_day(self):
        ap = self._pair("16:00", "15:00")
        assert ap.k_min == 1
        pairs = ap.primary_pairs()
        assert pairs and all(o == d for (o, _), d in zip(pairs, self.dates[1:-1]))
        assert all(i == d for (_, i), d in zip(pairs, self.dates[2:]))

    def test_out_closes_earlier_pairs_same_day(self):
        ap = self._pair("16:00", "17:00")
        assert ap.k_min == 1
        pairs = ap.primary_pairs()
        assert pairs and all(o == i for o, i in pairs)

    def test_identical_closes_admit_lag_zero(self):
        ap = self._pair("16:00", "17:00", out_offset=0, in_offset=60)
        assert ap.k_min == 0
        assert bool(np.all(ap.simultaneous))
        pairs = ap.primary_pairs()
        assert len(pairs) == len(self.dates) - 1 and all(o == i for o, i in pairs)

    def test_values_follow_dates(self):
        out = make_market("O", 0, "16:00")
        inn = make_market("I", 0, "17:00")
        ro = series("O", self.dates, np.arange(8.0))
        ri = series("I", self.dates, 10 + np.arange(8.0))
        ap = align_series(ro, ri, out, inn)
        # lag-1 term pairs r_in[n] with r_out[n - 1], which must be the same date
        np.testing.assert_array_equal(ap.r_in[1:] - 10, ap.r_out[:-1])
        assert len(ap.r_out) == len(ap.r_in)

    def test_listwise_deletion_is_symmetric(self, rng):
        da = np.sort(rng.choice(business_days("2010-01-04", 60), 45, replace=False))
        db = np.sort(rng.choice(business_days("2010-01-04", 60), 45, replace=False))
        a, b = make_market("A", 540, "15:00"), make_market("B", -300, "16:00")
        ab = align_pair(_prices("A", da, 3), _prices("B", db, 4), a, b)
        ba = align_pair(_prices("B", db, 4), _prices("A", da, 3), b, a)
        assert set(ab.dates) | set(ab.out_dates) == set(ba.dates) | set(ba.out_dates)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 23), st.integers(0, 23), st.integers(-600, 600))
    def test_exactly_one_direction_shifts(self, ha, hb, off):
        a = make_market("A", 0, f"{ha:02d}:00", years=[2010])
        b = make_market("B", off, f"{hb:02d}:00", years=[2010])
        # real exchanges sit within a day of each other on the same local date
        assume(0 < abs(close_gap_hours(a, b, "2010-01-04")) < 24)
        ra, rb = series("A", self.dates, np.arange(8.0)), series("B", self.dates, np.arange(8.0))
        ab = align_series(ra, rb, a, b).primary_pairs()
        ba = align_series(rb, ra, b, a).primary_pairs()
        ab_shift = any(o != i for o, i in ab)
        ba_shift = any(o != i for o, i in ba)
        assert ab_shift != ba_shift

    def test_no_common_dates(self):
        a, b = make_market("A"), make_market("B")
        with pytest.raises(DataValidationError, match="no common dates"):
            align_pair(_prices("A", business_days("2010-01-04", 5), 1),
                       _prices("B", business_days("2010-02-01", 5), 2), a, b)

    def test_schedule_change_flips_regime_and_round_trips(self):
        dates = business_days("2011-02-21", 15)
        flip = dt.date(2011, 3, 1)
        back = dt.date(2011, 3, 7)
        inn = make_market("I", 0, "16:00", years=[2011])
        out = make_market("O", 0, years=[2011], schedule=[(dt.date(2011, 1, 1), "15:00"),
                                                          (flip, "17:00"), (back, "15:00")])
        ro, ri = series("O", dates, np.arange(15.0)), series("I", dates, np.arange(15.0))
        ap = align_series(ro, ri, out, inn)
        assert [np.datetime64(flip), np.datetime64(back)] == [b for b in ap.regime_breaks[:2]]
        lag = dict(zip(ap.dates.tolist(), ap.day_lag.tolist()))
        assert lag[dt.date(2011, 2, 28)] == 0 and lag[dt.date(2011, 3, 2)] == 1
        assert lag[dt.date(2011, 3, 8)] == 0
        # the original single-entry schedule gives the pre-change regime everywhere
        plain = make_market("O", 0, "15:00", years=[2011])
        ref = align_series(ro, ri, plain, inn)
        assert set(ref.day_lag.tolist()) == {0}
        after = ap.dates >= np.datetime64(back)
        np.testing.assert_array_equal(ap.day_lag[after], 0)


class TestRegistryIO:
    def test_round_trip(self, tmp_path):
        markets = [
            make_market("AR", -180, years=[2009, 2010], dst=((10, 18), (3, 15), 60),
                        classification="frontier",
                        schedule=[(dt.date(2009, 1, 1), "17:00"), (dt.date(2010, 6, 1), "18:00")]),
            make_market("JP", 540, "15:00", years=[2009, 2010]),
        ]
        path = tmp_path / "registry.yaml"
        dump_registry(markets, path, header="# note\n")
        back = load_registry(path)
        assert list(back) == ["AR", "JP"]
        assert back["AR"] == markets[0] and back["JP"] == markets[1]

    def test_unquoted_times_and_year_ranges(self, tmp_path):
        path = tmp_path / "registry.yaml"
        path.write_text(
            "markets:\n"
            "  - id: X\n    classification: emerging\n"
            "    zone_rules:\n      - {years: [2009, 2011], std_offset_minutes: 120}\n"
            "    close_schedule:\n      - {effective: 2009-01-01, close: 16:30}\n"
        )
        m = load_registry(path)["X"]
        assert m.local_close(dt.date(2010, 1, 1)) == dt.time(16, 30)
        assert utc_close_instant(m, "2011-12-30") == utc(2011, 12, 30, 14, 30)

    def test_price_csv(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("# header\ndate,market_id,close\n2010-01-05,A,2.0\n2010-01-04,A,1.0\n2010-01-04,B,3\n")
        p = load_prices(path)
        assert list(p) == ["A", "B"]
        np.testing.assert_array_equal(p["A"].values, [1.0, 2.0])
        path.write_text("date,market_id,close\n2010-01-04,A,0\n")
        with pytest.raises(DataValidationError):
            load_prices(path)
