import math
from datetime import date

import numpy as np
import pandas as pd

from buscast import temporal

from conftest import apc_row, events_frame


class TestTimeFeatures:
    def test_midnight(self):
        tf = temporal.time_features("2023-01-02T00:00:00", "monday")
        assert tf.minutes_in_day == 0
        assert tf.time_sin == 0.0 and tf.time_cos == 1.0
        assert tf.period == "night_early_morning"

    def test_1430_midday(self):
        tf = temporal.time_features("2023-01-02T14:30:00", "monday")
        assert tf.minutes_in_day == 870
        assert tf.period == "midday_offpeak"

    def test_0600_left_inclusive(self):
        assert temporal.time_features("2023-01-02T06:00:00", "monday").period == "morning_peak"

    def test_all_bin_boundaries(self):
        cases = {
            "05:59": "night_early_morning", "06:00": "morning_peak",
            "08:59": "morning_peak", "09:00": "midday_offpeak",
            "14:59": "midday_offpeak", "15:00": "afternoon_peak",
            "17:59": "afternoon_peak", "18:00": "evening_night_offpeak",
            "22:59": "evening_night_offpeak", "23:00": "night_early_morning",
        }
        for hm, period in cases.items():
            tf = temporal.time_features(f"2023-01-02T{hm}:00", "monday")
            assert tf.period == period, hm

    def test_bins_tile_day(self):
        seen = set()
        for minute in range(1440):
            seen.add(temporal.period_of(minute))
        assert seen == set(temporal.PERIODS)
        # each minute belongs to exactly one period by construction of period_of
        counts = {p: 0 for p in temporal.PERIODS}
        for minute in range(1440):
            counts[temporal.period_of(minute)] += 1
        assert counts["morning_peak"] == 180
        assert counts["midday_offpeak"] == 360
        assert counts["afternoon_peak"] == 180
        assert counts["evening_night_offpeak"] == 300
        assert counts["night_early_morning"] == 420
        assert sum(counts.values()) == 1440

    def test_periodicity_24h(self):
        a = temporal.time_features("2023-01-02T14:30:00", "monday")
        b = temporal.time_features("2023-01-03T14:30:00", "tuesday")
        assert (a.minutes_in_day, a.time_sin, a.time_cos, a.period) == \
               (b.minutes_in_day, b.time_sin, b.time_cos, b.period)

    def test_unit_circle_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            h, m = rng.integers(0, 24), rng.integers(0, 60)
            tf = temporal.time_features(f"2023-01-02T{h:02d}:{m:02d}:00", "monday")
            assert abs(tf.time_sin ** 2 + tf.time_cos ** 2 - 1.0) < 1e-9


class TestWeekendHoliday:
    def test_rest_day(self):
        tf = temporal.time_features("2023-01-06T10:00:00", "friday")
        assert tf.weekend_holiday

    def test_holiday_date(self):
        tf = temporal.time_features("2023-01-26T10:00:00", "thursday",
                                    holidays={date(2023, 1, 26)})
        assert tf.weekend_holiday

    def test_plain_weekday(self):
        assert not temporal.time_features("2023-01-02T10:00:00", "monday").weekend_holiday

    def test_custom_rest_days(self):
        tf = temporal.time_features("2023-01-07T10:00:00", "saturday",
                                    rest_days=("sunday",))
        assert not tf.weekend_holiday


class TestVectorized:
    def test_matches_scalar(self):
        rows = []
        rng = np.random.default_rng(1)
        for i in range(200):
            h, m = rng.integers(0, 24), rng.integers(0, 60)
            day = rng.integers(1, 28)
            wd = ["monday", "friday", "saturday", "sunday"][rng.integers(0, 4)]
            rows.append(apc_row(trip=f"t{i}", ts=f"2023-01-{day:02d}T{h:02d}:{m:02d}:00",
                                weekday=wd))
        ev = events_frame(rows)
        hol = {date(2023, 1, 26)}
        table = temporal.time_feature_columns(ev, holidays=hol)
        for i in range(len(ev)):
            tf = temporal.time_features(ev.loc[i, "departure_time"],
                                        ev.loc[i, "weekday"], holidays=hol)
            assert table.loc[i, "minutes_in_day"] == tf.minutes_in_day
            assert table.loc[i, "period"] == tf.period
            assert table.loc[i, "weekend_holiday"] == int(tf.weekend_holiday)
            assert math.isclose(table.loc[i, "time_sin"], tf.time_sin, abs_tol=1e-12)
            assert math.isclose(table.loc[i, "time_cos"], tf.time_cos, abs_tol=1e-12)
