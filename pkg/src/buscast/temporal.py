"""Cyclic and categorical time-of-day features plus the weekend/holiday flag."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

MINUTES_PER_DAY = 1440

# Left-inclusive, right-exclusive bins tiling [00:00, 24:00).
PERIOD_BINS = [
    ("morning_peak", 6 * 60, 9 * 60),
    ("midday_offpeak", 9 * 60, 15 * 60),
    ("afternoon_peak", 15 * 60, 18 * 60),
    ("evening_night_offpeak", 18 * 60, 23 * 60),
]
NIGHT_PERIOD = "night_early_morning"  # [23:00, 24:00) and [00:00, 06:00)

PERIODS = [name for name, _, _ in PERIOD_BINS] + [NIGHT_PERIOD]

DEFAULT_REST_DAYS = ("friday", "saturday")


@dataclass(frozen=True)
class TimeFeatures:
    minutes_in_day: int
    time_sin: float
    time_cos: float
    period: str
    weekend_holiday: bool


def period_of(minutes: int) -> str:
    for name, lo, hi in PERIOD_BINS:
        if lo <= minutes < hi:
            return name
    return NIGHT_PERIOD


def time_features(departure_time, weekday: str, holidays=frozenset(),
                  rest_days=DEFAULT_REST_DAYS) -> TimeFeatures:
    """Derive minute-of-day, its sine/cosine encoding, the period bin, and the
    weekend/holiday indicator for one timestamp."""
    ts = pd.Timestamp(departure_time)
    minutes = ts.hour * 60 + ts.minute
    angle = 2.0 * math.pi * minutes / MINUTES_PER_DAY
    return TimeFeatures(
        minutes_in_day=minutes,
        time_sin=math.sin(angle),
        time_cos=math.cos(angle),
        period=period_of(minutes),
        weekend_holiday=(weekday.lower() in rest_days) or (ts.date() in holidays),
    )


def period_of_vec(minutes) -> np.ndarray:
    m = np.asarray(minutes)
    out = np.full(m.shape, NIGHT_PERIOD, dtype=object)
    for name, lo, hi in PERIOD_BINS:
        out[(m >= lo) & (m < hi)] = name
    return out


def time_feature_columns(events: pd.DataFrame, holidays=frozenset(),
                         rest_days=DEFAULT_REST_DAYS) -> pd.DataFrame:
    """Vectorized time features for an event table; one row per event."""
    ts = events["departure_time"]
    minutes = (ts.dt.hour * 60 + ts.dt.minute).astype(np.int64)
    angle = 2.0 * np.pi * minutes.values / MINUTES_PER_DAY
    period = period_of_vec(minutes.values)
    is_rest = events["weekday"].str.lower().isin(set(rest_days)).values
    is_holiday = ts.dt.date.isin(holidays).values if holidays else np.zeros(len(events), bool)
    return pd.DataFrame(
        {
            "minutes_in_day": minutes.values,
            "hour": ts.dt.hour.values.astype(np.int64),
            "minute": ts.dt.minute.values.astype(np.int64),
            "time_sin": np.sin(angle),
            "time_cos": np.cos(angle),
            "period": period,
            "weekend_holiday": (is_rest | is_holiday).astype(np.int64),
        },
        index=events.index,
    )
