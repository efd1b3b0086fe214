"""Ride-level cleaning: implausible counts and discrepancy outliers.

A ride (all events sharing a trip_key) is the unit of removal throughout.
Discrepancy thresholds are estimated from training data only and reused
unchanged on evaluation windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ContractError

COUNT_COLUMNS = ["boardings", "alightings", "continuing"]


@dataclass(frozen=True)
class RideDiscrepancy:
    trip_key: str
    tb: int
    ta: int
    pct_diff: float
    abs_diff: int


@dataclass(frozen=True)
class IqrThresholds:
    pct_upper: float
    pct_lower: float
    abs_upper: float
    abs_lower: float


def _split_by_trips(events: pd.DataFrame, drop_mask_by_trip: pd.Series):
    dropped_keys = list(drop_mask_by_trip.index[drop_mask_by_trip])
    keep = ~events["trip_key"].isin(set(dropped_keys))
    return events.loc[keep].reset_index(drop=True), dropped_keys


def drop_negative_rides(events: pd.DataFrame):
    """Drop every ride containing any negative boarding/alighting/continuing count."""
    if events.empty:
        return events.copy(), []
    neg = (events[COUNT_COLUMNS] < 0).any(axis=1)
    by_trip = neg.groupby(events["trip_key"]).any()
    return _split_by_trips(events, by_trip)


def capacity_filter(events: pd.DataFrame, delta: float):
    """Drop rides where any single-stop count strictly exceeds delta."""
    if delta <= 0:
        raise ContractError("capacity threshold must be positive")
    if events.empty:
        return events.copy(), []
    over = (events[COUNT_COLUMNS] > delta).any(axis=1)
    by_trip = over.groupby(events["trip_key"]).any()
    return _split_by_trips(events, by_trip)


def ride_discrepancy(ride: pd.DataFrame) -> RideDiscrepancy:
    """Boarding/alighting totals and their percentage and absolute mismatch."""
    if ride.empty:
        raise ContractError("ride_discrepancy needs at least one stop event")
    tb = int(ride["boardings"].sum())
    ta = int(ride["alightings"].sum())
    denom = max(tb, ta)
    pct = 0.0 if denom == 0 else abs(tb - ta) / denom * 100.0
    return RideDiscrepancy(
        trip_key=str(ride["trip_key"].iloc[0]),
        tb=tb,
        ta=ta,
        pct_diff=pct,
        abs_diff=abs(tb - ta),
    )


def discrepancy_table(events: pd.DataFrame) -> pd.DataFrame:
    """Per-ride discrepancy measures: trip_key, tb, ta, pct_diff, abs_diff."""
    if events.empty:
        return pd.DataFrame(columns=["trip_key", "tb", "ta", "pct_diff", "abs_diff"])
    g = events.groupby("trip_key", sort=True)
    tb = g["boardings"].sum()
    ta = g["alightings"].sum()
    denom = np.maximum(tb.values, ta.values)
    absd = np.abs(tb.values - ta.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(denom == 0, 0.0, absd / np.where(denom == 0, 1, denom) * 100.0)
    return pd.DataFrame(
        {
            "trip_key": tb.index.values,
            "tb": tb.values.astype(np.int64),
            "ta": ta.values.astype(np.int64),
            "pct_diff": pct,
            "abs_diff": absd.astype(np.int64),
        }
    )


def quartiles(values) -> tuple[float, float]:
    """(Q1, Q3) by linear interpolation between order statistics."""
    arr = np.sort(np.asarray(values, dtype=float))
    n = len(arr)
    if n == 0:
        raise ContractError("quartiles of empty sample")

    def at(q):
        pos = (n - 1) * q
        lo = int(np.floor(pos))
        hi = int(np.ceil(pos))
        frac = pos - lo
        return arr[lo] * (1.0 - frac) + arr[hi] * frac

    return at(0.25), at(0.75)


def iqr_thresholds(discrepancies: pd.DataFrame) -> IqrThresholds:
    """Box-plot bounds [Q1 - 1.5*IQR, Q3 + 1.5*IQR] per measure, training data only."""
    if len(discrepancies) < 4:
        raise ContractError(
            f"need at least 4 rides to estimate thresholds, got {len(discrepancies)}"
        )
    pq1, pq3 = quartiles(discrepancies["pct_diff"].values)
    aq1, aq3 = quartiles(discrepancies["abs_diff"].values)
    piqr = pq3 - pq1
    aiqr = aq3 - aq1
    return IqrThresholds(
        pct_upper=pq3 + 1.5 * piqr,
        pct_lower=pq1 - 1.5 * piqr,
        abs_upper=aq3 + 1.5 * aiqr,
        abs_lower=aq1 - 1.5 * aiqr,
    )


def dual_criterion_filter(rides: pd.DataFrame, thresholds: IqrThresholds):
    """Split a discrepancy table into (kept, dropped).

    A ride is dropped only when BOTH its percentage difference and its
    absolute difference fall outside their respective bounds.
    """
    pct_out = (rides["pct_diff"] > thresholds.pct_upper) | (
        rides["pct_diff"] < thresholds.pct_lower
    )
    abs_out = (rides["abs_diff"] > thresholds.abs_upper) | (
        rides["abs_diff"] < thresholds.abs_lower
    )
    drop = pct_out & abs_out
    kept = rides.loc[~drop].reset_index(drop=True)
    dropped = rides.loc[drop].reset_index(drop=True)
    return kept, dropped


def apply_discrepancy_filter(events: pd.DataFrame, thresholds: IqrThresholds):
    """Remove events of rides flagged by the dual criterion; returns (events, dropped table)."""
    table = discrepancy_table(events)
    _, dropped = dual_criterion_filter(table, thresholds)
    bad = set(dropped["trip_key"])
    kept_events = events.loc[~events["trip_key"].isin(bad)].reset_index(drop=True)
    return kept_events, dropped


def cleaning_report(negative_keys, capacity_keys, iqr_dropped: pd.DataFrame,
                    discrepancies: pd.DataFrame) -> pd.DataFrame:
    """Assemble the cleaning report: trip_key, reason, tb, ta, pct_diff, abs_diff."""
    lookup = discrepancies.set_index("trip_key") if len(discrepancies) else None
    rows = []
    for reason, keys in (("negative", negative_keys), ("capacity", capacity_keys)):
        for key in keys:
            if lookup is not None and key in lookup.index:
                rec = lookup.loc[key]
                rows.append((key, reason, int(rec["tb"]), int(rec["ta"]),
                             float(rec["pct_diff"]), int(rec["abs_diff"])))
            else:
                rows.append((key, reason, np.nan, np.nan, np.nan, np.nan))
    for rec in iqr_dropped.itertuples(index=False):
        rows.append((rec.trip_key, "dual_iqr", rec.tb, rec.ta, rec.pct_diff, rec.abs_diff))
    return pd.DataFrame(
        rows, columns=["trip_key", "reason", "tb", "ta", "pct_diff", "abs_diff"]
    )
