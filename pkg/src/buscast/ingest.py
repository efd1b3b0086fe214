"""Loaders for the four source datasets plus the spatial/temporal joins.

All ingest formats are CSV with a declared header; column names are the
contract:

    apc.csv        route_id,direction,alternative,trip_key,departure_time,
                   weekday,stop_code,stop_sequence,boardings,alightings,continuing
    weather.csv    timestamp,temperature_c,rain_mm,rel_humidity_pct
    stops.csv      stop_code,lat,lon,neighborhood,socio_score
    facilities.csv kind,lat,lon
    holidays.csv   date

Timestamps are ISO-8601 local time. Loaders validate and reject bad rows
with their (1-based, header-exclusive) row numbers; they never repair.
Missing weather after the join is a value (NaN), not an error.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

EARTH_RADIUS_M = 6_371_000.0

APC_COLUMNS = [
    "route_id", "direction", "alternative", "trip_key", "departure_time",
    "weekday", "stop_code", "stop_sequence", "boardings", "alightings",
    "continuing",
]
WEATHER_COLUMNS = ["timestamp", "temperature_c", "rain_mm", "rel_humidity_pct"]
STOP_COLUMNS = ["stop_code", "lat", "lon", "neighborhood", "socio_score"]
FACILITY_COLUMNS = ["kind", "lat", "lon"]
HOLIDAY_COLUMNS = ["date"]

WEEKDAYS = [
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday",
    "sunday",
]

# The closed facility category set (19 kinds).
FACILITY_KINDS = [
    "education",
    "sport",
    "playground",
    "community_center",
    "health",
    "elderly_social_club",
    "daycares",
    "hospital",
    "university",
    "organized_shopping_center",
    "organized_commerce_centers",
    "industrial_area",
    "market",
    "neighborhood_shopping_centers",
    "old_city",
    "high_tech_park",
    "civic_center",
    "street_oriented_commerce",
    "street_accompanied_commerce",
]


def _read_csv(path, expected_columns):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    got = list(df.columns)
    if got != expected_columns:
        raise DataError(
            f"{path}: header mismatch, expected {expected_columns}, got {got}"
        )
    return df


def _bad_rows(label, rows):
    rows = sorted(rows)
    shown = ", ".join(str(r) for r in rows[:20])
    more = "" if len(rows) <= 20 else f" (+{len(rows) - 20} more)"
    return f"{label} at rows {shown}{more}"


def load_apc(path) -> pd.DataFrame:
    """Load stop-level ride events. Cleaning happens later; negative counts pass."""
    raw = _read_csv(path, APC_COLUMNS)
    if raw.empty:
        return raw.assign(
            departure_time=pd.Series(dtype="datetime64[ns]"),
            stop_sequence=pd.Series(dtype=np.int64),
            boardings=pd.Series(dtype=np.int64),
            alightings=pd.Series(dtype=np.int64),
            continuing=pd.Series(dtype=np.int64),
        )[APC_COLUMNS]

    df = raw.copy()
    bad = set()
    ts = pd.to_datetime(df["departure_time"], errors="coerce", format="ISO8601")
    bad |= set(df.index[ts.isna()])
    for col in ("stop_sequence", "boardings", "alightings", "continuing"):
        vals = pd.to_numeric(df[col], errors="coerce")
        ok = vals.notna() & (np.floor(vals.fillna(0)) == vals.fillna(0))
        bad |= set(df.index[~ok])
        df[col] = vals
    bad |= set(df.index[~df["weekday"].str.lower().isin(WEEKDAYS)])
    bad |= set(
        df.index[pd.to_numeric(df["stop_sequence"], errors="coerce").fillna(0) < 1]
    )
    if bad:
        raise DataError(_bad_rows(f"{path}: malformed APC rows", [i + 1 for i in bad]))

    df["departure_time"] = ts
    df["weekday"] = df["weekday"].str.lower()
    for col in ("stop_sequence", "boardings", "alightings", "continuing"):
        df[col] = df[col].astype(np.int64)

    dup = df.duplicated(subset=["trip_key", "stop_sequence"], keep=False)
    if dup.any():
        raise DataError(
            _bad_rows(
                f"{path}: duplicate (trip_key, stop_sequence)",
                [i + 1 for i in df.index[dup]],
            )
        )

    # Per-trip ordering invariants.
    df = df.sort_values(["trip_key", "stop_sequence"], kind="stable").reset_index(
        drop=True
    )
    grp = df.groupby("trip_key", sort=False)["departure_time"]
    if (grp.diff().dropna() < pd.Timedelta(0)).any():
        offenders = df.loc[grp.diff() < pd.Timedelta(0), "trip_key"].unique()
        raise DataError(
            f"{path}: departure_time decreases within trip(s) "
            + ", ".join(map(str, offenders[:10]))
        )
    return df


def load_weather(path) -> pd.DataFrame:
    raw = _read_csv(path, WEATHER_COLUMNS)
    if raw.empty:
        return raw.assign(
            timestamp=pd.Series(dtype="datetime64[ns]"),
            temperature_c=pd.Series(dtype=float),
            rain_mm=pd.Series(dtype=float),
            rel_humidity_pct=pd.Series(dtype=float),
        )[WEATHER_COLUMNS]
    df = raw.copy()
    bad = set()
    ts = pd.to_datetime(df["timestamp"], errors="coerce", format="ISO8601")
    bad |= set(df.index[ts.isna()])
    for col in ("temperature_c", "rain_mm", "rel_humidity_pct"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
        bad |= set(df.index[df[col].isna()])
    bad |= set(df.index[(df["rain_mm"] < 0).fillna(False)])
    bad |= set(
        df.index[
            ((df["rel_humidity_pct"] < 0) | (df["rel_humidity_pct"] > 100)).fillna(False)
        ]
    )
    if bad:
        raise DataError(
            _bad_rows(f"{path}: malformed weather rows", [i + 1 for i in bad])
        )
    df["timestamp"] = ts
    return df.sort_values("timestamp", kind="stable").reset_index(drop=True)


def load_stops(path) -> pd.DataFrame:
    raw = _read_csv(path, STOP_COLUMNS)
    if raw.empty:
        return raw.assign(
            lat=pd.Series(dtype=float),
            lon=pd.Series(dtype=float),
            socio_score=pd.Series(dtype=float),
        )[STOP_COLUMNS]
    df = raw.copy()
    bad = set()
    for col, lo, hi in (("lat", -90.0, 90.0), ("lon", -180.0, 180.0)):
        df[col] = pd.to_numeric(df[col], errors="coerce")
        bad |= set(df.index[df[col].isna() | (df[col] < lo) | (df[col] > hi)])
    # socio_score is integer-or-missing; empty string means missing
    score = df["socio_score"].replace("", np.nan)
    score_num = pd.to_numeric(score, errors="coerce")
    bad |= set(df.index[score.notna() & score_num.isna()])
    df["socio_score"] = score_num
    if bad:
        raise DataError(_bad_rows(f"{path}: malformed stop rows", [i + 1 for i in bad]))
    dup = df.duplicated(subset=["stop_code"], keep=False)
    if dup.any():
        raise DataError(
            _bad_rows(f"{path}: duplicate stop_code", [i + 1 for i in df.index[dup]])
        )
    return df.reset_index(drop=True)


def load_facilities(path) -> pd.DataFrame:
    raw = _read_csv(path, FACILITY_COLUMNS)
    if raw.empty:
        return raw.assign(lat=pd.Series(dtype=float), lon=pd.Series(dtype=float))[
            FACILITY_COLUMNS
        ]
    df = raw.copy()
    bad = set()
    df["kind"] = df["kind"].str.lower()
    bad |= set(df.index[~df["kind"].isin(FACILITY_KINDS)])
    for col, lo, hi in (("lat", -90.0, 90.0), ("lon", -180.0, 180.0)):
        df[col] = pd.to_numeric(df[col], errors="coerce")
        bad |= set(df.index[df[col].isna() | (df[col] < lo) | (df[col] > hi)])
    if bad:
        raise DataError(
            _bad_rows(f"{path}: malformed facility rows", [i + 1 for i in bad])
        )
    return df.reset_index(drop=True)


def load_holidays(path) -> set:
    """Return the set of holiday dates (datetime.date)."""
    raw = _read_csv(path, HOLIDAY_COLUMNS)
    if raw.empty:
        return set()
    parsed = pd.to_datetime(raw["date"], errors="coerce", format="ISO8601")
    bad = [i + 1 for i in raw.index[parsed.isna()]]
    if bad:
        raise DataError(_bad_rows(f"{path}: malformed holiday rows", bad))
    if parsed.duplicated().any():
        dup = [i + 1 for i in raw.index[parsed.duplicated(keep=False)]]
        raise DataError(_bad_rows(f"{path}: duplicate holiday dates", dup))
    return set(parsed.dt.date)


def haversine_m(a, b) -> float:
    """Great-circle distance in meters between (lat, lon) pairs, mean Earth radius."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_m_vec(lat1, lon1, lat2, lon2):
    """Vectorized haversine; arguments in degrees, broadcastable arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def facility_counts(stop, facilities: pd.DataFrame, r: float) -> dict:
    """Count facilities of each kind within r meters of the stop (boundary inclusive).

    `stop` is anything with lat/lon attributes or a (lat, lon) pair.
    Returns {kind: count} covering the full closed category set.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    lat = getattr(stop, "lat", None)
    if lat is None:
        lat, lon = stop[0], stop[1]
    else:
        lon = stop.lon
    counts = {kind: 0 for kind in FACILITY_KINDS}
    if len(facilities):
        d = haversine_m_vec(lat, lon, facilities["lat"].values, facilities["lon"].values)
        within = facilities.loc[d <= r, "kind"]
        for kind, n in within.value_counts().items():
            counts[kind] = int(n)
    return counts


def facility_count_table(stops: pd.DataFrame, facilities: pd.DataFrame, r: float) -> pd.DataFrame:
    """Per-stop facility count vectors, columns fac_<kind>, indexed like `stops`."""
    rows = []
    for rec in stops.itertuples(index=False):
        counts = facility_counts((rec.lat, rec.lon), facilities, r)
        rows.append([counts[k] for k in FACILITY_KINDS])
    out = pd.DataFrame(rows, columns=[f"fac_{k}" for k in FACILITY_KINDS])
    out.insert(0, "stop_code", stops["stop_code"].values)
    return out


def join_weather(events: pd.DataFrame, weather: pd.DataFrame, tol=pd.Timedelta(minutes=30)) -> pd.DataFrame:
    """Annotate events with the nearest-in-time weather observation within tol.

    Ties (event equidistant between two observations) resolve to the earlier
    observation. Outside tol the three weather fields are NaN. No other event
    column is touched.
    """
    out = events.copy()
    n = len(out)
    fields = ["temperature_c", "rain_mm", "rel_humidity_pct"]
    if n == 0 or len(weather) == 0:
        for f in fields:
            out[f] = np.nan
        return out
    wts = weather["timestamp"].values.astype("datetime64[ns]").astype(np.int64)
    if np.any(np.diff(wts) < 0):
        raise ValueError("weather must be sorted by timestamp")
    ets = out["departure_time"].values.astype("datetime64[ns]").astype(np.int64)
    pos = np.searchsorted(wts, ets)
    left = np.clip(pos - 1, 0, len(wts) - 1)
    right = np.clip(pos, 0, len(wts) - 1)
    dl = np.abs(ets - wts[left])
    dr = np.abs(ets - wts[right])
    # earlier observation wins ties
    choose_left = dl <= dr
    idx = np.where(choose_left, left, right)
    dist = np.where(choose_left, dl, dr)
    ok = dist <= int(tol.value)
    for f in fields:
        vals = weather[f].values[idx].astype(float)
        vals[~ok] = np.nan
        out[f] = vals
    return out
