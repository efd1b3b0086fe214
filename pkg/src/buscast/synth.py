"""Synthetic city generator with planted, recoverable structure.

The city has two spatial stop clusters with distinct demand regimes; every
route belongs to one cluster and runs the full cluster corridor, so routes
within a cluster share segments while differing in base demand. Planted
effects, all recorded in ground-truth files:

  * route-level demand multipliers (the dominant predictive driver),
  * a double-peak diurnal profile and a weekend/holiday dip,
  * a mild temperature/rain response,
  * corrupt rides injected at documented rates: negative counts, capacity
    breaches (paired 60/60 board+alight) and boarding/alighting imbalances.

Clean rides telescope to zero total imbalance (trips start and end empty),
so discrepancy thresholds estimated on clean data are degenerate at zero and
the dual criterion isolates exactly the injected imbalanced rides.

Outputs are byte-identical for a fixed seed.
"""

from __future__ import annotations

import json
import math
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .ingest import FACILITY_KINDS, WEEKDAYS

CAP = 50
NEGATIVE_RATE = 0.05
DISCREPANCY_RATE = 0.02
CAPACITY_RATE = 0.01

CLUSTER_CENTERS = {"A": (31.262, 34.777), "B": (31.234, 34.818)}
CLUSTER_SHARE_A = 0.4
# (demand multiplier, trips per weekday) per route slot within a cluster;
# the busier route carries less demand so route totals misorder route means.
ROUTE_SLOTS = {
    "A": [(2.4, 5), (1.4, 10)],
    "B": [(1.0, 5), (0.55, 10)],
}
SERVICE_START_MIN = 5 * 60 + 30
SERVICE_END_MIN = 23 * 60
SEGMENT_SECONDS = 100
REST_DAYS = ("friday", "saturday")
WEEKEND_FACTOR = 0.45
BASE_PLATEAU = 14.0     # occupancy a multiplier-1.0 route targets at diurnal peak 1.0
TURNOVER = 0.06         # per-stop alighting fraction mid-corridor


def diurnal(minute_of_day: float) -> float:
    """Double-peak demand curve over the service day."""
    h = minute_of_day / 60.0
    return (
        0.25
        + 0.95 * math.exp(-((h - 7.75) ** 2) / 1.6)
        + 0.85 * math.exp(-((h - 17.0) ** 2) / 2.4)
    )


def _trip_departures(n_trips: int, rng) -> list:
    """Departure minutes spread over the service window by demand density."""
    grid = np.arange(SERVICE_START_MIN, SERVICE_END_MIN)
    density = np.array([diurnal(m) for m in grid])
    cdf = np.cumsum(density)
    cdf /= cdf[-1]
    qs = (np.arange(n_trips) + 0.5) / n_trips
    minutes = grid[np.searchsorted(cdf, qs)]
    jitter = rng.integers(-6, 7, size=n_trips)
    return sorted(int(np.clip(m + j, SERVICE_START_MIN, SERVICE_END_MIN - 1))
                  for m, j in zip(minutes, jitter))


def _stop_layout(n_stops: int, rng):
    """Two Gaussian blobs; corridor order follows each blob's long axis."""
    n_a = int(round(n_stops * CLUSTER_SHARE_A))
    n_b = n_stops - n_a
    stops = []
    for cluster, n in (("A", n_a), ("B", n_b)):
        clat, clon = CLUSTER_CENTERS[cluster]
        along = rng.normal(0.0, 0.010, size=n)
        across = rng.normal(0.0, 0.0035, size=n)
        # long axis tilted differently per blob
        ang = 0.5 if cluster == "A" else -0.3
        lat = clat + along * math.cos(ang) - across * math.sin(ang)
        lon = clon + along * math.sin(ang) + across * math.cos(ang)
        order = np.argsort(along, kind="stable")
        for rank, i in enumerate(order):
            stops.append((cluster, rank, float(lat[i]), float(lon[i])))
    rows = []
    for idx, (cluster, rank, lat, lon) in enumerate(stops):
        code = f"S{idx + 1:03d}"
        socio = rng.integers(6, 10) if cluster == "A" else rng.integers(2, 6)
        missing = rng.random() < 0.05
        rows.append(
            {
                "stop_code": code,
                "lat": round(lat, 6),
                "lon": round(lon, 6),
                "neighborhood": f"{cluster}{rank // 12 + 1}",
                "socio_score": "" if missing else int(socio),
                "cluster": cluster,
                "corridor_rank": rank,
            }
        )
    return pd.DataFrame(rows)


def _weather_frame(start: date, days: int, rng) -> pd.DataFrame:
    rows = []
    t = datetime.combine(start, datetime.min.time())
    end = t + timedelta(days=days)
    day0 = t
    while t < end:
        doy = (t - day0).days
        minute = t.hour * 60 + t.minute
        seasonal = 14.0 + 6.0 * math.sin(2 * math.pi * (doy % 365) / 365.0)
        diurnal_temp = 5.5 * math.sin(2 * math.pi * (minute - 540) / 1440.0)
        temp = seasonal + diurnal_temp + rng.normal(0, 0.8)
        raining = rng.random() < 0.04
        rain = round(float(rng.gamma(2.0, 0.8)), 1) if raining else 0.0
        hum = float(np.clip(62 - 1.5 * (temp - 14) + rng.normal(0, 6), 5, 100))
        rows.append(
            {
                "timestamp": t.strftime("%Y-%m-%dT%H:%M:%S"),
                "temperature_c": round(temp, 1),
                "rain_mm": rain,
                "rel_humidity_pct": round(hum, 1),
            }
        )
        t += timedelta(minutes=10)
    return pd.DataFrame(rows)


def _facilities_frame(stops: pd.DataFrame, rng) -> pd.DataFrame:
    mixes = {
        "A": ["organized_commerce_centers", "education", "market", "civic_center",
              "university", "health", "street_oriented_commerce", "old_city"],
        "B": ["playground", "community_center", "daycares", "sport",
              "elderly_social_club", "neighborhood_shopping_centers", "health",
              "education"],
    }
    rows = []
    for cluster in ("A", "B"):
        sub = stops.loc[stops["cluster"] == cluster]
        n_fac = 30 if cluster == "A" else 24
        for _ in range(n_fac):
            anchor = sub.iloc[int(rng.integers(0, len(sub)))]
            kind = mixes[cluster][int(rng.integers(0, len(mixes[cluster])))]
            rows.append(
                {
                    "kind": kind,
                    "lat": round(float(anchor["lat"] + rng.normal(0, 0.0012)), 6),
                    "lon": round(float(anchor["lon"] + rng.normal(0, 0.0012)), 6),
                }
            )
    # a couple of rare kinds so the closed set is exercised
    extra = [k for k in FACILITY_KINDS if k not in set(mixes["A"]) | set(mixes["B"])]
    for i, kind in enumerate(extra[:4]):
        anchor = stops.iloc[int(rng.integers(0, len(stops)))]
        rows.append(
            {
                "kind": kind,
                "lat": round(float(anchor["lat"] + rng.normal(0, 0.0015)), 6),
                "lon": round(float(anchor["lon"] + rng.normal(0, 0.0015)), 6),
            }
        )
    return pd.DataFrame(rows)


def _weather_lookup(weather: pd.DataFrame):
    ts = pd.to_datetime(weather["timestamp"]).values.astype("datetime64[ns]").astype(np.int64)
    temp = weather["temperature_c"].values.astype(float)
    rain = weather["rain_mm"].values.astype(float)

    def at(dt: datetime):
        key = np.int64(pd.Timestamp(dt).value)
        i = int(np.clip(np.searchsorted(ts, key), 0, len(ts) - 1))
        return temp[i], rain[i]

    return at


def generate_synthetic_city(out_dir, n_stops: int = 120, n_routes: int = 4,
                            days: int = 60, seed: int = 7,
                            start: date = date(2023, 1, 1)) -> dict:
    """Write the five input CSVs plus ground-truth metadata; returns the paths."""
    if n_stops < 20 or n_routes < 2 or days < 7:
        raise ConfigError("synthetic city needs n_stops >= 20, n_routes >= 2, days >= 7")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth_dir = out / "truth"
    truth_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    stops = _stop_layout(n_stops, rng)
    weather = _weather_frame(start, days, rng)
    facilities = _facilities_frame(stops, rng)
    holidays = [start + timedelta(days=25), start + timedelta(days=44)]
    holiday_set = set(holidays)
    weather_at = _weather_lookup(weather)

    routes = []
    for i in range(n_routes):
        cluster = "A" if i % 2 == 0 else "B"
        slot = ROUTE_SLOTS[cluster][(i // 2) % len(ROUTE_SLOTS[cluster])]
        routes.append(
            {
                "route_id": f"R{i + 1:02d}",
                "cluster": cluster,
                "demand_multiplier": slot[0],
                "trips_per_day": slot[1],
            }
        )
    corridors = {
        c: stops.loc[stops["cluster"] == c].sort_values("corridor_rank")
        for c in ("A", "B")
    }

    event_rows = []
    trip_keys = []
    for day_idx in range(days):
        d = start + timedelta(days=day_idx)
        weekday = WEEKDAYS[d.weekday()]
        restday = weekday in REST_DAYS or d in holiday_set
        for route in routes:
            corridor = corridors[route["cluster"]]
            n_trips = route["trips_per_day"] if not restday else max(3, route["trips_per_day"] // 2)
            for t_idx, minute in enumerate(_trip_departures(n_trips, rng)):
                trip_key = f"{route['route_id']}-{d.isoformat()}-{t_idx:02d}"
                trip_keys.append(trip_key)
                t0 = datetime.combine(d, datetime.min.time()) + timedelta(minutes=int(minute))
                load = 0
                n_seg = len(corridor)
                for pos in range(n_seg):
                    stop = corridor.iloc[pos]
                    ts = t0 + timedelta(seconds=SEGMENT_SECONDS * pos)
                    temp, rain = weather_at(ts)
                    # occupancy plateau the trip tracks along the corridor
                    target = (
                        BASE_PLATEAU
                        * route["demand_multiplier"]
                        * diurnal(ts.hour * 60 + ts.minute)
                        * (WEEKEND_FACTOR if restday else 1.0)
                        * max(0.3, 1.0 + 0.012 * (temp - 16.0))
                        * (0.8 if rain > 0 else 1.0)
                    )
                    if pos == n_seg - 1:
                        boardings = 0
                        alightings = load
                    else:
                        alightings = int(rng.binomial(load, TURNOVER)) if load else 0
                        gap = max(0.1, target - (load - alightings))
                        boardings = int(rng.poisson(gap))
                        boardings = max(0, min(boardings, CAP - (load - alightings)))
                    load = load + boardings - alightings
                    event_rows.append(
                        (
                            route["route_id"], "1", "0", trip_key,
                            ts.strftime("%Y-%m-%dT%H:%M:%S"), weekday,
                            stop["stop_code"], pos + 1, boardings, alightings,
                            load,
                        )
                    )
    events = pd.DataFrame(
        event_rows,
        columns=[
            "route_id", "direction", "alternative", "trip_key", "departure_time",
            "weekday", "stop_code", "stop_sequence", "boardings", "alightings",
            "continuing",
        ],
    )

    # inject corrupt rides (disjoint sets, documented rates)
    all_keys = np.array(sorted(set(trip_keys)))
    perm = rng.permutation(len(all_keys))
    n_neg = int(round(NEGATIVE_RATE * len(all_keys)))
    n_disc = int(round(DISCREPANCY_RATE * len(all_keys)))
    n_cap = int(round(CAPACITY_RATE * len(all_keys)))
    neg_keys = set(all_keys[perm[:n_neg]])
    disc_keys = set(all_keys[perm[n_neg:n_neg + n_disc]])
    cap_keys = set(all_keys[perm[n_neg + n_disc:n_neg + n_disc + n_cap]])

    by_key = events.groupby("trip_key").indices
    for key in sorted(neg_keys):
        idx = by_key[key]
        pick = idx[int(rng.integers(1, len(idx)))]
        events.loc[pick, "continuing"] = -int(rng.integers(1, 4))
    for key in sorted(disc_keys):
        idx = by_key[key]
        # bump only stops that stay under the capacity threshold after +3
        safe = idx[events.loc[idx, "boardings"].values + 3 <= CAP]
        chosen = safe[: max(2, len(safe) // 2)]
        events.loc[chosen, "boardings"] = events.loc[chosen, "boardings"] + 3
    for key in sorted(cap_keys):
        idx = by_key[key]
        pick = idx[int(rng.integers(1, len(idx) - 1))] if len(idx) > 2 else idx[0]
        events.loc[pick, "boardings"] = 60
        events.loc[pick, "alightings"] = 60

    paths = {
        "apc": out / "apc.csv",
        "weather": out / "weather.csv",
        "stops": out / "stops.csv",
        "facilities": out / "facilities.csv",
        "holidays": out / "holidays.csv",
    }
    events.to_csv(paths["apc"], index=False)
    weather.to_csv(paths["weather"], index=False)
    stops.drop(columns=["cluster", "corridor_rank"]).to_csv(paths["stops"], index=False)
    facilities.to_csv(paths["facilities"], index=False)
    pd.DataFrame({"date": [d.isoformat() for d in holidays]}).to_csv(
        paths["holidays"], index=False
    )

    stops[["stop_code", "cluster"]].to_csv(truth_dir / "stop_clusters.csv", index=False)
    bad = (
        [(k, "negative") for k in sorted(neg_keys)]
        + [(k, "discrepancy") for k in sorted(disc_keys)]
        + [(k, "capacity") for k in sorted(cap_keys)]
    )
    pd.DataFrame(bad, columns=["trip_key", "kind"]).to_csv(
        truth_dir / "bad_rides.csv", index=False
    )
    pd.DataFrame(routes).to_csv(truth_dir / "route_regimes.csv", index=False)
    meta = {
        "n_stops": n_stops,
        "n_routes": n_routes,
        "days": days,
        "seed": seed,
        "start": start.isoformat(),
        "rates": {
            "negative": NEGATIVE_RATE,
            "discrepancy": DISCREPANCY_RATE,
            "capacity": CAPACITY_RATE,
        },
        "cap": CAP,
        "rest_days": list(REST_DAYS),
    }
    (truth_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return {k: str(v) for k, v in paths.items()} | {"truth": str(truth_dir)}
