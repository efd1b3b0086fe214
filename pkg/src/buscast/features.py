"""Assembly of the per-event feature matrix from all enrichment sources.

Graph-derived columns always come from snapshots built on the training
window; evaluation events are annotated with the same tables, so missing
edges/routes/hours surface as NaN and are mean-imputed inside the model.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from . import network
from .models import FeatureMatrix
from .temporal import DEFAULT_REST_DAYS, time_feature_columns

META_COLUMNS = ["trip_key", "departure_time", "route_id", "stop_code"]

EDGE_FEATURE_RENAME = {w: f"edge_{w}" for w in network.EDGE_WEIGHT_COLUMNS}


def stop_loads(events: pd.DataFrame, stop_codes) -> dict:
    """Average ridership per stop over the window; unseen stops load 0."""
    loads = {str(c): 0.0 for c in stop_codes}
    if len(events):
        means = events.groupby("stop_code")["continuing"].mean()
        for code, val in means.items():
            loads[str(code)] = float(val)
    return loads


def trip_context(events: pd.DataFrame) -> pd.DataFrame:
    """previous_station and destination per event, from trip visit order."""
    ev = events.sort_values(["trip_key", "stop_sequence"], kind="stable")
    prev = ev["stop_code"].shift(1)
    first_of_trip = ev["trip_key"] != ev["trip_key"].shift(1)
    prev[first_of_trip] = np.nan
    dest = ev.groupby("trip_key")["stop_code"].transform("last")
    out = pd.DataFrame(
        {"previous_station": prev, "destination": dest}, index=ev.index
    )
    return out.sort_index()


def graph_feature_tables(snapshots: dict, route_aggs: dict):
    """Long-format lookup tables (hour-keyed) for node/edge/route/network features."""
    node_parts, edge_parts, net_parts, route_parts = [], [], [], []
    for h in sorted(snapshots):
        snap = snapshots[h]
        nt = network.node_feature_table(snap)
        nt.insert(0, "hour", h)
        node_parts.append(nt)

        if len(snap.edges):
            et = snap.edges.rename(columns=EDGE_FEATURE_RENAME).copy()
            eb = network.edge_betweenness(snap)
            et["edge_betweenness"] = [
                eb[(u, v)] for u, v in zip(snap.edges["u"], snap.edges["v"])
            ]
            et.insert(0, "hour", h)
            edge_parts.append(et)

        density, clustering = network.density_and_clustering(snap)
        stats = network.network_weight_stats(snap)
        net_parts.append(
            {"hour": h, "graph_density": density, "graph_avg_clustering": clustering,
             **stats}
        )

        ra = route_aggs[h]
        if len(ra):
            ra = ra.copy()
            ra.insert(0, "hour", h)
            route_parts.append(ra)

    nodes = pd.concat(node_parts, ignore_index=True) if node_parts else pd.DataFrame()
    edges = pd.concat(edge_parts, ignore_index=True) if edge_parts else pd.DataFrame()
    nets = pd.DataFrame(net_parts)
    routes = pd.concat(route_parts, ignore_index=True) if route_parts else pd.DataFrame()
    return nodes, edges, nets, routes


def build_graph_artifacts(train_events: pd.DataFrame, stop_coords: dict):
    """Training-window snapshots and per-hour route aggregates."""
    snapshots = network.build_hourly_snapshots(train_events, stop_coords)
    segments = network.trip_segments(train_events)
    route_aggs = {
        h: network.route_aggregates(train_events, h, stop_coords=stop_coords,
                                    segments=segments)
        for h in range(24)
    }
    return snapshots, route_aggs


def assemble_matrix(events: pd.DataFrame, stops: pd.DataFrame,
                    facility_table: pd.DataFrame, holidays,
                    snapshots: dict, route_aggs: dict,
                    rest_days=DEFAULT_REST_DAYS) -> FeatureMatrix:
    """Feature matrix for one event table (train or evaluation)."""
    ev = events.reset_index(drop=True)
    tf = time_feature_columns(ev, holidays=holidays, rest_days=rest_days)
    ctx = trip_context(ev)

    frame = pd.DataFrame(index=ev.index)
    # identifier block
    frame["route_id"] = ev["route_id"].astype(str)
    frame["direction"] = ev["direction"].astype(str)
    frame["stop_code"] = ev["stop_code"].astype(str)
    stop_attrs = stops.set_index("stop_code")
    frame["lat"] = ev["stop_code"].map(stop_attrs["lat"]).values
    frame["lon"] = ev["stop_code"].map(stop_attrs["lon"]).values
    frame["previous_station"] = ctx["previous_station"].values
    frame["destination"] = ctx["destination"].values
    # base attributes
    frame["alternative"] = ev["alternative"].astype(str)
    frame["stop_sequence"] = ev["stop_sequence"].values.astype(float)
    frame["socio_score"] = ev["stop_code"].map(stop_attrs["socio_score"]).values
    frame["weekday"] = ev["weekday"].astype(str)
    for col in ("temperature_c", "rain_mm", "rel_humidity_pct"):
        frame[col] = ev[col].values if col in ev.columns else np.nan
    for col in tf.columns:
        frame[col] = tf[col].values
    fac = facility_table.set_index("stop_code")
    for col in fac.columns:
        frame[col] = ev["stop_code"].map(fac[col]).values.astype(float)

    node_t, edge_t, net_t, route_t = graph_feature_tables(snapshots, route_aggs)
    key = pd.DataFrame(
        {
            "hour": tf["hour"].values,
            "stop_code": ev["stop_code"].astype(str).values,
            "prev": ctx["previous_station"].values,
            "route_id": ev["route_id"].astype(str).values,
        }
    )
    if len(node_t):
        merged = key.merge(node_t, on=["hour", "stop_code"], how="left")
        for col in node_t.columns:
            if col not in ("hour", "stop_code"):
                frame[col] = merged[col].values
    if len(edge_t):
        merged = key.merge(
            edge_t, left_on=["hour", "prev", "stop_code"],
            right_on=["hour", "u", "v"], how="left",
        )
        for col in edge_t.columns:
            if col not in ("hour", "u", "v"):
                frame[col] = merged[col].values
    else:
        for col in list(EDGE_FEATURE_RENAME.values()) + ["edge_betweenness"]:
            frame[col] = np.nan
    if len(net_t):
        merged = key.merge(net_t, on="hour", how="left")
        for col in net_t.columns:
            if col != "hour":
                frame[col] = merged[col].values
    if len(route_t):
        merged = key.merge(route_t, on=["hour", "route_id"], how="left")
        for col in route_t.columns:
            if col not in ("hour", "route_id"):
                frame[col] = merged[col].values
    else:
        for col in network.ROUTE_AGG_COLUMNS:
            frame[col] = np.nan

    meta = ev[META_COLUMNS].copy()
    meta["hour"] = tf["hour"].values
    meta["date"] = ev["departure_time"].dt.date.values
    return FeatureMatrix(
        frame=frame,
        target=ev["continuing"].values.astype(float),
        stop_codes=ev["stop_code"].astype(str).values,
        meta=meta,
    )
