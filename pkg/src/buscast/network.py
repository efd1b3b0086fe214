"""Hourly directed snapshot graphs of the stop network and their features.

A snapshot pools all training days sharing one hour of day: an edge (u, v)
exists when at least one trip traverses u -> v with a departure from u in
that hour. Each edge carries 13 weights (route count, geodesic distance,
sum/avg/std of boardings, alightings and through-passengers, trip
frequency, and a 5-way uniform frequency bin). Passenger weights for a
segment come from the upstream stop's counts: the continuing count after u
is the through-load carried on u -> v.

Shortest paths everywhere are hop-count based; weights are features, not
path costs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ingest import haversine_m

EDGE_WEIGHT_COLUMNS = [
    "routes", "distance_m",
    "board_sum", "board_avg", "board_std",
    "alight_sum", "alight_avg", "alight_std",
    "cont_sum", "cont_avg", "cont_std",
    "freq", "freq_bin",
]

NET_STAT_FAMILIES = ["cont", "board", "alight", "freq_bin", "distance"]
NET_STAT_NAMES = ["mean", "median", "std", "min", "max", "sum", "count"]


@dataclass
class NetworkSnapshot:
    hour: int
    nodes: list
    edges: pd.DataFrame = field(default_factory=pd.DataFrame)  # u, v + weights

    def edge_index(self) -> dict:
        return {(u, v): i for i, (u, v) in enumerate(zip(self.edges["u"], self.edges["v"]))}

    def adjacency(self) -> dict:
        adj = {n: [] for n in self.nodes}
        for u, v in zip(self.edges["u"], self.edges["v"]):
            adj[u].append(v)
        return adj


def trip_segments(events: pd.DataFrame) -> pd.DataFrame:
    """Consecutive-stop segments of every trip with the upstream stop's counts.

    Columns: trip_key, route_id, u, v, hour, boardings, alightings, continuing.
    """
    if events.empty:
        return pd.DataFrame(
            columns=["trip_key", "route_id", "u", "v", "hour",
                     "boardings", "alightings", "continuing"]
        )
    ev = events.sort_values(["trip_key", "stop_sequence"], kind="stable")
    same_trip = ev["trip_key"].values[:-1] == ev["trip_key"].values[1:]
    up = ev.iloc[:-1]
    down = ev.iloc[1:]
    seg = pd.DataFrame(
        {
            "trip_key": up["trip_key"].values,
            "route_id": up["route_id"].values,
            "u": up["stop_code"].values,
            "v": down["stop_code"].values,
            "hour": up["departure_time"].dt.hour.values,
            "boardings": up["boardings"].values,
            "alightings": up["alightings"].values,
            "continuing": up["continuing"].values,
        }
    )
    return seg.loc[same_trip].reset_index(drop=True)


def _pop_std(group_sum_sq, group_sum, count):
    var = group_sum_sq / count - (group_sum / count) ** 2
    return np.sqrt(np.maximum(var, 0.0))


def freq_bins(freq) -> np.ndarray:
    """Uniform 5-way binning of edge frequencies; all-equal collapses to bin 3."""
    f = np.asarray(freq, dtype=float)
    if len(f) == 0:
        return np.zeros(0, dtype=np.int64)
    lo, hi = f.min(), f.max()
    if hi == lo:
        return np.full(len(f), 3, dtype=np.int64)
    width = (hi - lo) / 5.0
    b = np.floor((f - lo) / width).astype(np.int64) + 1
    return np.minimum(b, 5)


def build_snapshot(events: pd.DataFrame, bucket, stop_coords: dict | None = None,
                   segments: pd.DataFrame | None = None) -> NetworkSnapshot:
    """Snapshot for one hour-of-day bucket pooled over all days in `events`.

    `bucket` is an int hour 0-23 or a timestamp (its hour is used).
    `stop_coords` maps stop_code -> (lat, lon) for edge distances; segments
    may be precomputed with trip_segments() to share work across buckets.
    """
    hour = bucket if isinstance(bucket, (int, np.integer)) else pd.Timestamp(bucket).hour
    if segments is None:
        segments = trip_segments(events)
    if stop_coords is None:
        stop_coords = {}
    nodes = sorted(set(stop_coords) | set(events["stop_code"].astype(str))) if len(events) else sorted(stop_coords)
    seg = segments.loc[segments["hour"] == hour]
    if seg.empty:
        edges = pd.DataFrame(columns=["u", "v"] + EDGE_WEIGHT_COLUMNS)
        return NetworkSnapshot(hour=hour, nodes=nodes, edges=edges)

    g = seg.groupby(["u", "v"], sort=True)
    freq = g.size()
    routes = g["route_id"].nunique()
    agg = g.agg(
        board_sum=("boardings", "sum"),
        board_sq=("boardings", lambda s: float(np.sum(np.square(s.values, dtype=float)))),
        alight_sum=("alightings", "sum"),
        alight_sq=("alightings", lambda s: float(np.sum(np.square(s.values, dtype=float)))),
        cont_sum=("continuing", "sum"),
        cont_sq=("continuing", lambda s: float(np.sum(np.square(s.values, dtype=float)))),
    )
    count = freq.values.astype(float)
    edges = pd.DataFrame({"u": [u for u, _ in freq.index], "v": [v for _, v in freq.index]})
    edges["routes"] = routes.values.astype(np.int64)
    dist = np.full(len(edges), np.nan)
    for i, (u, v) in enumerate(zip(edges["u"], edges["v"])):
        cu, cv = stop_coords.get(u), stop_coords.get(v)
        if cu is not None and cv is not None:
            dist[i] = haversine_m(cu, cv)
    edges["distance_m"] = dist
    for fam, sum_col, sq_col in (
        ("board", "board_sum", "board_sq"),
        ("alight", "alight_sum", "alight_sq"),
        ("cont", "cont_sum", "cont_sq"),
    ):
        s = agg[sum_col].values.astype(float)
        edges[f"{fam}_sum"] = s
        edges[f"{fam}_avg"] = s / count
        edges[f"{fam}_std"] = _pop_std(agg[sq_col].values, s, count)
    edges["freq"] = freq.values.astype(np.int64)
    edges["freq_bin"] = freq_bins(freq.values)
    return NetworkSnapshot(hour=hour, nodes=nodes, edges=edges[["u", "v"] + EDGE_WEIGHT_COLUMNS])


def build_hourly_snapshots(events: pd.DataFrame, stop_coords: dict) -> dict:
    """All 24 hour-of-day snapshots from one training window."""
    segments = trip_segments(events)
    return {
        h: build_snapshot(events, h, stop_coords=stop_coords, segments=segments)
        for h in range(24)
    }


def _bfs_counts(adj: dict, source):
    """Distances, shortest-path counts and predecessor lists from one source."""
    dist = {source: 0}
    sigma = {source: 1.0}
    preds = {source: []}
    order = []
    q = deque([source])
    while q:
        v = q.popleft()
        order.append(v)
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                sigma[w] = 0.0
                preds[w] = []
                q.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, dist, sigma, preds


def betweenness(snapshot: NetworkSnapshot) -> dict:
    """Unnormalized node betweenness on the directed graph, endpoints excluded."""
    adj = snapshot.adjacency()
    cb = {n: 0.0 for n in snapshot.nodes}
    for s in snapshot.nodes:
        order, _, sigma, preds = _bfs_counts(adj, s)
        delta = {v: 0.0 for v in order}
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return cb


def edge_betweenness(snapshot: NetworkSnapshot) -> dict:
    """Unnormalized edge betweenness (Brandes edge variant), directed, unweighted."""
    adj = snapshot.adjacency()
    ce = {(u, v): 0.0 for u, v in zip(snapshot.edges["u"], snapshot.edges["v"])}
    for s in snapshot.nodes:
        order, dist, sigma, preds = _bfs_counts(adj, s)
        delta = {v: 0.0 for v in order}
        for w in reversed(order):
            for v in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + delta[w])
                key = (v, w)
                if key in ce:
                    ce[key] += c
                delta[v] += c
    return ce


def closeness(snapshot: NetworkSnapshot) -> dict:
    """Outward closeness with reachability correction.

    For node v reaching R(v) nodes (excluding itself) with total hop distance
    D: closeness = (|R| / D) * (|R| / (n - 1)); nodes reaching nothing get 0.
    """
    adj = snapshot.adjacency()
    n = len(snapshot.nodes)
    out = {}
    for v in snapshot.nodes:
        _, dist, _, _ = _bfs_counts(adj, v)
        reach = len(dist) - 1
        total = sum(dist.values())
        if reach == 0 or n <= 1:
            out[v] = 0.0
        else:
            out[v] = (reach / total) * (reach / (n - 1))
    return out


def eigenvector(snapshot: NetworkSnapshot, tol: float = 1e-8, max_iter: int = 1000):
    """Eigenvector centrality of the undirected projection, max-norm normalized.

    Power iteration runs on A + I (same dominant eigenvector, immune to the
    period-2 oscillation bipartite projections cause). Returns
    (values, converged); non-convergence returns the last iterate with
    converged=False rather than raising.
    """
    nodes = snapshot.nodes
    index = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    if n == 0:
        return {}, True
    pairs = set()
    for u, v in zip(snapshot.edges["u"], snapshot.edges["v"]):
        if u != v:
            pairs.add((index[u], index[v]))
            pairs.add((index[v], index[u]))
    if not pairs:
        return {node: 0.0 for node in nodes}, True
    src = np.fromiter((p[0] for p in sorted(pairs)), dtype=np.int64)
    dst = np.fromiter((p[1] for p in sorted(pairs)), dtype=np.int64)
    x = np.ones(n)
    converged = False
    for _ in range(max_iter):
        nxt = x + np.bincount(dst, weights=x[src], minlength=n)
        norm = nxt.max()
        if norm == 0:
            x = nxt
            break
        nxt /= norm
        if np.abs(nxt - x).max() < tol:
            x = nxt
            converged = True
            break
        x = nxt
    return {node: float(x[index[node]]) for node in nodes}, converged


def degrees(snapshot: NetworkSnapshot):
    """(in_degree, out_degree) dicts over all nodes."""
    indeg = {n: 0 for n in snapshot.nodes}
    outdeg = {n: 0 for n in snapshot.nodes}
    for u, v in zip(snapshot.edges["u"], snapshot.edges["v"]):
        outdeg[u] += 1
        indeg[v] += 1
    return indeg, outdeg


def density_and_clustering(snapshot: NetworkSnapshot):
    """Directed density |E|/(n(n-1)) and average undirected clustering coefficient."""
    n = len(snapshot.nodes)
    if n < 1:
        raise ValueError("empty node set")
    m = len(snapshot.edges)
    density = 0.0 if n == 1 else m / (n * (n - 1))
    index = {node: i for i, node in enumerate(snapshot.nodes)}
    und = [set() for _ in range(n)]
    for u, v in zip(snapshot.edges["u"], snapshot.edges["v"]):
        if u == v:
            continue
        und[index[u]].add(index[v])
        und[index[v]].add(index[u])
    total = 0.0
    for i in range(n):
        k = len(und[i])
        if k < 2:
            continue
        nbrs = list(und[i])
        links = 0
        for a in range(len(nbrs)):
            for b in range(a + 1, len(nbrs)):
                if nbrs[b] in und[nbrs[a]]:
                    links += 1
        total += 2.0 * links / (k * (k - 1))
    return density, total / n


def network_weight_stats(snapshot: NetworkSnapshot) -> dict:
    """{family_stat: value} over edges for cont/board/alight sums, freq bins, distance.

    Empty graphs report count 0 and NaN for the other statistics.
    """
    series = {
        "cont": snapshot.edges["cont_sum"].values if len(snapshot.edges) else np.array([]),
        "board": snapshot.edges["board_sum"].values if len(snapshot.edges) else np.array([]),
        "alight": snapshot.edges["alight_sum"].values if len(snapshot.edges) else np.array([]),
        "freq_bin": snapshot.edges["freq_bin"].values if len(snapshot.edges) else np.array([]),
        "distance": snapshot.edges["distance_m"].values if len(snapshot.edges) else np.array([]),
    }
    out = {}
    for fam, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        vals = vals[~np.isnan(vals)]
        if len(vals) == 0:
            for stat in NET_STAT_NAMES:
                out[f"net_{fam}_{stat}"] = 0.0 if stat == "count" else np.nan
            continue
        out[f"net_{fam}_mean"] = float(vals.mean())
        out[f"net_{fam}_median"] = float(np.median(vals))
        out[f"net_{fam}_std"] = float(vals.std())
        out[f"net_{fam}_min"] = float(vals.min())
        out[f"net_{fam}_max"] = float(vals.max())
        out[f"net_{fam}_sum"] = float(vals.sum())
        out[f"net_{fam}_count"] = float(len(vals))
    return out


ROUTE_AGG_COLUMNS = [
    "route_board_sum", "route_board_avg", "route_board_std",
    "route_alight_sum", "route_alight_avg", "route_alight_std",
    "route_cont_sum", "route_cont_avg", "route_cont_std",
    "route_dist_avg", "route_freq", "route_freq_bin",
]


def route_aggregates(events: pd.DataFrame, bucket, stop_coords: dict | None = None,
                     segments: pd.DataFrame | None = None) -> pd.DataFrame:
    """Per-route aggregates over stop events in one hour-of-day bucket.

    route_freq counts the route's trips in the bucket; the binned variant uses
    the same uniform 5-way rule as edge frequencies, across routes.
    """
    hour = bucket if isinstance(bucket, (int, np.integer)) else pd.Timestamp(bucket).hour
    if events.empty:
        return pd.DataFrame(columns=["route_id"] + ROUTE_AGG_COLUMNS)
    ev = events.loc[events["departure_time"].dt.hour == hour]
    if ev.empty:
        return pd.DataFrame(columns=["route_id"] + ROUTE_AGG_COLUMNS)
    g = ev.groupby("route_id", sort=True)
    out = pd.DataFrame({"route_id": sorted(g.groups)})
    for fam, col in (("board", "boardings"), ("alight", "alightings"), ("cont", "continuing")):
        out[f"route_{fam}_sum"] = g[col].sum().values.astype(float)
        out[f"route_{fam}_avg"] = g[col].mean().values
        out[f"route_{fam}_std"] = g[col].std(ddof=0).fillna(0.0).values
    if segments is None:
        segments = trip_segments(events)
    seg = segments.loc[segments["hour"] == hour]
    dist_avg = pd.Series(np.nan, index=out["route_id"])
    if len(seg) and stop_coords:
        d = np.array([
            haversine_m(stop_coords[u], stop_coords[v])
            if u in stop_coords and v in stop_coords else np.nan
            for u, v in zip(seg["u"], seg["v"])
        ])
        by_route = pd.Series(d, index=seg["route_id"].values).groupby(level=0).mean()
        dist_avg.update(by_route)
    out["route_dist_avg"] = dist_avg.values
    out["route_freq"] = g["trip_key"].nunique().values.astype(np.int64)
    out["route_freq_bin"] = freq_bins(out["route_freq"].values)
    return out


def node_feature_table(snapshot: NetworkSnapshot) -> pd.DataFrame:
    """Per-node centralities for one snapshot: degree, closeness, betweenness, eigenvector."""
    indeg, outdeg = degrees(snapshot)
    close = closeness(snapshot)
    btw = betweenness(snapshot)
    eig, _ = eigenvector(snapshot)
    return pd.DataFrame(
        {
            "stop_code": snapshot.nodes,
            "node_in_degree": [float(indeg[n]) for n in snapshot.nodes],
            "node_out_degree": [float(outdeg[n]) for n in snapshot.nodes],
            "node_closeness": [close[n] for n in snapshot.nodes],
            "node_betweenness": [btw[n] for n in snapshot.nodes],
            "node_eigenvector": [eig[n] for n in snapshot.nodes],
        }
    )
