"""Spatially contiguous regionalization of the stop network.

Adjacency comes from the Gabriel condition (two stops are neighbors when the
circle having their segment as diameter contains no third stop). The Max-p
heuristic partitions stops into the largest number of contiguous regions
whose summed average ridership clears a threshold tau, then a k-sweep picks
the partition with the best Calinski-Harabasz score on the ridership
attribute.

Max-p heuristic (construction + local search, deterministic given seed):
  1. GROW    - visit unassigned nodes in seeded-random order; grow a region
               from each by repeatedly absorbing the unassigned neighbor with
               the smallest attribute distance to the region mean, until the
               region sum reaches tau.
  2. ENCLAVES- dissolve regions that never reached tau; attach each orphan
               node (iteratively) to the adjacent feasible region whose mean
               is nearest.
  3. SEARCH  - steepest-descent boundary moves: relocate a border node to an
               adjacent region when both regions stay feasible and contiguous
               and the total within-region sum of squares decreases; stop at
               a local optimum or 1000 moves.
The best of 10 seeded restarts wins (max region count, then min WSS).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ContractError
from .ingest import haversine_m_vec

MAXP_RESTARTS = 10
MAXP_MAX_MOVES = 1000


@dataclass
class ContiguityGraph:
    nodes: list                 # stop codes, sorted
    adjacency: list             # adjacency[i] = sorted list of neighbor indices

    def neighbors_of(self, code):
        idx = self.nodes.index(code)
        return [self.nodes[j] for j in self.adjacency[idx]]

    def is_connected(self) -> bool:
        n = len(self.nodes)
        if n == 0:
            return True
        seen = {0}
        q = deque([0])
        while q:
            v = q.popleft()
            for w in self.adjacency[v]:
                if w not in seen:
                    seen.add(w)
                    q.append(w)
        return len(seen) == n


@dataclass
class Partition:
    region_of: dict             # stop_code -> region id (0..p-1)
    p: int
    tau: float
    region_sums: list

    def labels(self, nodes) -> np.ndarray:
        return np.array([self.region_of[n] for n in nodes], dtype=np.int64)


def _jitter_duplicates(lat, lon, eps=1e-7):
    """Deterministically separate exactly coincident coordinates.

    Duplicates get eps-degree offsets scaled by their duplicate rank; eps of
    1e-7 deg is ~1 cm, far below any spatial scale used downstream.
    """
    lat = lat.copy()
    lon = lon.copy()
    seen = {}
    for i in range(len(lat)):
        key = (lat[i], lon[i])
        rank = seen.get(key, 0)
        seen[key] = rank + 1
        if rank:
            lat[i] += eps * rank
            lon[i] += eps * rank
    return lat, lon


def gabriel_graph(stops: pd.DataFrame) -> ContiguityGraph:
    """Gabriel adjacency over stop coordinates using haversine distances.

    (u, v) are adjacent iff d(u,w)^2 + d(w,v)^2 >= d(u,v)^2 for every other
    stop w (empty diameter-circle criterion, boundary inclusive).
    """
    n = len(stops)
    if n < 2:
        raise ContractError("gabriel_graph needs at least 2 stops")
    order = np.argsort(stops["stop_code"].values, kind="stable")
    codes = [str(c) for c in stops["stop_code"].values[order]]
    lat = stops["lat"].values[order].astype(float)
    lon = stops["lon"].values[order].astype(float)
    lat, lon = _jitter_duplicates(lat, lon)
    d = haversine_m_vec(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    d2 = d * d
    adjacency = [[] for _ in range(n)]
    for u in range(n):
        # min over w of d2[u,w] + d2[w,v]; w in {u, v} contributes equality
        s = (d2[u][:, None] + d2).min(axis=0)
        ok = s >= d2[u]
        for v in range(u + 1, n):
            if ok[v]:
                adjacency[u].append(v)
                adjacency[v].append(u)
    return ContiguityGraph(nodes=codes, adjacency=[sorted(a) for a in adjacency])


def tau(loads, k) -> float:
    """Region threshold: total average ridership divided by the scaling factor k."""
    if k <= 0:
        raise ContractError("k must be positive")
    return float(np.sum(np.asarray(loads, dtype=float))) / k


def _region_stats(assign, loads, p):
    sums = np.zeros(p)
    sq = np.zeros(p)
    counts = np.zeros(p, dtype=np.int64)
    for i, r in enumerate(assign):
        sums[r] += loads[i]
        sq[r] += loads[i] * loads[i]
        counts[r] += 1
    return sums, sq, counts


def _wss(sums, sq, counts):
    with np.errstate(invalid="ignore"):
        return float(np.sum(sq - np.where(counts > 0, sums * sums / np.maximum(counts, 1), 0.0)))


def _connected_without(adjacency, members: set, removed) -> bool:
    rest = members - {removed}
    if not rest:
        return False
    start = next(iter(rest))
    seen = {start}
    q = deque([start])
    while q:
        v = q.popleft()
        for w in adjacency[v]:
            if w in rest and w not in seen:
                seen.add(w)
                q.append(w)
    return len(seen) == len(rest)


def _grow_phase(adjacency, loads, tau_value, rng):
    n = len(loads)
    assign = np.full(n, -1, dtype=np.int64)
    feasible_regions = []
    order = rng.permutation(n)
    for seed_node in order:
        if assign[seed_node] >= 0:
            continue
        members = [int(seed_node)]
        region_sum = loads[seed_node]
        assign[seed_node] = -2  # provisional member of the growing region
        frontier = {w for w in adjacency[seed_node] if assign[w] == -1}
        while region_sum < tau_value and frontier:
            mean = region_sum / len(members)
            best, best_key = None, None
            for w in frontier:
                key = (abs(loads[w] - mean), w)
                if best_key is None or key < best_key:
                    best, best_key = w, key
            frontier.discard(best)
            members.append(int(best))
            region_sum += loads[best]
            assign[best] = -2
            frontier |= {w for w in adjacency[best] if assign[w] == -1}
        if region_sum >= tau_value:
            rid = len(feasible_regions)
            for m in members:
                assign[m] = rid
            feasible_regions.append(members)
        else:
            for m in members:
                assign[m] = -1  # enclave pool
    return assign, feasible_regions


def _attach_enclaves(adjacency, loads, assign, regions):
    p = len(regions)
    sums = np.zeros(p)
    sq = np.zeros(p)
    counts = np.zeros(p, dtype=np.int64)
    for i in range(len(loads)):
        if assign[i] >= 0:
            r = assign[i]
            sums[r] += loads[i]
            sq[r] += loads[i] ** 2
            counts[r] += 1
    pool = sorted(i for i in range(len(loads)) if assign[i] < 0)
    while pool:
        progressed = False
        for node in list(pool):
            adjacent_regions = sorted({int(assign[w]) for w in adjacency[node] if assign[w] >= 0})
            if not adjacent_regions:
                continue
            means = sums[adjacent_regions] / np.maximum(counts[adjacent_regions], 1)
            pick = adjacent_regions[int(np.argmin(np.abs(means - loads[node])))]
            assign[node] = pick
            regions[pick].append(node)
            sums[pick] += loads[node]
            sq[pick] += loads[node] ** 2
            counts[pick] += 1
            pool.remove(node)
            progressed = True
        if not progressed:
            raise ContractError("enclave attachment stalled; contiguity graph disconnected?")
    return assign, regions


def _local_search(adjacency, loads, assign, p, tau_value, max_moves=MAXP_MAX_MOVES):
    n = len(loads)
    sums, sq, counts = _region_stats(assign, loads, p)
    members = [set() for _ in range(p)]
    for i, r in enumerate(assign):
        members[r].add(i)
    for _ in range(max_moves):
        # candidate moves that keep both sums feasible and reduce WSS;
        # contiguity of the donor is verified lazily, steepest first
        candidates = []
        for node in range(n):
            src = assign[node]
            if counts[src] <= 1:
                continue
            if sums[src] - loads[node] < tau_value:
                continue
            targets = sorted({int(assign[w]) for w in adjacency[node] if assign[w] != src})
            if not targets:
                continue
            x = loads[node]
            # delta WSS of removing x from src and adding to dst (O(1) each)
            ms, cs = sums[src], counts[src]
            d_src = -(x - ms / cs) ** 2 * cs / (cs - 1)
            for dst in targets:
                md, cd = sums[dst], counts[dst]
                d_dst = (x - md / cd) ** 2 * cd / (cd + 1)
                delta = d_src + d_dst
                if delta < -1e-12:
                    candidates.append((delta, node, src, dst))
        candidates.sort()
        applied = False
        contiguity_ok = {}
        for delta, node, src, dst in candidates:
            ok = contiguity_ok.get(node)
            if ok is None:
                ok = _connected_without(adjacency, members[src], node)
                contiguity_ok[node] = ok
            if not ok:
                continue
            x = loads[node]
            assign[node] = dst
            members[src].discard(node)
            members[dst].add(node)
            sums[src] -= x; sq[src] -= x * x; counts[src] -= 1
            sums[dst] += x; sq[dst] += x * x; counts[dst] += 1
            applied = True
            break
        if not applied:
            break
    return assign, _wss(sums, sq, counts)


def maxp(graph: ContiguityGraph, loads, tau_value: float, seed: int = 0) -> Partition:
    """Max-p partition of the contiguity graph; see module docstring for the heuristic."""
    nodes = graph.nodes
    n = len(nodes)
    load_arr = np.asarray([loads[c] for c in nodes] if isinstance(loads, dict)
                          else loads, dtype=float)
    if len(load_arr) != n:
        raise ContractError("loads must cover every node")
    total = float(load_arr.sum())
    if total < tau_value:
        raise ContractError(f"infeasible: total load {total} < tau {tau_value}")
    if not graph.is_connected():
        raise ContractError("contiguity graph must be connected")

    best = None
    seeds = np.random.SeedSequence(seed).spawn(MAXP_RESTARTS)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        assign, regions = _grow_phase(graph.adjacency, load_arr, tau_value, rng)
        if not regions:
            continue
        assign, regions = _attach_enclaves(graph.adjacency, load_arr, assign, regions)
        p = len(regions)
        assign, wss = _local_search(graph.adjacency, load_arr, assign, p, tau_value)
        key = (-p, wss)
        if best is None or key < best[0]:
            best = (key, assign.copy(), p)
    _, assign, p = best
    sums, _, _ = _region_stats(assign, load_arr, p)
    return Partition(
        region_of={nodes[i]: int(assign[i]) for i in range(n)},
        p=p,
        tau=tau_value,
        region_sums=[float(s) for s in sums],
    )


def ch_index(partition: Partition, attribute: dict) -> float:
    """Calinski-Harabasz score of the partition on a scalar per-stop attribute.

    Degenerate zero within-group scatter returns +inf (flagged maximal value).
    """
    nodes = sorted(partition.region_of)
    x = np.array([attribute[n] for n in nodes], dtype=float)
    labels = np.array([partition.region_of[n] for n in nodes])
    n = len(nodes)
    p = partition.p
    if p < 2 or p > n - 1:
        raise ContractError(f"CH undefined for p={p} with n={n}")
    grand = x.mean()
    bgss = 0.0
    wgss = 0.0
    for r in range(p):
        grp = x[labels == r]
        if len(grp) == 0:
            continue
        m = grp.mean()
        bgss += len(grp) * (m - grand) ** 2
        wgss += float(np.sum((grp - m) ** 2))
    if wgss == 0.0:
        return float("inf")
    return (bgss / (p - 1)) / (wgss / (n - p))


def select_partition(graph: ContiguityGraph, loads, k_grid, seed: int = 0):
    """Sweep tau(k) over the grid and return (best_k, Partition) maximizing CH.

    Only partitions with p >= 2 are eligible; ties break toward smaller k.
    """
    if not len(k_grid):
        raise ContractError("empty k grid")
    attr = loads if isinstance(loads, dict) else dict(zip(graph.nodes, loads))
    load_arr = np.array([attr[c] for c in graph.nodes], dtype=float)
    best = None
    for k in sorted(k_grid):
        part = maxp(graph, load_arr, tau(load_arr, k), seed=seed)
        if part.p < 2:
            continue
        score = ch_index(part, attr)
        if best is None or score > best[0]:
            best = (score, k, part)
    if best is None:
        raise ContractError("no partition with p >= 2 in the k grid")
    return best[1], best[2]


def partition_export(partition: Partition, k: int) -> pd.DataFrame:
    """Flat table: stop_code, region_id, k, tau, region_sum."""
    rows = [
        (code, rid, k, partition.tau, partition.region_sums[rid])
        for code, rid in sorted(partition.region_of.items())
    ]
    return pd.DataFrame(rows, columns=["stop_code", "region_id", "k", "tau", "region_sum"])
