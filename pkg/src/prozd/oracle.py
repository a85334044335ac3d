"""Exact graph algorithms used as ground truth: BFS, Dijkstra, exploitable-path search."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from prozd.features import cached_touches_critical
from prozd.graph_model import CRITICAL_LEVEL, ConnectivityGraph, critical_assets

INF = math.inf
MAX_EXPLOIT_HOPS = 3
MIN_NON_COMPLIANT = 2


@dataclass(frozen=True)
class ExploitWitness:
    path: tuple[int, ...]
    hops: int
    non_compliant_count: int


def hop_distances(graph: ConnectivityGraph, anchors: Sequence[int]) -> np.ndarray:
    """(n_nodes, len(anchors)) directed hop counts from every node to each anchor."""
    dist = np.full((graph.n_nodes, len(anchors)), INF)
    preds = graph.predecessors
    for col, a in enumerate(anchors):
        d = dist[:, col]
        d[a] = 0
        queue = deque([a])
        while queue:
            v = queue.popleft()
            for u in preds[v]:
                if d[u] == INF:
                    d[u] = d[v] + 1
                    queue.append(u)
    return dist


def min_hop_distance(graph: ConnectivityGraph, anchors: Sequence[int] | None = None) -> np.ndarray:
    """Multi-source BFS: distance from each node to its nearest anchor."""
    anchors = critical_assets(graph) if anchors is None else anchors
    d = np.full(graph.n_nodes, INF)
    queue = deque()
    for a in anchors:
        d[a] = 0
        queue.append(a)
    preds = graph.predecessors
    while queue:
        v = queue.popleft()
        for u in preds[v]:
            if d[u] == INF:
                d[u] = d[v] + 1
                queue.append(u)
    return d


def _check_weights(graph: ConnectivityGraph) -> None:
    for pair, w in graph.adjacency.items():
        if not w > 0:
            raise ValueError(f"non-positive weight {w} on {pair}")


def _dijkstra_to(graph: ConnectivityGraph, anchor: int) -> np.ndarray:
    """Weighted distance from every node to ``anchor`` (Dijkstra on reversed edges)."""
    dist = np.full(graph.n_nodes, INF)
    dist[anchor] = 0.0
    heap = [(0.0, anchor)]
    preds = graph.predecessors
    adj = graph.adjacency
    done = np.zeros(graph.n_nodes, dtype=bool)
    while heap:
        dv, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for u in preds[v]:
            nd = dv + adj[(u, v)]
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def weighted_distances(graph: ConnectivityGraph, anchors: Sequence[int]) -> np.ndarray:
    """(n_nodes, len(anchors)) compliance-weighted distances from every node to each anchor."""
    _check_weights(graph)
    out = np.full((graph.n_nodes, len(anchors)), INF)
    for col, a in enumerate(anchors):
        out[:, col] = _dijkstra_to(graph, a)
    return out


def weighted_shortest_path(graph: ConnectivityGraph, source: int, anchor: int) -> tuple[float, tuple[int, ...] | None]:
    """Distance and the lexicographically smallest minimum-weight path, or (inf, None)."""
    _check_weights(graph)
    to_anchor = _dijkstra_to(graph, anchor)
    if to_anchor[source] == INF:
        return INF, None
    path = [source]
    u = source
    while u != anchor:
        # positive weights: every tight successor strictly decreases the remaining distance
        u = next(
            v
            for v in graph.successors[u]
            if math.isclose(graph.adjacency[(u, v)] + to_anchor[v], to_anchor[u], rel_tol=0, abs_tol=1e-9)
        )
        path.append(u)
    return float(to_anchor[source]), tuple(path)


def _nc_pairs(graph: ConnectivityGraph) -> set[tuple[int, int]]:
    return {(e.src, e.dst) for e in graph.edges if not e.compliant}


def exploit_witness(
    graph: ConnectivityGraph,
    node: int,
    max_hops: int = MAX_EXPLOIT_HOPS,
    min_non_compliant: int = MIN_NON_COMPLIANT,
    _nc: set[tuple[int, int]] | None = None,
) -> ExploitWitness | None:
    """Shortest (then lexicographically smallest) qualifying path to a critical asset.

    Bounded DFS over simple directed paths; between two nodes a non-compliant edge is
    used whenever one exists.
    """
    nc = _nc_pairs(graph) if _nc is None else _nc
    crit = graph.criticality == CRITICAL_LEVEL
    succ = graph.successors
    best: ExploitWitness | None = None

    def dfs(path: list[int], n_nc: int) -> None:
        nonlocal best
        u = path[-1]
        hops = len(path) - 1
        if hops and crit[u] and n_nc >= min_non_compliant:
            cand = ExploitWitness(tuple(path), hops, n_nc)
            if best is None or (cand.hops, cand.path) < (best.hops, best.path):
                best = cand
        # out of hops, or too few left to make up the non-compliant deficit
        if hops == max_hops or n_nc + (max_hops - hops) < min_non_compliant:
            return
        for v in succ[u]:
            if v in path:
                continue
            path.append(v)
            dfs(path, n_nc + ((u, v) in nc))
            path.pop()

    dfs([node], 0)
    return best


def fs1_label(graph: ConnectivityGraph, node: int) -> tuple[bool, ExploitWitness | None]:
    w = exploit_witness(graph, node)
    return w is not None, w


def fs1_labels(graph: ConnectivityGraph) -> np.ndarray:
    nc = _nc_pairs(graph)
    return np.array([exploit_witness(graph, v, _nc=nc) is not None for v in range(graph.n_nodes)], dtype=bool)


def validate_witness(graph: ConnectivityGraph, w: ExploitWitness) -> bool:
    """Replay a witness: consecutive pairs are edges and the counts reproduce."""
    nc = _nc_pairs(graph)
    if w.hops != len(w.path) - 1 or len(set(w.path)) != len(w.path):
        return False
    if graph.assets[w.path[-1]].criticality != CRITICAL_LEVEL:
        return False
    count = 0
    for u, v in zip(w.path, w.path[1:]):
        if (u, v) not in graph.adjacency:
            return False
        count += (u, v) in nc
    return count == w.non_compliant_count


Rulebook = Callable[[ConnectivityGraph, int, np.ndarray], bool]


def default_rulebook(graph: ConnectivityGraph, edge_id: int, fs1: np.ndarray) -> bool:
    """Critical iff non-compliant and the edge leads somewhere dangerous.

    Dangerous means the destination is exploitable, is level 6 or above, or either
    endpoint sits next to a critical asset.
    """
    e = graph.edge(edge_id)
    if e.compliant:
        return False
    touch = cached_touches_critical(graph)
    return bool(fs1[e.dst] or graph.assets[e.dst].criticality >= 6 or touch[e.src] or touch[e.dst])


def triage_rulebook(
    graph: ConnectivityGraph,
    edge_id: int,
    fs1: np.ndarray | None = None,
    rulebook: Rulebook = default_rulebook,
) -> bool:
    fs1 = fs1_labels(graph) if fs1 is None else fs1
    return rulebook(graph, edge_id, fs1)


def triage_labels(
    graph: ConnectivityGraph,
    fs1: np.ndarray | None = None,
    rulebook: Rulebook = default_rulebook,
) -> np.ndarray:
    fs1 = fs1_labels(graph) if fs1 is None else fs1
    return np.array([rulebook(graph, i, fs1) for i in range(graph.n_edges)], dtype=bool)


def label_maps(fs1: Iterable[bool], triage: Iterable[bool]) -> tuple[dict[int, str], dict[int, str]]:
    """Label arrays as the string-valued maps stored in dataset files."""
    node = {i: ("exploitable" if b else "not_exploitable") for i, b in enumerate(fs1)}
    edge = {i: ("critical" if b else "safe") for i, b in enumerate(triage)}
    return node, edge
