"""Directly encoded edge/node features, FS1 edge attribution and radius-R subgraphs."""

from __future__ import annotations

import weakref
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from prozd.graph_model import CRITICAL_LEVEL, ConnectivityGraph

DEFAULT_RADIUS = 3


@dataclass(frozen=True)
class EdgeFeatures:
    fd1_src_ip_range: float
    fd2_dst_ip_range: float
    fd3_open_ports: int
    fd4_src_criticality: int
    fd5_dst_criticality: int
    fd6_dst_app_criticality: int
    fd7_touches_critical: bool
    fd8_compliant: bool


@dataclass(frozen=True)
class NodeFeatures:
    criticality: int
    touches_critical: bool
    incident_compliance_ratio: float
    sp_len: float = float("inf")


@dataclass(frozen=True)
class Subgraph:
    center: int
    radius: int
    nodes: tuple[int, ...]
    edges: tuple[int, ...]


def ip_range_width(prefix_length: int) -> float:
    return (32 - prefix_length) / 32


def touches_critical(graph: ConnectivityGraph) -> np.ndarray:
    """Per node: is it critical, or linked (either direction) to a critical asset."""
    crit = graph.criticality == CRITICAL_LEVEL
    out = crit.copy()
    for s, d in graph.adjacency:
        if crit[d]:
            out[s] = True
        if crit[s]:
            out[d] = True
    return out


def edge_features(graph: ConnectivityGraph, edge_id: int) -> EdgeFeatures:
    e = graph.edge(edge_id)
    touch = cached_touches_critical(graph)
    src, dst = graph.assets[e.src], graph.assets[e.dst]
    return EdgeFeatures(
        fd1_src_ip_range=ip_range_width(src.prefix_length),
        fd2_dst_ip_range=ip_range_width(dst.prefix_length),
        fd3_open_ports=graph.open_ports(edge_id),
        fd4_src_criticality=src.criticality,
        fd5_dst_criticality=dst.criticality,
        fd6_dst_app_criticality=int(dst.app_criticality),
        fd7_touches_critical=bool(touch[e.src] or touch[e.dst]),
        fd8_compliant=e.compliant,
    )


def edge_feature_matrix(graph: ConnectivityGraph) -> np.ndarray:
    """All edges' FD1..FD8 as an (n_edges, 8) float array, columns in FD order."""
    touch = cached_touches_critical(graph)
    widths = np.array([ip_range_width(a.prefix_length) for a in graph.assets])
    app = np.array([int(a.app_criticality) for a in graph.assets], dtype=np.float64)
    crit = graph.criticality.astype(np.float64)
    src, dst = graph.edge_src, graph.edge_dst
    ports = np.array([graph.open_ports(i) for i in range(graph.n_edges)], dtype=np.float64)
    cols = [
        widths[src],
        widths[dst],
        ports,
        crit[src],
        crit[dst],
        app[dst],
        (touch[src] | touch[dst]).astype(np.float64),
        graph.edge_compliant.astype(np.float64),
    ]
    if graph.n_edges == 0:
        return np.zeros((0, 8))
    return np.stack(cols, axis=1)


def incident_compliance_ratio(graph: ConnectivityGraph) -> np.ndarray:
    total = np.zeros(graph.n_nodes)
    good = np.zeros(graph.n_nodes)
    if graph.n_edges:
        c = graph.edge_compliant.astype(np.float64)
        np.add.at(total, graph.edge_src, 1.0)
        np.add.at(total, graph.edge_dst, 1.0)
        np.add.at(good, graph.edge_src, c)
        np.add.at(good, graph.edge_dst, c)
    return np.divide(good, total, out=np.zeros_like(good), where=total > 0)


def node_features(graph: ConnectivityGraph, sp_len: Sequence[float] | None = None) -> list[NodeFeatures]:
    touch = cached_touches_critical(graph)
    ratio = incident_compliance_ratio(graph)
    sp = [float("inf")] * graph.n_nodes if sp_len is None else sp_len
    return [
        NodeFeatures(int(a.criticality), bool(touch[i]), float(ratio[i]), float(sp[i]))
        for i, a in enumerate(graph.assets)
    ]


_TOUCH_CACHE: "weakref.WeakKeyDictionary[ConnectivityGraph, np.ndarray]" = weakref.WeakKeyDictionary()


def cached_touches_critical(graph: ConnectivityGraph) -> np.ndarray:
    # graphs are immutable after build, so per-instance caching is safe
    cached = _TOUCH_CACHE.get(graph)
    if cached is None:
        cached = _TOUCH_CACHE[graph] = touches_critical(graph)
    return cached


def bfs_ball(graph: ConnectivityGraph, center: int, radius: int) -> list[int]:
    seen = {center: 0}
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if seen[u] == radius:
            continue
        for v in graph.undirected_neighbors[u]:
            if v not in seen:
                seen[v] = seen[u] + 1
                queue.append(v)
    return sorted(seen)


def induced_edges(graph: ConnectivityGraph, nodes: Sequence[int]) -> list[int]:
    member = np.zeros(graph.n_nodes, dtype=bool)
    member[list(nodes)] = True
    if graph.n_edges == 0:
        return []
    keep = member[graph.edge_src] & member[graph.edge_dst]
    return np.flatnonzero(keep).tolist()


def subgraph_around(graph: ConnectivityGraph, center: int, radius: int = DEFAULT_RADIUS) -> Subgraph:
    nodes = bfs_ball(graph, center, radius)
    return Subgraph(center, radius, tuple(nodes), tuple(induced_edges(graph, nodes)))


def extract_subgraphs(graph: ConnectivityGraph, radius: int = DEFAULT_RADIUS) -> list[Subgraph]:
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return [subgraph_around(graph, v, radius) for v in range(graph.n_nodes)]


def attach_fs1(graph: ConnectivityGraph, labels: Mapping[int, bool] | Sequence[bool]) -> np.ndarray:
    """Project node FS1 labels onto edges; on disagreement the destination label wins.

    Agreeing endpoints give the edge their shared label, and a disagreement follows
    the direction of travel, so in both cases the edge carries its destination's label.
    """
    node_labels = np.zeros(graph.n_nodes, dtype=bool)
    for v in range(graph.n_nodes):
        try:
            node_labels[v] = bool(labels[v])
        except (KeyError, IndexError):
            raise KeyError(f"missing FS1 label for node {v}") from None
    if graph.n_edges == 0:
        return np.zeros(0, dtype=bool)
    return node_labels[graph.edge_dst]
