"""Compliance-labeled connectivity graph shared by every stage of the pipeline."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

CRITICAL_LEVEL = 7


class GraphError(ValueError):
    """Raised when assets or connections cannot form a valid graph."""


class AppCriticality(enum.IntEnum):
    NON_CRITICAL = 0
    BUSINESS_CRITICAL = 1
    MISSION_CRITICAL = 2

    @classmethod
    def parse(cls, value: str | int | AppCriticality) -> AppCriticality:
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        return cls[value.strip().upper()]

    @property
    def label(self) -> str:
        return self.name.lower()


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"

    @classmethod
    def parse(cls, value: str | Protocol) -> Protocol:
        if isinstance(value, cls):
            return value
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise ValueError(f"unknown protocol {value!r}") from None


@dataclass(frozen=True, order=True)
class Service:
    protocol: Protocol
    port_lo: int
    port_hi: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))
        if not (0 <= self.port_lo <= 65535 and 0 <= self.port_hi <= 65535):
            raise ValueError(f"port out of range: {self.port_lo}-{self.port_hi}")
        if self.port_lo > self.port_hi:
            raise ValueError(f"inverted port range {self.port_lo}-{self.port_hi}")

    @property
    def n_ports(self) -> int:
        return self.port_hi - self.port_lo + 1

    def to_list(self) -> list:
        return [self.protocol.value, self.port_lo, self.port_hi]

    @classmethod
    def from_list(cls, data: list) -> Service:
        proto, lo, hi = data
        return cls(Protocol.parse(proto), int(lo), int(hi))


@dataclass(frozen=True)
class Asset:
    id: int
    ip: str
    segment_range: str
    tag: str
    criticality: int
    app_criticality: AppCriticality = AppCriticality.NON_CRITICAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "app_criticality", AppCriticality.parse(self.app_criticality))
        if not 0 <= self.criticality <= CRITICAL_LEVEL:
            raise GraphError(f"asset {self.id}: criticality {self.criticality} outside 0-7")
        try:
            net = ipaddress.IPv4Network(self.segment_range)
            addr = ipaddress.IPv4Address(self.ip)
        except ValueError as exc:
            raise GraphError(f"asset {self.id}: {exc}") from None
        if addr not in net:
            raise GraphError(f"asset {self.id}: ip {self.ip} not in {self.segment_range}")

    @property
    def prefix_length(self) -> int:
        return ipaddress.IPv4Network(self.segment_range).prefixlen


@dataclass(frozen=True)
class Connection:
    src: int
    dst: int
    service: Service
    compliant: bool


@dataclass(frozen=True)
class EdgeWeights:
    """Adjacency weight per compliance class; compliant links cost more to traverse."""

    non_compliant: float = 1.0
    compliant: float = 2.0

    def of(self, compliant: bool) -> float:
        return self.compliant if compliant else self.non_compliant


@dataclass(frozen=True, eq=False)
class ConnectivityGraph:
    assets: tuple[Asset, ...]
    edges: tuple[Connection, ...]
    # every service collapsed into each retained edge; edges[i].service == services[i][0]
    services: tuple[tuple[Service, ...], ...]
    adjacency: dict[tuple[int, int], float]
    weights: EdgeWeights = field(default_factory=EdgeWeights)

    @property
    def n_nodes(self) -> int:
        return len(self.assets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge(self, edge_id: int) -> Connection:
        if not 0 <= edge_id < len(self.edges):
            raise KeyError(f"unknown edge id {edge_id}")
        return self.edges[edge_id]

    @cached_property
    def criticality(self) -> np.ndarray:
        return np.array([a.criticality for a in self.assets], dtype=np.int64)

    @cached_property
    def edge_src(self) -> np.ndarray:
        return np.array([e.src for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_dst(self) -> np.ndarray:
        return np.array([e.dst for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_compliant(self) -> np.ndarray:
        return np.array([e.compliant for e in self.edges], dtype=bool)

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct ordered pairs (src, dst, weight) sorted by (src, dst)."""
        items = sorted(self.adjacency.items())
        src = np.array([k[0] for k, _ in items], dtype=np.int64)
        dst = np.array([k[1] for k, _ in items], dtype=np.int64)
        w = np.array([v for _, v in items], dtype=np.float64)
        return src, dst, w

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.assets]
        for s, d in sorted(self.adjacency):
            out[s].append(d)
        return tuple(tuple(x) for x in out)

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in self.assets]
        for s, d in sorted(self.adjacency):
            inc[d].append(s)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        """Edge ids leaving each node, in edge-id order."""
        out: list[list[int]] = [[] for _ in self.assets]
        for i, e in enumerate(self.edges):
            out[e.src].append(i)
        return tuple(tuple(x) for x in out)

    @cached_property
    def undirected_neighbors(self) -> tuple[tuple[int, ...], ...]:
        nb: list[set[int]] = [set() for _ in self.assets]
        for s, d in self.adjacency:
            nb[s].add(d)
            nb[d].add(s)
        return tuple(tuple(sorted(x)) for x in nb)

    def open_ports(self, edge_id: int) -> int:
        """Distinct ports reachable over all services collapsed into this edge."""
        by_proto: dict[Protocol, list[tuple[int, int]]] = {}
        for svc in self.services[edge_id]:
            by_proto.setdefault(svc.protocol, []).append((svc.port_lo, svc.port_hi))
        total = 0
        for spans in by_proto.values():
            spans.sort()
            cur_lo, cur_hi = spans[0]
            for lo, hi in spans[1:]:
                if lo > cur_hi + 1:
                    total += cur_hi - cur_lo + 1
                    cur_lo, cur_hi = lo, hi
                else:
                    cur_hi = max(cur_hi, hi)
            total += cur_hi - cur_lo + 1
        return total

    def connections(self) -> list[Connection]:
        """Expand retained edges back into one connection per collapsed service."""
        out = []
        for e, svcs in zip(self.edges, self.services):
            out.extend(Connection(e.src, e.dst, s, e.compliant) for s in svcs)
        return out


def build_graph(
    assets: list[Asset] | tuple[Asset, ...],
    connections: list[Connection] | tuple[Connection, ...],
    weights: EdgeWeights | None = None,
) -> ConnectivityGraph:
    """Validate, drop self-loops, collapse duplicate edges, and derive the weighted adjacency.

    Parallel connections sharing (src, dst, compliant) collapse into the first one seen;
    the services of the dropped duplicates are kept on the survivor for port counting.
    """
    weights = weights or EdgeWeights()
    if weights.non_compliant <= 0 or weights.compliant <= 0:
        raise GraphError("edge weights must be positive")
    if not assets:
        raise GraphError("asset list is empty")
    ordered = sorted(assets, key=lambda a: a.id)
    if [a.id for a in ordered] != list(range(len(ordered))):
        raise GraphError("asset ids must be the dense range 0..n-1")
    n = len(ordered)

    slot: dict[tuple[int, int, bool], int] = {}
    kept: list[Connection] = []
    services: list[list[Service]] = []
    for idx, conn in enumerate(connections):
        if not (0 <= conn.src < n and 0 <= conn.dst < n):
            raise GraphError(f"connection #{idx} ({conn.src}->{conn.dst}) references an unknown asset")
        if conn.src == conn.dst:
            continue
        key = (conn.src, conn.dst, bool(conn.compliant))
        if key in slot:
            svcs = services[slot[key]]
            if conn.service not in svcs:
                svcs.append(conn.service)
            continue
        slot[key] = len(kept)
        kept.append(Connection(conn.src, conn.dst, conn.service, bool(conn.compliant)))
        services.append([conn.service])

    adjacency: dict[tuple[int, int], float] = {}
    for conn in kept:
        pair = (conn.src, conn.dst)
        adjacency[pair] = adjacency.get(pair, 0.0) + weights.of(conn.compliant)

    return ConnectivityGraph(
        assets=tuple(ordered),
        edges=tuple(kept),
        services=tuple(tuple(s) for s in services),
        adjacency=adjacency,
        weights=weights,
    )


def critical_assets(graph: ConnectivityGraph) -> list[int]:
    return [a.id for a in graph.assets if a.criticality == CRITICAL_LEVEL]
