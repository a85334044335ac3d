"""Small graph builders and hypothesis strategies shared by the tests."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from prozd.graph_model import Asset, Connection, Service, build_graph
from prozd.ingest.policy import ZtPolicy


def make_graph(criticality, edges, prefix=32):
    """``edges`` holds (src, dst, compliant) or (src, dst, compliant, port_lo, port_hi)."""
    assets = [
        Asset(i, f"10.0.{i // 200}.{i % 200 + 1}", f"10.0.{i // 200}.{i % 200 + 1}/32" if prefix == 32 else
              f"10.0.{i // 200}.0/{prefix}", f"tag{i}", c)
        for i, c in enumerate(criticality)
    ]
    conns = []
    for e in edges:
        s, d, comp = e[:3]
        lo, hi = (e[3], e[4]) if len(e) == 5 else (443, 443)
        conns.append(Connection(s, d, Service("TCP", lo, hi), comp))
    return build_graph(assets, conns)


@st.composite
def random_graphs(draw, max_nodes=25, max_edges=None):
    n = draw(st.integers(2, max_nodes))
    crit = draw(st.lists(st.sampled_from([0, 2, 4, 6, 7, 7]), min_size=n, max_size=n))
    max_edges = max_edges or 3 * n
    edges = draw(
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.booleans()), max_size=max_edges)
    )
    return make_graph(crit, edges)


PORT_CHOICES = ((22, 22), (80, 80), (443, 443), (5432, 5432), (8000, 8010), (8005, 8005))


def mitigation_fixture(seed: int):
    """Random hosts in three /24 segments, connections, overlapping policies and verdicts."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 14))
    assets = []
    for i in range(n):
        seg = int(rng.integers(0, 3))
        assets.append(Asset(i, f"10.0.{seg}.{i + 1}", f"10.0.{seg}.0/24", f"seg{seg}", int(rng.integers(0, 8))))
    conns = []
    for _ in range(int(rng.integers(3, 30))):
        s, d = (int(v) for v in rng.integers(0, n, 2))
        lo, hi = PORT_CHOICES[int(rng.integers(0, len(PORT_CHOICES)))]
        proto = "UDP" if rng.random() < 0.15 else "TCP"
        conns.append(Connection(s, d, Service(proto, lo, hi), bool(rng.random() < 0.4)))
    g = build_graph(assets, conns)
    policies = []
    for _ in range(int(rng.integers(1, 8))):
        kind = rng.random()
        a, b = (int(v) for v in rng.integers(0, n, 2))
        src = assets[a].segment_range if kind < 0.6 else f"{assets[a].ip}/32"
        dst = assets[b].segment_range if kind < 0.8 else f"{assets[b].ip}/32"
        if rng.random() < 0.5:
            lo, hi = 1, 65535
        else:
            lo, hi = PORT_CHOICES[int(rng.integers(0, len(PORT_CHOICES)))]
        policies.append(ZtPolicy(src, dst, "UDP" if rng.random() < 0.15 else "TCP", lo, hi))
    if rng.random() < 0.5:
        policies.append(ZtPolicy("10.0.0.0/16", "10.0.0.0/16", "TCP", 0, 65535))
    critical = rng.random(g.n_edges) < 0.4
    return g, policies, critical
