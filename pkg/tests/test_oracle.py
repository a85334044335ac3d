from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_graph, random_graphs
from oracles import brute_fs1, enumerated_weighted_distance, floyd_warshall
from prozd.graph_model import EdgeWeights, build_graph
from prozd.oracle import (
    exploit_witness,
    fs1_label,
    fs1_labels,
    hop_distances,
    min_hop_distance,
    triage_labels,
    triage_rulebook,
    validate_witness,
    weighted_distances,
    weighted_shortest_path,
)


def test_hop_examples():
    g = make_graph([0, 0, 7], [(0, 1, True), (1, 2, True)])
    d = hop_distances(g, [2])
    assert d[:, 0].tolist() == [2, 1, 0]
    assert min_hop_distance(g).tolist() == [2, 1, 0]


def test_weighted_examples():
    g = make_graph([0, 7], [(0, 1, True)])
    assert weighted_distances(g, [1])[0, 0] == 2
    # two non-compliant hops (1 + 1) tie with one compliant hop (2)
    g = make_graph([0, 0, 7, 0], [(0, 1, False), (1, 2, False), (0, 2, True)])
    w = weighted_distances(g, [2])
    assert w[0, 0] == 2 and math.isinf(w[3, 0])
    dist, path = weighted_shortest_path(g, 0, 2)
    assert dist == 2 and path == (0, 1, 2)  # lexicographically smallest of (0,1,2) and (0,2)


def test_non_positive_weight_rejected():
    g = make_graph([0, 7], [(0, 1, False)])
    bad = build_graph(g.assets, g.edges, EdgeWeights(1.0, 2.0))
    object.__setattr__(bad, "adjacency", {(0, 1): 0.0})
    with pytest.raises(ValueError):
        weighted_distances(bad, [1])


def test_fs1_examples():
    two_nc = make_graph([0, 0, 7], [(0, 1, False), (1, 2, False)])
    ok, w = fs1_label(two_nc, 0)
    assert ok and w.path == (0, 1, 2) and w.non_compliant_count == 2
    three_c = make_graph([0, 0, 0, 7], [(0, 1, True), (1, 2, True), (2, 3, True)])
    assert not fs1_label(three_c, 0)[0]
    four_nc = make_graph([0] * 4 + [7], [(i, i + 1, False) for i in range(4)])
    assert not fs1_label(four_nc, 0)[0]
    assert fs1_label(four_nc, 1)[0]


def test_rulebook_examples():
    g = make_graph([0, 7, 0, 0, 1, 1, 2], [(0, 1, True), (2, 1, False), (3, 4, False), (4, 5, True), (5, 6, False)])
    fs1 = fs1_labels(g)
    assert not triage_rulebook(g, 0, fs1)  # compliant into a critical asset
    assert triage_rulebook(g, 1, fs1)  # non-compliant into a critical asset
    assert not triage_rulebook(g, 2, fs1)  # isolated low-criticality component
    assert not triage_rulebook(g, 4, fs1)
    assert triage_labels(g).tolist() == [False, True, False, False, False]


@settings(max_examples=80, deadline=None)
@given(random_graphs(max_nodes=12))
def test_distances_match_independent_oracles(g):
    anchors = list(range(g.n_nodes))
    fw_hops = floyd_warshall(g, weighted=False)
    assert np.array_equal(hop_distances(g, anchors), fw_hops)
    fw_w = floyd_warshall(g, weighted=True)
    wd = weighted_distances(g, anchors)
    assert np.array_equal(wd, fw_w)

def _single_edge_per_pair(g, w_nc, w_c):
    """Keep one edge per ordered pair so every pair weight is exactly one edge weight."""
    seen, kept = set(), []
    for e in g.edges:
        if (e.src, e.dst) not in seen:
            seen.add((e.src, e.dst))
            kept.append(e)
    return build_graph(g.assets, kept, EdgeWeights(w_nc, w_c))


@settings(max_examples=80, deadline=None)
@given(random_graphs(max_nodes=12))
def test_unit_weights_reduce_to_hop_count(g):
    anchors = list(range(g.n_nodes))
    unit = _single_edge_per_pair(g, 1.0, 1.0)
    assert np.array_equal(weighted_distances(unit, anchors), hop_distances(unit, anchors))


@settings(max_examples=80, deadline=None)
@given(random_graphs(max_nodes=10, max_edges=18))
def test_weighted_matches_path_enumeration(g):
    anchors = [v for v in range(g.n_nodes) if g.assets[v].criticality == 7] or [0]
    assert np.array_equal(weighted_distances(g, anchors), enumerated_weighted_distance(g, anchors))


@settings(max_examples=120, deadline=None)
@given(random_graphs(max_nodes=14))
def test_fs1_matches_brute_force_and_witnesses_validate(g):
    labels = fs1_labels(g)
    assert np.array_equal(labels, brute_fs1(g))
    for v in np.flatnonzero(labels):
        w = exploit_witness(g, int(v))
        assert validate_witness(g, w) and w.hops <= 3 and w.non_compliant_count >= 2


@settings(max_examples=80, deadline=None)
@given(random_graphs(max_nodes=12), st.data())
def test_fs1_monotone_under_added_non_compliant_edge(g, data):
    s = data.draw(st.integers(0, g.n_nodes - 1))
    d = data.draw(st.integers(0, g.n_nodes - 1))
    from prozd.graph_model import Connection, Service

    bigger = build_graph(g.assets, list(g.edges) + [Connection(s, d, Service("TCP", 9, 9), False)])
    assert (fs1_labels(bigger) >= fs1_labels(g)).all()


@settings(max_examples=60, deadline=None)
@given(random_graphs(max_nodes=12))
def test_weighted_bounded_by_compliant_weight_times_hops(g):
    anchors = [v for v in range(g.n_nodes) if g.assets[v].criticality == 7] or [0]
    # with one edge per pair no pair weighs more than the compliant weight
    single = _single_edge_per_pair(g, 1.0, 2.0)
    assert (weighted_distances(single, anchors) <= 2.0 * hop_distances(single, anchors)).all()
    # parallel edges sum, so in general the bound is the compliant plus non-compliant weight
    assert (weighted_distances(g, anchors) <= 3.0 * hop_distances(g, anchors)).all()
