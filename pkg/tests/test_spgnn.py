from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_graph, random_graphs
from prozd.oracle import min_hop_distance
from prozd.spgnn import (
    Spgnn,
    SpgnnConfig,
    SpgnnError,
    SpgnnInputs,
    anchor_distance_vector,
    edge_values,
    proximity,
    round_half_up,
    train_spgnn,
    truncated_distance,
    within_one,
)


def test_truncation_and_proximity():
    assert truncated_distance(2, 4) == 2
    assert math.isinf(truncated_distance(4, 4))
    assert truncated_distance(0, 4) == 0
    assert (proximity(0), proximity(1), proximity(math.inf)) == (1.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        truncated_distance(1, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10), st.integers(1, 8))
def test_proximity_decreases_with_distance(d, q):
    a, b = proximity(d, q), proximity(d + 1, q)
    assert a > b or (a == 0 and b == 0)
    assert 0 <= b <= a <= 1


def test_anchor_distance_vector():
    assert anchor_distance_vector([1.0, 2.0], [[0.0, 0.0]]).tolist() == [3.0]
    u, v = np.array([0.3, -1.0]), np.array([[2.0, 0.5]])
    assert anchor_distance_vector(u, v)[0] == anchor_distance_vector(v[0], u[None])[0]
    assert anchor_distance_vector(u, u[None])[0] == 0
    with pytest.raises(ValueError):
        anchor_distance_vector([1.0], [[1.0, 2.0]])


def test_rounding_half_up_and_clamp():
    assert round_half_up(np.array([0.49, 0.5, 1.5, 2.4, 3.6, 9.0, -0.7])).tolist() == [0, 1, 2, 2, 4, 4, 0]


def test_empty_anchor_set_rejected():
    g = make_graph([0, 1, 2], [(0, 1, False)])
    with pytest.raises(SpgnnError):
        SpgnnInputs.build(g)
    with pytest.raises(SpgnnError):
        train_spgnn(g, np.ones(3, bool))


def test_isolated_anchor_depends_only_on_its_input():
    g = make_graph([7, 0, 0, 7], [(1, 2, False), (2, 3, True)])
    model = Spgnn(SpgnnConfig(seed=1))
    emb = model.embed(SpgnnInputs.build(g)).data
    solo = make_graph([7], [])
    assert np.allclose(model.embed(SpgnnInputs.build(solo)).data[0], emb[0], rtol=0, atol=1e-12)


def test_isomorphic_nodes_share_embeddings():
    # 1 and 2 both link into anchor 0 and are linked from 3
    g = make_graph([7, 0, 0, 0], [(1, 0, False), (2, 0, False), (3, 1, True), (3, 2, True)])
    emb = Spgnn(SpgnnConfig(seed=2)).embed(SpgnnInputs.build(g)).data
    assert np.array_equal(emb[1], emb[2])


def test_every_node_an_anchor_predicts_zero():
    g = make_graph([7] * 5, [(0, 1, False), (1, 2, True), (3, 4, False)])
    assert Spgnn(SpgnnConfig(seed=0)).predict(g).tolist() == [0] * 5


def test_path_predictions_follow_bfs_order():
    g = make_graph([0, 0, 0, 0, 7], [(i, i + 1, False) for i in range(4)])
    res = train_spgnn(g, np.ones(5, bool), SpgnnConfig(epochs=300, seed=0))
    assert np.all(np.diff(res.raw) < 0)
    assert res.predicted.tolist() == [4, 3, 2, 1, 0]


def _tree(n=20, seed=0):
    rng = np.random.default_rng(seed)
    crit = [7] + [int(rng.integers(0, 7)) for _ in range(n - 1)]
    edges = [(i, int(rng.integers(0, i)), bool(rng.integers(0, 2))) for i in range(1, n)]
    return make_graph(crit, edges)


def test_tree_generalizes_from_40_percent():
    g = _tree()
    mask = np.zeros(g.n_nodes, bool)
    mask[np.random.default_rng(1).permutation(g.n_nodes)[:8]] = True
    res = train_spgnn(g, mask, SpgnnConfig(epochs=300, seed=0))
    ok = within_one(res.predicted, min_hop_distance(g))
    assert ok[~mask].mean() >= 0.8


def test_training_is_deterministic_and_rejects_unreachable():
    g = _tree(12, 3)
    a = train_spgnn(g, np.ones(12, bool), SpgnnConfig(epochs=20, seed=4))
    b = train_spgnn(g, np.ones(12, bool), SpgnnConfig(epochs=20, seed=4))
    assert a.losses == b.losses and np.array_equal(a.raw, b.raw)
    assert a.losses[-1] < a.losses[0]
    far = make_graph([7, 0], [])
    with pytest.raises(SpgnnError):
        train_spgnn(far, np.array([False, True]), SpgnnConfig(epochs=2), true_distance=np.array([0, np.inf]))


def test_edge_values_read_destination():
    g = make_graph([0, 0, 7], [(0, 1, False), (1, 2, True)])
    assert edge_values(g, np.array([3, 1, 0])).tolist() == [1, 0]


@settings(max_examples=25, deadline=None)
@given(random_graphs(max_nodes=12), st.randoms(use_true_random=False))
def test_permutation_equivariance(g, rnd):
    if not (g.criticality == 7).any():
        return
    n = g.n_nodes
    perm = list(range(n))
    rnd.shuffle(perm)  # old id -> new id
    crit = [0] * n
    for old, new in enumerate(perm):
        crit[new] = int(g.criticality[old])
    moved = make_graph(crit, [(perm[e.src], perm[e.dst], e.compliant) for e in g.edges])
    model = Spgnn(SpgnnConfig(seed=5))
    base = model.predict_raw(g)
    after = model.predict_raw(moved)
    assert np.allclose(after[perm], base, rtol=0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(random_graphs(max_nodes=15))
def test_anchors_zero_and_two_min_forms_agree(g):
    if not (g.criticality == 7).any():
        return
    model = Spgnn(SpgnnConfig(seed=3))
    inputs = SpgnnInputs.build(g)
    emb = model.embed(inputs).data
    fused = model.min_ad(model.embed(inputs), inputs).data
    per_node = np.array([anchor_distance_vector(emb[v], emb[inputs.anchors]).min() for v in range(g.n_nodes)])
    assert np.allclose(fused, per_node, rtol=0, atol=1e-12)
    assert (model.predict(g)[inputs.anchors] == 0).all()
