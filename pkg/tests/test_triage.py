from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_graph
from prozd.graph_model import Asset, Connection, Service, build_graph
from prozd.ingest.synthetic import generate_synthetic
from prozd.oracle import fs1_labels, triage_labels
from prozd.pipeline import PipelineConfig, infer, train_pipeline
from prozd.triage import (
    TRIAGE_FEATURES,
    TriageConfig,
    TriageError,
    classify_edges,
    dump_verdicts,
    load_verdicts,
    train_triage,
    triage_matrix,
    triage_vector,
)

FIXTURE = dict(n_nodes=150, n_edges=800, n_critical=25, n_compliant=320, seed=11)


@pytest.fixture(scope="module")
def fixture_data():
    d = generate_synthetic(FIXTURE)
    x = triage_matrix(d.graph, d.fs1_labels)
    res = train_triage(x, d.triage_labels, np.ones(d.graph.n_edges, bool), TriageConfig(seed=0))
    return d, x, res


def test_normalization_examples():
    g = make_graph([2, 7], [(0, 1, False, 80, 80)])
    v = triage_vector(g, 0, [False, False])
    assert v.dst_criticality == 1.0 and v.open_ports == 0.0


def test_pinned_edge_normalization_by_hand():
    assets = [
        Asset(0, "10.0.1.5", "10.0.1.0/24", "Web Server", 3),
        Asset(1, "10.0.2.9", "10.0.2.8/29", "Database", 5),
    ]
    conns = [Connection(0, 1, Service("TCP", 5432, 5432), False), Connection(0, 1, Service("TCP", 8000, 8099), False)]
    g = build_graph(assets, conns)
    v = triage_vector(g, 0, [False, True])
    expected = [8 / 32, 3 / 32, math.log(101) / math.log(65536), 3 / 7, 5 / 7, 1.0, 0.0, 0.0]
    assert np.allclose(v.as_array(), expected, rtol=0, atol=1e-15)


def test_missing_fs1_and_single_class_rejected():
    g = make_graph([2, 7], [(0, 1, False)])
    with pytest.raises(TriageError):
        triage_matrix(g, None)
    with pytest.raises(TriageError):
        train_triage(np.zeros((4, 8)), np.zeros(4, bool), np.ones(4, bool))


def test_empty_graph_gives_no_verdicts(fixture_data):
    _, _, res = fixture_data
    assert classify_edges(make_graph([0, 7], []), res.model, [False, False]) == []


def test_oracle_fs1_fits_rulebook(fixture_data):
    d, x, res = fixture_data
    p = res.model.probabilities(x)
    assert ((p >= 0.5) == d.triage_labels).mean() >= 0.99
    assert res.losses[-1] < res.losses[0]
    assert len(res.losses) <= 40


def test_compliant_edges_are_safe(fixture_data):
    d, x, res = fixture_data
    p = res.model.probabilities(x)
    assert p[d.graph.edge_compliant].max() < 0.05


def test_verdicts_deterministic_and_round_trip(fixture_data):
    d, _, res = fixture_data
    a = classify_edges(d.graph, res.model, d.fs1_labels)
    b = classify_edges(d.graph, res.model, d.fs1_labels)
    assert a == b
    assert len(a) == d.graph.n_edges
    assert all(0 <= v.probability <= 1 and set(v.features) == set(TRIAGE_FEATURES) for v in a)
    text = dump_verdicts(a)
    assert load_verdicts(text) == a
    assert text.splitlines()[0].startswith('{"edge_id": 0, "verdict": ')
    with pytest.raises(TriageError):
        load_verdicts('{"edge_id": 1, "verdict": "maybe", "probability": 0.3}')


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.0, 0.2))
def test_higher_threshold_never_adds_critical_verdicts(fixture_data, t, gap):
    d, _, res = fixture_data
    lo = sum(v.critical for v in classify_edges(d.graph, res.model, d.fs1_labels, t))
    hi = sum(v.critical for v in classify_edges(d.graph, res.model, d.fs1_labels, min(t + gap, 0.99)))
    assert hi <= lo


def test_oracle_fs1_at_least_as_accurate_as_model_fs1():
    d = generate_synthetic(dict(n_nodes=120, n_edges=600, n_critical=20, n_compliant=240, seed=12))
    n, m = d.graph.n_nodes, d.graph.n_edges
    rng = np.random.default_rng(0)
    node_mask = rng.permutation(n) < int(0.4 * n)
    edge_mask = rng.permutation(m) < int(0.4 * m)
    accs = {}
    for source in ("model", "oracle"):
        cfg = PipelineConfig.from_dict({"fs1_source": source, "spgnn": {"epochs": 150}}, seed=1)
        bundle = train_pipeline(d, node_mask, edge_mask, cfg)
        p = infer(bundle, d, fs1_source=source).triage_probs
        accs[source] = ((p >= 0.5) == d.triage_labels)[~edge_mask].mean()
    assert accs["oracle"] >= accs["model"]
