from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prozd.evaluation import (
    ExperimentConfig,
    compute_metrics,
    roc_auc,
    roc_points,
    run_experiment,
    split_masks,
)

SMALL = {"n_nodes": 60, "n_edges": 260, "n_critical": 10, "n_compliant": 100, "seed": 4}


def test_split_mask_examples():
    train, test = split_masks(10, 0.4, 0)
    assert train.sum() == 4 and test.sum() == 6
    assert split_masks(5, 0.5, 0)[0].sum() == 3  # 2.5 rounds half up
    assert split_masks(10, 0.01, 0)[0].sum() == 1  # never empty
    assert split_masks(10, 0.99, 0)[0].sum() == 9
    with pytest.raises(ValueError):
        split_masks(1, 0.5, 0)
    with pytest.raises(ValueError):
        split_masks(10, 1.0, 0)


@settings(max_examples=1000, deadline=None)
@given(st.integers(2, 500), st.floats(0.01, 0.99), st.integers(0, 2**31))
def test_split_masks_are_disjoint_and_covering(n, ratio, seed):
    train, test = split_masks(n, ratio, seed)
    assert not (train & test).any() and (train | test).all()
    assert 1 <= train.sum() <= n - 1
    assert np.array_equal(train, split_masks(n, ratio, seed)[0])


def test_metric_examples():
    m = compute_metrics([0.9, 0.8, 0.2, 0.1], [True, False, True, False])
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 1)
    assert m.accuracy == 0.5 and m.f1 == 0.5
    assert m.roc_auc == 0.75
    # every prediction negative: F1 undefined, reported as 0
    assert compute_metrics([0.1, 0.2], [True, False]).f1 == 0.0
    # a single class has no ROC curve
    assert roc_auc([0.3, 0.7], [True, True]) == 0.0
    with pytest.raises(ValueError):
        compute_metrics([0.5], [True, False])


def test_tied_scores_enter_the_roc_together():
    pts = roc_points([0.5, 0.5, 0.2], [True, False, False])
    assert pts == [(float("inf"), 0.0, 0.0), (0.5, 0.5, 1.0), (0.2, 1.0, 1.0)]
    assert roc_auc([0.5, 0.5], [True, False]) == 0.5


def _mann_whitney_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_auc_matches_rank_statistic():
    rng = np.random.default_rng(0)
    labels = rng.random(200) < 0.4
    scores = np.round(rng.random(200) * 0.7 + 0.3 * labels, 2)  # rounded so ties occur
    assert abs(roc_auc(scores, labels) - _mann_whitney_auc(scores, labels)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=60))
def test_auc_property(pairs):
    scores = [s / 20 for s, _ in pairs]
    labels = [y for _, y in pairs]
    if all(labels) or not any(labels):
        assert roc_auc(scores, labels) == 0.0
    else:
        assert abs(roc_auc(scores, labels) - _mann_whitney_auc(scores, labels)) < 1e-9


def test_config_validation():
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"trian": "STD1"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"mode": "inductive"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"runs": 0})


def test_small_experiment_is_deterministic_and_complete(tmp_path):
    cfg = ExperimentConfig.from_dict({"train": SMALL, "runs": 2, "seed": 1})
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.tables() == b.tables()
    written = {p.name for p in a.write(tmp_path)}
    assert {"metrics.csv", "summary.csv", "losses.csv", "roc.csv", "report.json"} <= written
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["config_hash"] == cfg.digest() and len(doc["runs"]) == 2
    assert doc["runs"][0]["seed"] == 1 and doc["runs"][1]["seed"] == 2
