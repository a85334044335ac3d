from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prozd.gat_wsp import AttentionContext, AttentionLayer, AttentionLayerConfig
from prozd.nn import (
    MLP,
    Adam,
    AdamConfig,
    CheckpointError,
    LayerShapeError,
    Linear,
    NonFiniteGradientError,
    Parameters,
    cross_entropy,
    cross_entropy_loss,
    load_checkpoint,
    loss,
    mse,
    mse_loss,
    save_checkpoint,
)
from prozd.nn import tensor as T
from prozd.nn.gradcheck import check_inputs, check_parameters
from prozd.nn.tensor import Tensor
from helpers import make_graph

TOL = 1e-4
# 200 Adam steps (lr 0.1) on w**2 from w = 1, from a scalar re-derivation of the update rule
ADAM_W_AFTER_200 = -7.2179864777083035e-06


def test_forward_examples():
    p = Parameters(0)
    lin = Linear("id", p.add("id.w", np.eye(3)), p.zeros("id.b", (1, 3)))
    x = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(lin(Tensor(x)).data, x)
    assert np.allclose(T.softmax(Tensor(np.zeros((1, 2)))).data, [[0.5, 0.5]])
    assert T.leaky_relu(Tensor(np.array([-1.0]))).data[0] == pytest.approx(-0.2)


def test_shape_mismatch_names_layer():
    p = Parameters(0)
    lin = Linear.create(p, "dense.3", 4, 2)
    with pytest.raises(LayerShapeError, match="dense.3"):
        lin(Tensor(np.zeros((2, 5))))


def test_loss_examples():
    x = np.array([[0.2, 0.8]])
    assert mse(x, x)[0] == 0
    assert mse([3.0], [1.0])[0] == 4
    assert cross_entropy(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))[0] == 0
    assert cross_entropy(np.array([[1.0, 0.0]]), np.array([1]))[0] == pytest.approx(-np.log(1e-12))
    assert loss("mse", [1.0], [0.0])[0] == 1
    with pytest.raises(ValueError):
        loss("hinge", [1.0], [0.0])
    with pytest.raises(ValueError):
        mse([], [])
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((0, 2)), np.zeros(0))


def _toy_params(seed=0):
    p = Parameters(seed)
    return p, MLP(p, "toy", (4, 5, 3, 2))


def test_gradcheck_linear_leaky_softmax_ce():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, 4))
    y = rng.integers(0, 2, 7)
    p, mlp = _toy_params()
    errs = check_parameters(lambda: cross_entropy_loss(T.softmax(mlp(Tensor(x))), y), p)
    assert max(errs.values()) < TOL
    assert check_inputs(lambda xt: cross_entropy_loss(T.softmax(mlp(xt)), y), x) < TOL


def test_gradcheck_each_primitive():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(5,))
    checks = {
        "leaky_relu": lambda t: T.sum_all(T.mul(T.leaky_relu(t), Tensor(x))),
        "softmax": lambda t: T.sum_all(T.mul(T.softmax(t), Tensor(x))),
        "exp_log": lambda t: T.sum_all(T.log(T.exp(T.mul(t, 0.3)) + 1.0)),
        "abs": lambda t: T.sum_all(T.abs_(t + 10.0)),
        "mse": lambda t: mse_loss(T.sum_axis(t, 1), w),
        "segment_softmax": lambda t: T.sum_all(
            T.mul(T.segment_softmax(t, np.array([0, 0, 1, 1, 1]), 2), Tensor(x))
        ),
        "pairwise_min": lambda t: T.sum_all(T.min_axis1(T.pairwise_l1(t, Tensor(x[:2] + 5.0)))),
    }
    for name, fn in checks.items():
        assert check_inputs(fn, x) < TOL, name


def test_gradcheck_mse_head():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 3))
    target = rng.uniform(0, 4, 6)
    p = Parameters(4)
    mlp = MLP(p, "head", (3, 4, 1))
    errs = check_parameters(lambda: mse_loss(T.sum_axis(mlp(Tensor(x)), 1), target), p)
    assert max(errs.values()) < TOL


def test_gradcheck_attention_layer():
    g = make_graph([0, 7, 2, 4, 1], [(0, 1, False), (0, 2, True), (0, 1, True), (2, 1, False), (3, 0, False)])
    rng = np.random.default_rng(5)
    x = rng.normal(size=(5, 3))
    p = Parameters(6)
    layer = AttentionLayer(p, "att", AttentionLayerConfig(3, 2, heads=3))
    for hood in ("out", "in", "both"):
        ctx = AttentionContext.build(g, hood)
        probe = Tensor(rng.normal(size=(5, 2)))
        errs = check_parameters(lambda: T.sum_all(T.mul(layer(Tensor(x), ctx), probe)), p)
        assert max(errs.values()) < TOL, hood
        assert check_inputs(lambda xt: T.sum_all(T.mul(layer(xt, ctx), probe)), x) < TOL


def test_zero_loss_gives_zero_gradient_and_linearity():
    x = np.array([[1.0, 2.0]])
    t = Tensor(x.copy(), requires_grad=True)
    mse_loss(t, x).backward()
    assert np.all(t.grad == 0)
    p, mlp = _toy_params()
    xs = np.random.default_rng(0).normal(size=(3, 4))
    y = np.array([0, 1, 1])
    cross_entropy_loss(T.softmax(mlp(Tensor(xs))), y).backward()
    g1 = p.grads()
    p.zero_grad()
    T.mul(cross_entropy_loss(T.softmax(mlp(Tensor(xs))), y), 3.0).backward()
    g3 = p.grads()
    for k in g1:
        assert np.allclose(g3[k], 3 * g1[k], rtol=1e-12, atol=0)


def test_adam_examples():
    p = Parameters(0)
    w = p.add("w", np.array([1.0]))
    opt = Adam(p, AdamConfig(lr=0.1))
    opt.step({"w": np.zeros(1)})
    assert w.data[0] == 1.0
    opt = Adam(p, AdamConfig(lr=0.1))
    for i in range(200):
        p.zero_grad()
        T.sum_all(T.mul(w, w)).backward()
        opt.step()
        if i == 0:
            assert w.data[0] < 1.0
    assert abs(w.data[0]) < 0.05
    assert w.data[0] == pytest.approx(ADAM_W_AFTER_200, rel=1e-9)


def test_adam_rejects_nan():
    p = Parameters(0)
    p.add("w", np.ones(2))
    with pytest.raises(NonFiniteGradientError):
        Adam(p).step({"w": np.array([1.0, np.nan])})


def test_training_is_bit_reproducible():
    def run():
        p, mlp = _toy_params(9)
        opt = Adam(p)
        x = np.random.default_rng(0).normal(size=(10, 4))
        y = (x[:, 0] > 0).astype(int)
        for _ in range(20):
            p.zero_grad()
            cross_entropy_loss(T.softmax(mlp(Tensor(x))), y).backward()
            opt.step()
        return p.state()

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_checkpoint_round_trip(tmp_path):
    p, _ = _toy_params(3)
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, {"hidden": [5, 3]})
    arrays, seed, cfg = load_checkpoint(path)
    assert seed == 3 and cfg == {"hidden": [5, 3]}
    assert all(np.array_equal(arrays[k], p.state()[k]) for k in arrays)
    q, _ = _toy_params(4)
    q.load_state(arrays)
    assert all(np.array_equal(q.state()[k], p.state()[k]) for k in arrays)
    doc = json.loads(path.read_text())
    name = next(iter(doc["params"]))
    doc["params"][name]["shape"] = [1, 1]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    bad = {k: v for k, v in arrays.items() if k != name}
    with pytest.raises(CheckpointError):
        q.load_state(bad)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    s = T.softmax(Tensor(x)).data
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9, rtol=0)
    assert (s >= 0).all()
