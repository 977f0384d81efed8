import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latent_steer.autodiff import (
    DomainError, Graph, NonScalarOutput, OptimizerState, ShapeMismatch, forward, step,
)

from conftest import assert_grads_close, central_diff


def test_l2_normalize_examples():
    np.testing.assert_allclose(forward("l2_normalize", [3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)
    assert forward("l2_normalize", [1.0, 0.0, 0.0]).tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(DomainError):
        forward("l2_normalize", [0.0, 0.0])


def test_domain_errors():
    with pytest.raises(DomainError):
        forward("sqrt", [1.0, -1e-3])
    with pytest.raises(DomainError):
        forward("l1_normalize", [1e-13, 0.0])
    with pytest.raises(DomainError):
        forward("log", [0.0])


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        forward("add", [1.0, 2.0], [1.0])
    with pytest.raises(ShapeMismatch):
        forward("matmul", np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        forward("dot", [1.0, 2.0], [1.0, 2.0, 3.0])


def test_values_match_definitions():
    x = np.array([[1.0, -2.0], [0.5, 4.0]])
    assert forward("relu", x).tolist() == [[1.0, 0.0], [0.5, 4.0]]
    np.testing.assert_allclose(forward("sigmoid", [0.0]), [0.5])
    np.testing.assert_allclose(forward("log_sigmoid", [-50.0, 50.0]), [-50.0, -math.exp(-50)], rtol=1e-12)
    np.testing.assert_allclose(forward("concat", [x, x[:, :1]], axis=1), np.hstack([x, x[:, :1]]))
    assert forward("dot", [1.0, 2.0], [3.0, 4.0]) == 11.0
    assert forward("mean", x) == pytest.approx(0.875)
    np.testing.assert_allclose(forward("l1_normalize", [1.0, -3.0]), [0.25, -0.75])
    np.testing.assert_allclose(forward("gather", x, [1, 1, 0]), x[[1, 1, 0]])


def test_grad_dot_self():
    g = Graph()
    p = g.param("p", [1.0, 2.0])
    grads = g.backward(g.dot(p, p))
    assert grads["p"].tolist() == [2.0, 4.0]


def test_grad_sigmoid_at_zero():
    g = Graph()
    x = g.param("x", 0.0)
    assert g.backward(g.sigmoid(x))["x"] == pytest.approx(0.25)


def test_non_scalar_output():
    g = Graph()
    x = g.param("x", [1.0, 2.0])
    with pytest.raises(NonScalarOutput):
        g.backward(g.relu(x))


def test_unreachable_param_gets_zero():
    g = Graph()
    a = g.param("a", [1.0, 2.0])
    g.param("unused", np.ones((2, 2)))
    grads = g.backward(g.sum(a))
    assert grads["unused"].shape == (2, 2)
    assert not grads["unused"].any()


def _two_layer(params, x):
    g = Graph()
    p = {k: g.param(k, v) for k, v in params.items()}
    h = g.relu(g.linear(g.const(x), p["w1"], p["b1"]))
    o = g.l2_normalize(g.linear(h, p["w2"], p["b2"]))
    s = g.sigmoid(g.dot(o, g.const(np.ones_like(o.value))))
    loss = g.mean(g.log(s))
    return g, loss


@pytest.mark.parametrize("seed", range(5))
def test_two_layer_network_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9))
    params = {
        "w1": rng.standard_normal((k, k)), "b1": rng.standard_normal(k),
        "w2": rng.standard_normal((k, k)), "b2": rng.standard_normal(k),
    }
    x = rng.standard_normal((3, k))
    g, loss = _two_layer(params, x)
    analytic = g.backward(loss)
    numeric = central_diff(lambda ps: float(_two_layer(ps, x)[1].value), params)
    assert_grads_close(analytic, numeric)


def _every_op(params):
    g = Graph()
    p = {k: g.param(k, v) for k, v in params.items()}
    a = p["a"]
    rows = g.l1_normalize(g.abs(a))
    sq = g.sqrt(g.add_scalar(g.mul(a, a), 0.5))
    cat = g.concat([rows, sq], axis=1)
    mm = g.matmul(cat, g.const(np.ones((cat.shape[1], 2))))
    picked = g.gather(g.scale_rows(a, p["c"]), [0, 2, 0])
    vec = g.sum(picked, axis=0)
    terms = [
        g.sum(mm), g.dot(vec, vec), g.sum(g.log_sigmoid(g.sub(a, g.scale(a, 0.3)))),
        g.sum(g.sum(a, axis=1)),
    ]
    total = terms[0]
    for t in terms[1:]:
        total = g.add(total, t)
    return g, total


def test_every_op_matches_finite_differences(rng):
    params = {"a": rng.standard_normal((3, 4)) + 0.1, "c": rng.standard_normal(3)}
    g, out = _every_op(params)
    assert_grads_close(g.backward(out), central_diff(lambda ps: float(_every_op(ps)[1].value), params))


def test_sqrt_gradient_guard_at_zero():
    g = Graph()
    x = g.param("x", [0.0, 4.0])
    grad = g.backward(g.sum(g.sqrt(x)))["x"]
    assert np.all(np.isfinite(grad))
    assert grad[1] == pytest.approx(0.25)


def test_forward_is_deterministic(rng):
    params = {"w1": rng.standard_normal((4, 4)), "b1": rng.standard_normal(4),
              "w2": rng.standard_normal((4, 4)), "b2": rng.standard_normal(4)}
    x = rng.standard_normal((5, 4))
    a = _two_layer(params, x)[1].value
    b = _two_layer(params, x)[1].value
    assert a.tobytes() == b.tobytes()


def test_chain_rule_locality(rng):
    """Gradients through a graph equal gradients assembled from two sub-graphs."""
    w = rng.standard_normal((3, 3))
    x = rng.standard_normal((2, 3))

    g = Graph()
    pw = g.param("w", w)
    h = g.l2_normalize(g.matmul(g.const(x), pw))
    fused = g.backward(g.sum(g.log_sigmoid(h)))["w"]

    g2 = Graph()
    hh = g2.param("h", g2.l2_normalize(g2.matmul(g2.const(x), g2.const(w))).value)
    upstream = g2.backward(g2.sum(g2.log_sigmoid(hh)))["h"]
    g1 = Graph()
    pw1 = g1.param("w", w)
    h1 = g1.l2_normalize(g1.matmul(g1.const(x), pw1))
    split = g1.backward(g1.sum(g1.mul(h1, g1.const(upstream))))["w"]
    np.testing.assert_allclose(fused, split, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_finite_inputs_give_finite_outputs(x):
    g = Graph()
    a = g.const(x)
    outs = [g.relu(a), g.sigmoid(a), g.log_sigmoid(a), g.abs(a), g.sqrt(g.abs(a))]
    for o in outs:
        assert np.all(np.isfinite(o.value))


def test_sgd_step():
    st_ = OptimizerState(kind="sgd", lr=0.1)
    new, st_ = step(st_, {"p": np.array([1.0])}, {"p": np.array([2.0])})
    assert new["p"][0] == pytest.approx(0.8)
    assert st_.t == 1


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_zero_gradient_leaves_params(kind):
    p = {"p": np.array([1.0, -2.0])}
    new, _ = step(OptimizerState(kind=kind, lr=0.5), p, {"p": np.zeros(2)})
    assert new["p"].tolist() == [1.0, -2.0]


def test_adam_first_step_magnitude_is_lr():
    lr = 0.01
    g = np.array([3.0, -0.5, 1e-2])
    new, state = step(OptimizerState(lr=lr), {"p": np.zeros(3)}, {"p": g})
    assert np.all(np.abs(np.abs(new["p"]) / lr - 1) < 1e-6)
    assert state.t == 1 and state.m["p"].shape == (3,)


def test_step_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        step(OptimizerState(), {"p": np.zeros(3)}, {"p": np.zeros(2)})
