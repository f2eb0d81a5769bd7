import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explorecd.datasets import NodeFeatures
from explorecd.embed import (
    ModelParams,
    adam_step,
    attr_prob,
    edge_prob,
    gcn_forward,
    gradcheck,
    init_params,
    loss,
    loss_gradients,
    nonedge_sum,
    nonedge_sum_naive,
    normalize_adjacency,
    train,
)
from explorecd.errors import ShapeMismatch
from explorecd.graph import ObservedNetwork


def dense(adj):
    return adj.toarray() if hasattr(adj, "toarray") else np.asarray(adj)


# --------------------------------------------------------------------------- adjacency


def test_normalize_single_node():
    assert dense(normalize_adjacency(ObservedNetwork(1))).tolist() == [[1.0]]


def test_normalize_one_edge():
    a = dense(normalize_adjacency(ObservedNetwork(2, inferred_edges={(0, 1)})))
    np.testing.assert_allclose(a, [[0.5, 0.5], [0.5, 0.5]])


def test_normalize_triangle():
    g = ObservedNetwork(3, revealed_edges={(0, 1), (0, 2)}, inferred_edges={(1, 2)}, queried_set={0})
    np.testing.assert_allclose(dense(normalize_adjacency(g)), np.full((3, 3), 1 / 3))


def test_normalize_isolated_and_symmetric():
    g = ObservedNetwork(4, inferred_edges={(0, 1), (1, 2)})
    a = dense(normalize_adjacency(g))
    assert a[3, 3] == 1.0
    np.testing.assert_array_equal(a, a.T)
    assert (np.diag(a) > 0).all()


def test_inferred_weight_hook():
    g = ObservedNetwork(2, inferred_edges={(0, 1)})
    a = dense(normalize_adjacency(g, inferred_weight=0.0))
    np.testing.assert_allclose(a, np.eye(2))


# --------------------------------------------------------------------------- forward


def test_forward_zero_weights():
    x = NodeFeatures(np.eye(3, dtype=np.uint8))
    p = ModelParams(np.zeros((3, 4)), np.zeros((4, 2)), np.zeros((3, 2)))
    adj = normalize_adjacency(ObservedNetwork(3, inferred_edges={(0, 1)}))
    assert not gcn_forward(adj, x, p).any()


def test_forward_hand_evaluated():
    x = NodeFeatures(np.array([[1, 0]]))
    w1 = np.eye(2)
    w2 = np.array([[-1.0, 2.0], [0.0, 0.0]])  # h1 = (1, 0) -> pre-activation (-1, 2)
    p = ModelParams(w1, w2, np.zeros((2, 2)))
    f = gcn_forward(normalize_adjacency(ObservedNetwork(1)), x, p)
    np.testing.assert_array_equal(f, [[0.0, 2.0]])


def test_forward_column_locality():
    rng = np.random.default_rng(0)
    x = NodeFeatures((rng.random((6, 4)) < 0.5).astype(np.uint8))
    adj = normalize_adjacency(ObservedNetwork(6, inferred_edges={(0, 1), (2, 3), (1, 4)}))
    p = init_params(4, 5, 3, seed=1)
    f = gcn_forward(adj, x, p)
    p.w2[:, 1] *= -1
    g = gcn_forward(adj, x, p)
    np.testing.assert_array_equal(f[:, [0, 2]], g[:, [0, 2]])
    assert not (g[:, 1] > 0)[f[:, 1] > 0].any()


def test_forward_shape_mismatch():
    p = init_params(3, 4, 2)
    with pytest.raises(ShapeMismatch):
        gcn_forward(normalize_adjacency(ObservedNetwork(2)), NodeFeatures(np.ones((2, 5), dtype=np.uint8)), p)
    with pytest.raises(ShapeMismatch):
        ModelParams(np.zeros((3, 4)), np.zeros((5, 2)), np.zeros((3, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_forward_nonnegative(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 8)), int(rng.integers(1, 5))
    x = NodeFeatures((rng.random((n, d)) < 0.5).astype(np.uint8))
    edges = {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4}
    p = ModelParams(rng.normal(0, 3, (d, 4)), rng.normal(0, 3, (4, 3)), rng.normal(0, 1, (d, 3)))
    f = gcn_forward(normalize_adjacency(ObservedNetwork(n, inferred_edges=edges)), x, p)
    assert (f >= 0).all() and np.isfinite(f).all()


# --------------------------------------------------------------------------- probabilities


def test_edge_prob_values():
    assert edge_prob([0, 0], [1, 1]) == 0.0
    assert edge_prob([math.log(2)], [1.0]) == pytest.approx(0.5)
    assert edge_prob([1, 2], [3, 0]) == pytest.approx(0.950213, abs=1e-6)


@given(st.floats(0, 30), st.floats(1e-6, 5))
def test_edge_prob_monotone(dot, gap):
    a, b = edge_prob([dot], [1.0]), edge_prob([dot + gap], [1.0])
    assert 0 <= a < 1
    assert a <= b
    if dot + gap < 15:  # beyond this the difference underflows float64 near 1
        assert a < b


def test_attr_prob_values():
    w = np.array([[3.0, -1.0], [0.5, 0.5]])
    assert attr_prob([0.0, 0.0], w, 0) == 0.5
    assert attr_prob([0.0, 0.0], w, 1) == 0.5
    assert attr_prob([1.0, 1.0], w, 1) == pytest.approx(0.731059, abs=1e-6)
    assert abs(attr_prob([50.0], np.array([[1.0]]), 0) - 1.0) <= 1e-15


# --------------------------------------------------------------------------- loss


def test_loss_single_edge():
    g = ObservedNetwork(2, inferred_edges={(0, 1)})
    x = NodeFeatures(np.zeros((2, 1), dtype=np.uint8))
    assert loss([[1.0], [1.0]], np.zeros((1, 1)), g, x, 0.0) == pytest.approx(-math.log(1 - math.exp(-1)))
    assert loss([[1.0], [1.0]], np.zeros((1, 1)), g, x, 0.0) == pytest.approx(0.458675, abs=1e-6)


def test_loss_three_nodes():
    g = ObservedNetwork(3, inferred_edges={(0, 1)})
    x = NodeFeatures(np.zeros((3, 1), dtype=np.uint8))
    assert loss(np.ones((3, 1)), np.zeros((1, 1)), g, x, 0.0) == pytest.approx(2.458675, abs=1e-6)


def test_loss_attribute_only():
    g = ObservedNetwork(2)
    x = NodeFeatures(np.eye(2, dtype=np.uint8))
    val = loss(np.zeros((2, 1)), np.zeros((2, 1)), g, x, 1.0)
    assert val == pytest.approx(4 * math.log(2))
    assert val == pytest.approx(2.772589, abs=1e-6)


def test_loss_zero_dot_edge_is_finite():
    g = ObservedNetwork(2, inferred_edges={(0, 1)})
    x = NodeFeatures(np.zeros((2, 1), dtype=np.uint8))
    val = loss(np.zeros((2, 1)), np.zeros((1, 1)), g, x, 0.0)
    assert val == pytest.approx(-math.log(-math.expm1(-1e-8)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_eta_zero_ignores_metadata(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    f = rng.random((n, 3))
    g = ObservedNetwork(n, inferred_edges={(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3})
    x1 = NodeFeatures((rng.random((n, 4)) < 0.5).astype(np.uint8))
    x2 = NodeFeatures((rng.random((n, 4)) < 0.5).astype(np.uint8))
    w1, w2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert loss(f, w1, g, x1, 0.0) == loss(f, w2, g, x2, 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_nonedge_closed_form_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 31))
    f = rng.random((n, int(rng.integers(1, 5))))
    edges = np.array([(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.2]).reshape(-1, 2)
    assert abs(nonedge_sum(f, edges) - nonedge_sum_naive(f, edges)) <= 1e-10


# --------------------------------------------------------------------------- gradients


def test_zero_params_zero_w2_gradient():
    x = NodeFeatures(np.eye(3, dtype=np.uint8))
    g = ObservedNetwork(3, inferred_edges={(0, 1)})
    p = ModelParams(np.zeros((3, 4)), np.zeros((4, 2)), np.zeros((3, 2)))
    grads = loss_gradients(p, normalize_adjacency(g), x, g, 1.0)
    assert not grads["w2"].any()


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    assert gradcheck(seed, step=1e-5) < 1e-5


def test_eta_scaling():
    rng = np.random.default_rng(3)
    x = NodeFeatures((rng.random((5, 4)) < 0.5).astype(np.uint8))
    g = ObservedNetwork(5, inferred_edges={(0, 1), (1, 2), (3, 4)})
    adj = normalize_adjacency(g)
    p = ModelParams(rng.uniform(0.1, 1, (4, 3)), rng.uniform(0.1, 1, (3, 2)), rng.normal(size=(4, 2)))
    g1 = loss_gradients(p, adj, x, g, 1.0)
    g2 = loss_gradients(p, adj, x, g, 2.0)
    np.testing.assert_array_equal(g2["w_attr"], 2 * g1["w_attr"])

    # w1 gradient = structure part + eta * metadata part
    g0, g1, g2 = (loss_gradients(p, adj, x, g, eta) for eta in (0.0, 1.0, 2.0))
    attr_part = g1["w1"] - g0["w1"]
    assert np.abs(attr_part).max() > 0
    np.testing.assert_allclose(g2["w1"] - g0["w1"], 2 * attr_part, rtol=1e-10, atol=1e-12)

    # with w_attr = 0 the metadata term cannot reach w1 or w2
    p.w_attr[:] = 0.0
    g0, g2 = loss_gradients(p, adj, x, g, 0.0), loss_gradients(p, adj, x, g, 2.0)
    np.testing.assert_array_equal(g0["w1"], g2["w1"])
    np.testing.assert_array_equal(g0["w2"], g2["w2"])


# --------------------------------------------------------------------------- adam


def one_param(value, grad):
    p = ModelParams(np.array([[value]]), np.zeros((1, 1)), np.zeros((1, 1)))
    grads = {"w1": np.array([[grad]]), "w2": np.zeros((1, 1)), "w_attr": np.zeros((1, 1))}
    return p, grads


def test_adam_first_step():
    p, grads = one_param(0.0, 1.0)
    adam_step(p, grads, 0.001)
    # m_hat = 1, v_hat = 1 after bias correction
    assert p.w1[0, 0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)
    assert p.step == 1


def test_adam_zero_gradient():
    p, grads = one_param(0.7, 0.0)
    adam_step(p, grads, 0.001)
    assert p.w1[0, 0] == 0.7


def test_adam_symmetric():
    p = ModelParams(np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((1, 1)))
    grads = {"w1": np.array([[0.3, -0.3]]), "w2": np.zeros((2, 1)), "w_attr": np.zeros((1, 1))}
    for _ in range(3):
        adam_step(p, grads, 0.01)
    assert p.w1[0, 0] == -p.w1[0, 1] != 0


def test_adam_rejects_bad_lr():
    p, grads = one_param(0.0, 1.0)
    with pytest.raises(ValueError):
        adam_step(p, grads, 0.0)


# --------------------------------------------------------------------------- training


@pytest.fixture
def tiny():
    g = ObservedNetwork(3, inferred_edges={(0, 1)})
    x = NodeFeatures(np.array([[1, 0], [1, 0], [0, 1]], dtype=np.uint8))
    return g, x, init_params(2, 4, 1, seed=0)


def test_train_rejects_zero_epochs(tiny):
    g, x, p = tiny
    with pytest.raises(ValueError):
        train(g, x, p, epochs=0)


def test_train_descends(tiny):
    g, x, p = tiny
    res = train(g, x, p, eta=0.0, epochs=200, lr=0.01)
    assert res.losses[-1] <= res.losses[0]
    assert res.params.step == 200
    assert p.step == 0  # input parameters untouched


def test_train_deterministic(tiny):
    g, x, p = tiny
    a = train(g, x, p, eta=1.0, epochs=50, seed=3)
    b = train(g, x, p, eta=1.0, epochs=50, seed=3)
    assert a.f.tobytes() == b.f.tobytes()


def test_checkpoint_round_trip(tmp_path, tiny):
    g, x, p = tiny
    res = train(g, x, p, epochs=5)
    res.params.save(tmp_path / "ck.npz")
    back = ModelParams.load(tmp_path / "ck.npz")
    assert back.step == 5
    for name in ("w1", "w2", "w_attr"):
        np.testing.assert_array_equal(getattr(back, name), getattr(res.params, name))
        np.testing.assert_array_equal(back.adam_v[name], res.params.adam_v[name])
