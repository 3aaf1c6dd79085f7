import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from complexnets import dag as dg
from complexnets import graphgen as gg
from complexnets import net as nn

from conftest import fd_max_rel_error, random_small_net


def chain_net(w=1.0):
    g = gg.UGraph(3, ((0, 1), (1, 2)))
    d = dg.Dag(g, (0, 1, 2))
    return nn.DagNet(d, np.full(2, w), np.zeros(3))


def mlp_reference(net: nn.DagNet, sizes, x):
    """Textbook two-matrix forward built straight from the arc list."""
    a, h, b = sizes
    W1 = np.zeros((a, h))
    W2 = np.zeros((h, b))
    for (u, v), w in zip(net.dag.arcs.tolist(), net.weights):
        if u < a:
            W1[u, v - a] = w
        else:
            W2[u - a, v - a - h] = w
    b1 = net.biases[a : a + h]
    b2 = net.biases[a + h :]
    z = x @ W1 + b1
    hidden = 1.0507009873554805 * np.where(z > 0, z, 1.6732632423543772 * (np.exp(z) - 1))
    return hidden @ W2 + b2


def test_selu_constants():
    assert nn.SELU_LAMBDA == 1.0507009873554805
    assert nn.SELU_ALPHA == 1.6732632423543772
    assert nn.selu(np.array([0.0]))[0] == 0.0
    assert nn.selu(np.array([-50.0]))[0] == pytest.approx(-nn.SELU_LAMBDA * nn.SELU_ALPHA)


def test_single_arc_zero_input():
    g = gg.UGraph(2, ((0, 1),))
    net = nn.DagNet(dg.Dag(g, (0, 1)), np.ones(1), np.zeros(2))
    assert nn.forward(net, [[0.0]])[0, 0] == 0.0


def test_chain_selu_one():
    out = nn.forward(chain_net(), [[1.0]])
    assert out[0, 0] == pytest.approx(1.0507009873554805, abs=1e-15)


def test_mlp_dense_oracle(rng):
    dag = dg.orient(gg.gen_mlp([3, 122, 3]), "identity")
    for trial in range(5):
        net = nn.init(dag, trial)
        net.biases[net.bias_nodes] = rng.normal(size=len(net.bias_nodes))
        x = rng.normal(size=(16, 3))
        np.testing.assert_allclose(nn.forward(net, x), mlp_reference(net, (3, 122, 3), x), rtol=0, atol=1e-10)


def test_init_statistics():
    dag = dg.orient(gg.gen_mlp([4, 2000, 1]), "identity")
    net = nn.init(dag, 0)
    first = net.weights[dag.arcs[:, 0] < 4]  # heads have fan-in 4
    assert np.std(first) == pytest.approx(0.5, rel=0.05)
    assert np.all(net.biases == 0)
    again = nn.init(dag, 0)
    assert np.array_equal(again.weights, net.weights)


def test_count_params():
    mlp = nn.init(dg.orient(gg.gen_mlp([3, 122, 3]), "identity"), 0)
    assert nn.count_params(mlp) == 732 + 125 == 857
    g = gg.UGraph(2, ((0, 1),))
    assert nn.count_params(nn.init(dg.Dag(g, (0, 1)), 0)) == 2
    ba = nn.init(dg.build_dag(gg.gen_ba(128, 732, 0), 3, 3, seed=0), 0)
    assert nn.count_params(ba) == 857


def test_uniform_logits_loss():
    loss, grad = nn.cross_entropy(np.zeros((4, 3)), np.array([0, 1, 2, 0]))
    assert loss == pytest.approx(math.log(3))


def test_zero_net_sink_bias_gradient():
    net = random_small_net(5)
    net.weights[:] = 0
    net.biases[:] = 0
    x = np.random.default_rng(0).normal(size=(1, 3))
    y = np.array([1])
    assert np.all(nn.forward(net, x) == 0)
    _, _, gb = nn.backward(net, x, y)
    expected = np.array([1 / 3, 1 / 3 - 1, 1 / 3])
    np.testing.assert_allclose(gb[net.outputs], expected, atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_finite_differences(seed):
    net = random_small_net(seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 3))
    y = rng.integers(0, 3, size=8)
    assert fd_max_rel_error(net, x, y) <= 1e-4


def test_gradient_with_mask():
    net = random_small_net(11)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, size=6)
    mask = nn.sample_damage(net, 6, 0.3, rng)
    assert fd_max_rel_error(net, x, y, mask) <= 1e-4


def test_mask_zero_fraction_is_noop():
    net = random_small_net(3)
    x = np.random.default_rng(0).normal(size=(10, 3))
    mask = nn.sample_damage(net, 10, 0.0, np.random.default_rng(0))
    assert np.array_equal(nn.forward(net, x, mask), nn.forward(net, x))


def test_mask_never_touches_io(rng):
    net = random_small_net(4)
    mask = nn.sample_damage(net, 50, 0.9, rng)
    assert np.all(mask[net.inputs] == 1) and np.all(mask[net.outputs] == 1)
    assert set(np.unique(mask[net.hidden])) <= {0.0, 1.0}
    scaled = nn.sample_damage(net, 50, 0.5, rng, rescale=True)
    assert set(np.unique(scaled[net.hidden])) <= {0.0, 2.0}
    with pytest.raises(ValueError):
        nn.sample_damage(net, 5, 1.0, rng)


def test_masked_node_outputs_zero():
    net = chain_net()
    mask = np.ones((3, 1))
    mask[1] = 0
    assert nn.forward(net, [[1.0]], mask)[0, 0] == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 500), perm_seed=st.integers(0, 500))
def test_batch_permutation_equivariance(seed, perm_seed):
    net = random_small_net(seed, n_max=16)
    x = np.random.default_rng(seed).normal(size=(7, 3))
    p = np.random.default_rng(perm_seed).permutation(7)
    np.testing.assert_allclose(nn.forward(net, x[p]), nn.forward(net, x)[p], rtol=0, atol=1e-14)


def test_shape_errors():
    net = chain_net()
    with pytest.raises(ValueError):
        nn.forward(net, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        nn.backward(net, np.zeros((2, 1)), [0, 0, 0])
    g = gg.UGraph(3, ((0, 2), (1, 2)))
    two_in = nn.init(dg.Dag(g, (0, 1, 2)), 0)
    with pytest.raises(ValueError):
        nn.backward(two_in, np.zeros((1, 2)), [1])  # one output, label 1 is invalid


def test_checkpoint_roundtrip():
    net = random_small_net(8)
    d = json.loads(net.to_json())
    assert d["activation"] == "selu"
    assert len(d["weights"]) == len(net.dag.arcs)
    assert len(d["biases"]) == net.dag.n - net.n_in
    back = nn.DagNet.from_json(net.to_json())
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(back.forward(x), net.forward(x))
