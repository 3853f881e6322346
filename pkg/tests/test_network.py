import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bifurnet.errors import DimensionError, ParseError
from bifurnet.network import (
    MlpNetwork,
    activate_prime,
    backward_params,
    forward,
    init_network,
    input_jacobian,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
)
from bifurnet.numerics import central_diff


def test_init_is_deterministic_with_zero_biases():
    a = init_network([2, 16, 3], "relu", seed=11)
    b = init_network([2, 16, 3], "relu", seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert all(np.all(bias == 0) for bias in a.biases)
    limit = np.sqrt(6.0 / 18.0)
    assert np.all(np.abs(a.weights[0]) <= limit)


def test_init_rejects_bad_dims():
    with pytest.raises(DimensionError):
        init_network([3])
    with pytest.raises(DimensionError):
        init_network([2, 0, 1])


def test_unknown_activation():
    with pytest.raises(ValueError):
        init_network([1, 2, 1], "tanh")


def test_output_layer_is_affine():
    net = MlpNetwork([1, 1, 1], [np.array([[1.0]]), np.array([[2.0]])], [np.zeros(1), np.array([0.5])], "relu")
    # relu hidden, no activation on output
    assert forward(net, [-3.0])[0] == pytest.approx(0.5)
    assert forward(net, [2.0])[0] == pytest.approx(4.5)


def test_single_and_batch_shapes(sigmoid_net):
    assert forward(sigmoid_net, [0.3]).shape == (1,)
    assert forward(sigmoid_net, np.zeros((5, 1))).shape == (5, 1)
    with pytest.raises(DimensionError):
        forward(sigmoid_net, np.zeros((5, 2)))


def test_input_normalization_is_applied():
    net = init_network([1, 4, 1], "sigmoid", seed=0, input_offset=[10.0], input_scale=[2.0])
    raw = init_network([1, 4, 1], "sigmoid", seed=0)
    assert np.allclose(forward(net, [14.0]), forward(raw, [2.0]))


def test_flat_roundtrip(sigmoid_net):
    theta = sigmoid_net.get_flat()
    assert theta.size == sigmoid_net.n_params == 8 + 8 + 8 + 1
    other = sigmoid_net.with_flat(theta * 2)
    assert np.allclose(other.get_flat(), theta * 2)
    with pytest.raises(DimensionError):
        sigmoid_net.set_flat(theta[:-1])


def test_relu_prime_at_zero():
    assert activate_prime("relu", np.array([0.0]))[0] == 0.0


def _param_fd(net, p, upstream):
    theta = net.get_flat()

    def scalar(t):
        return float(np.sum(upstream * forward(net.with_flat(t), p)))

    return np.array([central_diff(scalar, theta, i) for i in range(theta.size)])


def test_backward_params_relu_linear_region():
    # every unit active: the network is affine in its input
    net = MlpNetwork([1, 1, 1], [np.array([[0.7]]), np.array([[1.3]])], [np.array([0.2]), np.array([-0.1])], "relu")
    g = backward_params(net, [1.5], [1.0]).flat()
    fd = _param_fd(net, np.array([1.5]), np.array([1.0]))
    assert np.allclose(g, fd, rtol=1e-6)


@pytest.mark.parametrize("activation", ["sigmoid", "relu"])
def test_backward_params_batch_matches_fd(activation):
    net = init_network([2, 6, 3], activation, seed=4)
    r = np.random.default_rng(0)
    for b in net.biases:
        b[:] = r.normal(size=b.shape)
    p = r.normal(size=(4, 2))
    up = r.normal(size=(4, 3))
    g = backward_params(net, p, up).flat()
    fd = _param_fd(net, p, up)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_backward_params_checks_upstream(sigmoid_net):
    with pytest.raises(DimensionError):
        backward_params(sigmoid_net, np.zeros((3, 1)), np.zeros((2, 1)))


def test_input_jacobian_matches_fd():
    net = init_network([3, 10, 2], "sigmoid", seed=9, input_offset=[1, 2, 3], input_scale=[0.5, 2, 4])
    p = np.array([0.3, -1.0, 4.0])
    j = input_jacobian(net, p)
    fd = np.column_stack([central_diff(lambda q: forward(net, q), p, i) for i in range(3)])
    assert j.shape == (2, 3)
    assert np.allclose(j, fd, rtol=1e-6, atol=1e-9)
    batch = input_jacobian(net, np.stack([p, p]))
    assert batch.shape == (2, 2, 3)


def test_save_load_roundtrip_is_exact(tmp_path, sigmoid_net):
    path = tmp_path / "m.json"
    save_network(sigmoid_net, path)
    back = load_network(path)
    p = np.linspace(-2, 2, 7)[:, None]
    assert np.array_equal(forward(back, p), forward(sigmoid_net, p))


def test_load_reports_bad_fields(tmp_path, sigmoid_net):
    doc = network_to_dict(sigmoid_net)
    del doc["biases"]
    with pytest.raises(ParseError) as info:
        network_from_dict(doc)
    assert info.value.field == "biases"
    doc = network_to_dict(sigmoid_net)
    doc["activation"] = "swish"
    with pytest.raises(ParseError):
        network_from_dict(doc)
    doc = network_to_dict(sigmoid_net)
    doc["weights"][0] = [[1.0, 2.0]]
    with pytest.raises(DimensionError):
        network_from_dict(doc)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_network(bad)


def test_saved_file_is_plain_json(tmp_path, sigmoid_net):
    path = tmp_path / "m.json"
    save_network(sigmoid_net, path)
    doc = json.loads(path.read_text())
    assert set(doc) >= {"layer_dims", "activation", "weights", "biases"}


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_sigmoid_output_is_bounded_by_weights(a, b):
    net = init_network([1, 5, 1], "sigmoid", seed=2)
    out = forward(net, np.array([[a], [b]]))
    bound = np.sum(np.abs(net.weights[1])) + abs(net.biases[1][0])
    assert np.all(np.abs(out) <= bound + 1e-12)
