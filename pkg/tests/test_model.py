import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taylorattr.errors import ModelFormatError, ShapeError, TrainingError
from taylorattr.model import (
    Activation,
    DenseLayer,
    Network,
    NetworkFunction,
    activation_derivatives,
    forward,
    init_network,
    load_model,
    network_to_dict,
    save_model,
    train_toy_classifier,
    training_accuracy,
)
from taylorattr.numeric import RngState, fd_gradient

from conftest import random_network


def test_forward_identity_layer():
    net = Network((DenseLayer([[2.0, 3.0]], [0.0]),))
    assert forward(net, [1.0, 1.0]).tolist() == [5.0]


def test_forward_square_layer():
    net = Network((DenseLayer([[1.0, 1.0]], [0.0], "square"),))
    assert forward(net, [1.0, 2.0]).tolist() == [9.0]


def test_forward_dimension_mismatch():
    net = Network((DenseLayer([[1.0, 1.0]], [0.0]),))
    with pytest.raises(ShapeError):
        forward(net, [1.0, 2.0, 3.0])


def test_layer_chain_validated():
    with pytest.raises(ShapeError):
        Network((DenseLayer(np.ones((3, 2)), np.zeros(3)), DenseLayer(np.ones((1, 2)), [0.0])))


def test_forward_batch_matches_rows():
    net = random_network(RngState(1), 3, (5, 4))
    xs = RngState(2).uniform(12, -1, 1).reshape(4, 3)
    batch = forward(net, xs)
    for row, x in zip(batch, xs):
        np.testing.assert_allclose(row, forward(net, x), rtol=0, atol=1e-15)


def test_save_load_roundtrip(tmp_path):
    net = random_network(RngState(7), 4, (3,))
    path = tmp_path / "m.model.json"
    save_model(net, path)
    assert load_model(path) == net


def test_mismatched_bias_names_layer(tmp_path):
    doc = network_to_dict(random_network(RngState(7), 2, (3,)))
    doc["layers"][1]["bias"] = [0.0, 1.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match=r"layers\[1\]"):
        load_model(path)


def test_unknown_activation_lists_kinds(tmp_path):
    doc = network_to_dict(random_network(RngState(7), 2, ()))
    doc["layers"][0]["activation"] = "swish"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="tanh"):
        load_model(path)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"input_dim": 2,\n "layers": [}')
    with pytest.raises(ModelFormatError, match=r"broken.json:2:"):
        load_model(path)


@pytest.mark.parametrize("kind", ["tanh", "sigmoid", "softplus", "square", "identity"])
def test_activation_derivatives_match_finite_differences(kind):
    act = Activation(kind)
    u = np.linspace(-1.5, 1.5, 7)
    d = activation_derivatives(kind, u, 4)
    assert d.shape == (u.size, 5)
    np.testing.assert_allclose(d[:, 0], act(u), atol=1e-15)
    h = 1e-4
    fd1 = (act(u + h) - act(u - h)) / (2 * h)
    fd2 = (act(u + h) - 2 * act(u) + act(u - h)) / h**2
    np.testing.assert_allclose(d[:, 1], fd1, atol=1e-7)
    np.testing.assert_allclose(d[:, 2], fd2, atol=1e-5)


def test_tanh_high_derivatives_closed_form():
    u = np.array([0.3, -0.8])
    t = np.tanh(u)
    d = activation_derivatives("tanh", u, 3)
    np.testing.assert_allclose(d[:, 2], -2 * t * (1 - t**2), atol=1e-14)
    np.testing.assert_allclose(d[:, 3], (1 - t**2) * (6 * t**2 - 2), atol=1e-14)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_network_gradient_matches_finite_differences(seed):
    rng = RngState(seed)
    n = int(rng.integers(1, 1, 6)[0])
    net = random_network(rng, n, (4, 3))
    f = NetworkFunction(net)
    x = rng.uniform(n, -1, 1)
    np.testing.assert_allclose(f.gradient(x), fd_gradient(f, x), atol=1e-7)


def test_relu_kink_warns():
    net = Network((DenseLayer([[1.0, -1.0]], [0.0], "relu"), DenseLayer([[1.0]], [0.0])))
    with pytest.warns(RuntimeWarning, match="kink"):
        g = NetworkFunction(net).gradient([1.0, 1.0])
    assert g.tolist() == [0.0, 0.0]


def _separable(rng, count=200):
    xs = rng.uniform(2 * count, -1, 1).reshape(count, 2)
    keep = np.abs(xs[:, 0] + 0.5 * xs[:, 1]) > 0.1
    xs = xs[keep]
    return [(x, int(x[0] + 0.5 * x[1] > 0)) for x in xs]


def test_trainer_separates_linear_toy_set():
    data = _separable(RngState(11))
    net = train_toy_classifier(data, [2, 1], RngState(3), epochs=200, lr=0.1)
    assert training_accuracy(net, data) >= 0.95


def test_zero_epochs_returns_initial_network():
    data = _separable(RngState(11), 20)
    trained = train_toy_classifier(data, [2, 3, 1], RngState(5), epochs=0)
    assert trained == init_network([2, 3, 1], RngState(5))


def test_training_is_deterministic():
    data = _separable(RngState(11), 50)
    a = train_toy_classifier(data, [2, 4, 1], RngState(9), epochs=5)
    b = train_toy_classifier(data, [2, 4, 1], RngState(9), epochs=5)
    assert a == b


def test_divergence_reports_epoch():
    data = [(np.array([1e200, 1e200]), 1), (np.array([-1e200, 1e200]), 0)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(TrainingError, match=r"epoch \d"):
            train_toy_classifier(data, [2, 1], RngState(1), epochs=3, lr=1e10)


def test_input_scale_folded_into_first_layer():
    data = [(np.array([200.0, 10.0]), 1), (np.array([10.0, 200.0]), 0)]
    net = train_toy_classifier(data, [2, 1], RngState(2), epochs=50, lr=0.5, input_scale=1 / 255)
    assert training_accuracy(net, data) == 1.0
