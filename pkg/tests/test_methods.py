import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taylorattr.errors import ParameterError, ShapeError
from taylorattr.methods import (
    METHOD_NAMES,
    DEFAULT_NUM_BASELINES,
    DEFAULT_SIGMA,
    BaselineSpec,
    MethodConfig,
    PatchSpec,
    deeplift_rescale,
    epsilon_lrp,
    gradient_x_input,
    ig1,
    ig2,
    ig3,
    integrated_gradients,
    perturbation_1,
    perturbation_patch,
    plain_gradient,
    rescale_rule,
    run_method,
)
from taylorattr.model import DenseLayer, Network, NetworkFunction
from taylorattr.numeric import RngState
from taylorattr.poly import Polynomial, exact_ig
from taylorattr.results import AttributionResult

from conftest import random_network

AFFINE_W = np.array([2.0, -1.5, 0.5, 3.0])


@pytest.fixture
def affine_net():
    return Network((DenseLayer(AFFINE_W[None, :], [0.0]),))


def test_published_constants():
    assert DEFAULT_SIGMA == 63.75 and DEFAULT_NUM_BASELINES == 20


# -- gradient family


def test_gradient_x_input_examples(x1sq_x2):
    assert gradient_x_input(x1sq_x2, [1.0, 2.0]).scores.tolist() == [4.0, 2.0]
    assert gradient_x_input(x1sq_x2, [0.0, 0.0]).scores.tolist() == [0.0, 0.0]


def test_plain_gradient(x1sq_x2):
    assert plain_gradient(x1sq_x2, [1.0, 2.0]).scores.tolist() == [4.0, 1.0]


def test_shape_checked(x1x2):
    with pytest.raises(ShapeError):
        gradient_x_input(x1x2, [1.0, 2.0, 3.0])


# -- perturbation family


def test_perturbation_1_examples(x1sq_x2):
    assert perturbation_1(x1sq_x2, [1.0, 2.0]).scores.tolist() == [2.0, 2.0]
    assert perturbation_1(x1sq_x2, [1.0, 2.0], v=1.0).scores[0] == 0.0


def test_perturbation_1_affine():
    p = Polynomial.parse("2*x1 - 3*x2 + 1", 2)
    np.testing.assert_allclose(perturbation_1(p, [4.0, -1.0], v=0.5).scores, [7.0, 4.5], atol=1e-14)


def test_perturbation_patch_example():
    p = Polynomial.parse("x1*x2 + x3", 3)
    patches = PatchSpec(((0, 1), (2,)), 3)
    assert perturbation_patch(p, [2.0, 3.0, 5.0], patches).scores.tolist() == [6.0, 6.0, 5.0]


@pytest.mark.parametrize("patches", [((0, 1), (1, 2)), ((0,), (2,)), ((0, 1, 2), ()), ((0, 1, 5),)])
def test_patch_spec_rejects_bad_partitions(patches):
    with pytest.raises(ParameterError):
        PatchSpec(patches, 3)


def test_patch_grid_covers_image():
    spec = PatchSpec.grid(5, 4, 2)
    assert len(spec.patches) == 6
    assert sorted(i for p in spec.patches for i in p) == list(range(20))


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_singleton_patches_equal_perturbation_1(seed):
    rng = RngState(seed)
    n = int(rng.integers(1, 1, 6)[0])
    f = NetworkFunction(random_network(rng, n, (4,)))
    x = rng.uniform(n, -2, 2)
    v = float(rng.uniform(1, -1, 1)[0])
    a = perturbation_patch(f, x, PatchSpec.singletons(n), v).scores
    b = perturbation_1(f, x, v).scores
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# -- layerwise family


def test_deeplift_identity_layer():
    net = Network((DenseLayer([[2.0, 3.0]], [0.0]),))
    r = deeplift_rescale(net, [1.0, 1.0], [0.0, 0.0])
    np.testing.assert_allclose(r.scores, [2.0, 3.0], atol=1e-15)


def test_deeplift_square_neuron():
    net = Network((DenseLayer([[1.0, 1.0]], [0.0], "square"),))
    r = deeplift_rescale(net, [1.0, 2.0], [0.0, 0.0])
    np.testing.assert_allclose(r.scores, [3.0, 6.0], atol=1e-14)
    assert r.metadata["stabilizer_events"] == []


def test_deeplift_at_baseline_is_zero():
    net = random_network(RngState(2), 3, (4,))
    x = np.array([0.2, -0.4, 0.9])
    r = deeplift_rescale(net, x, x)
    assert r.scores.tolist() == [0.0, 0.0, 0.0] and np.all(np.isfinite(r.scores))


def test_rescale_rule_stabilizer_equal_split():
    dz = np.array([[1.0, -1.0, 0.0]])
    rel, fired = rescale_rule(dz, np.array([4.0]))
    assert fired == [0]
    assert rel.tolist() == [2.0, 2.0, 0.0]


def test_deeplift_stabilizer_recorded_and_finite():
    # hidden neuron 0 sees w.(x - x~) = 1 - 1 = 0 while its output still changes through tanh(b)
    net = Network((DenseLayer([[1.0, 1.0], [1.0, 0.0]], [0.0, 0.0], "tanh"), DenseLayer([[1.0, 1.0]], [0.0])))
    r = deeplift_rescale(net, [1.0, -1.0], [0.0, 0.0])
    assert {"layer": 0, "neuron": 0} in r.metadata["stabilizer_events"]
    assert np.all(np.isfinite(r.scores))
    assert abs(r.completeness_residual) <= 1e-12


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_deeplift_per_layer_conservation(seed):
    rng = RngState(seed)
    n = int(rng.integers(1, 1, 7)[0])
    widths = tuple(int(w) for w in rng.integers(int(rng.integers(1, 0, 3)[0]), 1, 9))
    net = random_network(rng, n, widths, activation="sigmoid")
    x, b = rng.uniform(n, -2, 2), rng.uniform(n, -2, 2)
    r = deeplift_rescale(net, x, b)
    diff = NetworkFunction(net)(x) - NetworkFunction(net)(b)
    for layer in r.metadata["layer_relevance"]:
        assert abs(sum(layer) - diff) <= 1e-10 * max(1.0, abs(diff))


def test_epsilon_lrp_examples():
    net = Network((DenseLayer([[2.0, 3.0]], [0.0]),))
    np.testing.assert_allclose(epsilon_lrp(net, [1.0, 1.0], 1e-12).scores, [2.0, 3.0], atol=1e-10)
    assert epsilon_lrp(net, [0.0, 0.0]).scores.tolist() == [0.0, 0.0]


def test_epsilon_lrp_shrinks_with_epsilon():
    net = Network((DenseLayer([[2.0, 3.0]], [0.0]),))
    mags = [np.abs(epsilon_lrp(net, [1.0, 1.0], eps).scores).sum() for eps in (1e-3, 1.0, 1e2, 1e4, 1e6)]
    assert all(a > b for a, b in zip(mags, mags[1:]))
    assert mags[-1] < 1e-4


def test_epsilon_must_be_positive():
    net = Network((DenseLayer([[2.0, 3.0]], [0.0]),))
    with pytest.raises(ParameterError):
        epsilon_lrp(net, [1.0, 1.0], 0.0)


# -- integrated gradients family


def test_ig_converges_to_exact(x1sq_x2):
    r = integrated_gradients(x1sq_x2, [1.0, 2.0], [0.0, 0.0], m=2000, rule="midpoint")
    np.testing.assert_allclose(r.scores, [4 / 3, 2 / 3], atol=1e-6)


def test_ig_right_rule_bias_at_100(x1x2):
    r = integrated_gradients(x1x2, [2.0, 3.0], [0.0, 0.0], m=100)
    assert np.all(np.abs(r.scores - 3.0) <= 0.05)


@pytest.mark.parametrize("m", [1, 7, 50])
def test_ig_exact_on_affine(m):
    p = Polynomial.parse("2*x1 - x2 + 4", 2)
    r = integrated_gradients(p, [3.0, 1.0], [1.0, -1.0], m=m)
    np.testing.assert_allclose(r.scores, [4.0, -2.0], atol=1e-14)


def test_unknown_rule_rejected(x1x2):
    with pytest.raises(ParameterError):
        integrated_gradients(x1x2, [1.0, 1.0], rule="left")


def test_ig_residual_decreases_on_polynomials():
    rng = RngState(8)
    p = Polynomial.parse("x1^3*x2 - 2*x2^2 + x1*x2*x3", 3)
    x, b = rng.uniform(3, -2, 2), rng.uniform(3, -2, 2)
    errs = [abs(integrated_gradients(p, x, b, m).completeness_residual) for m in (50, 100, 200, 400)]
    assert all(a > c for a, c in zip(errs, errs[1:]))


def test_ig_completeness_on_smooth_network():
    rng = RngState(3)
    net = random_network(rng, 4, (6,))
    f = NetworkFunction(net)
    x, b = rng.uniform(4, -1, 1), np.zeros(4)
    assert abs(integrated_gradients(f, x, b, 1000).completeness_residual) <= 1e-3


def test_ig1_example(x1sq_x2):
    r = ig1(x1sq_x2, [1.0, 2.0], [0.0, 0.0], m=4000, rule="midpoint")
    np.testing.assert_allclose(r.scores, [4 / 3, 1 / 3], atol=1e-6)


def test_ig1_zero_displacement_is_finite(x1sq_x2):
    r = ig1(x1sq_x2, [1.0, 2.0], [0.0, 2.0], m=4000, rule="midpoint")
    # path x1 = a, x2 = 2: average of (4a, a^2) over a in (0, 1)
    np.testing.assert_allclose(r.scores, [2.0, 1 / 3], atol=1e-6)


def test_ig1_affine_gives_weights():
    p = Polynomial.parse("2*x1 - x2 + 4", 2)
    np.testing.assert_allclose(ig1(p, [3.0, 1.0], [1.0, 1.0]).scores, [2.0, -1.0], atol=1e-14)


def test_ig2_deterministic(x1sq_x2):
    a = ig2(x1sq_x2, [1.0, 2.0], seed=5)
    b = ig2(x1sq_x2, [1.0, 2.0], seed=5)
    assert a.to_json() == b.to_json()
    assert ig2(x1sq_x2, [1.0, 2.0], seed=6).to_json() != a.to_json()


def test_ig2_baseline_is_input_minus_sampled_displacement(x1sq_x2):
    from taylorattr.numeric import sample_gaussian_vector

    r = ig2(x1sq_x2, [1.0, 2.0], sigma=2.0, seed=3)
    want = np.array([1.0, 2.0]) - sample_gaussian_vector(RngState(3), 2.0, 2)
    np.testing.assert_allclose(r.metadata["baseline"], want, atol=0)


def test_ig2_small_sigma_tends_to_gradient():
    rng = RngState(21)
    f = NetworkFunction(random_network(rng, 5, (6, 4)))
    x = rng.uniform(5, -1, 1)
    r = ig2(f, x, sigma=1e-4, seed=1)
    assert np.max(np.abs(r.scores - f.gradient(x))) <= 1e-3


def test_ig3_single_baseline_equals_ig2(x1sq_x2):
    a = ig2(x1sq_x2, [1.0, 2.0], seed=9).scores
    b = ig3(x1sq_x2, [1.0, 2.0], seed=9, J=1).scores
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_ig3_order_independent():
    # averaging the same J baseline attributions in reverse order gives the same bits
    rng = RngState(4)
    f = NetworkFunction(random_network(rng, 3, (5,)))
    x = rng.uniform(3, -1, 1)
    full = ig3(f, x, sigma=1.0, seed=2, J=6, m=20).scores
    from taylorattr.methods import path_gradient_average
    from taylorattr.numeric import sample_gaussian_vector
    import math

    stream = RngState(2)
    per = [path_gradient_average(f, x, x - sample_gaussian_vector(stream, 1.0, 3), 20) for _ in range(6)]
    rev = np.array([math.fsum(col) for col in np.array(per[::-1]).T]) / 6
    np.testing.assert_allclose(full, rev, rtol=0, atol=1e-12)


@pytest.mark.parametrize("J", [1, 3, 20])
def test_ig3_affine_gives_weights(J):
    p = Polynomial.parse("2*x1 - x2 + 4", 2)
    np.testing.assert_allclose(ig3(p, [3.0, 1.0], seed=0, J=J).scores, [2.0, -1.0], atol=1e-12)


def test_gaussian_parameters_validated(x1x2):
    with pytest.raises(ParameterError):
        ig2(x1x2, [1.0, 1.0], sigma=0.0)
    with pytest.raises(ParameterError):
        ig3(x1x2, [1.0, 1.0], J=0)


# -- dispatch and serialization


def test_all_nine_methods_agree_on_affine(affine_net):
    x = np.array([1.5, -2.0, 0.25, 1.0])
    want = AFFINE_W * x
    cfg = MethodConfig(epsilon=1e-13, steps=10)
    for name in METHOD_NAMES:
        if name == "gradient":
            continue
        scores = run_method(name, affine_net, x, cfg).scores
        if name in ("ig1", "ig2", "ig3"):
            scores = scores * x
        np.testing.assert_allclose(scores, want, rtol=0, atol=1e-10, err_msg=name)
        assert np.argmax(scores) == np.argmax(want)


def test_run_method_gaussian_baseline_spec(affine_net):
    cfg = MethodConfig(baseline=BaselineSpec("gaussian_delta", sigma=1.0, seed=3))
    r = run_method("integrated_gradients", affine_net, np.ones(4), cfg)
    assert r.scores.shape == (4,)


def test_run_method_unknown_name(affine_net):
    with pytest.raises(ParameterError):
        run_method("saliency", affine_net, np.ones(4))


def test_layerwise_methods_need_network(x1x2):
    with pytest.raises(ParameterError):
        run_method("deeplift_rescale", x1x2, [1.0, 1.0])


def test_baseline_spec_kinds():
    x = np.array([1.0, 2.0])
    assert BaselineSpec().resolve(x).tolist() == [0.0, 0.0]
    assert BaselineSpec("constant", value=3.0).resolve(x).tolist() == [3.0, 3.0]
    assert BaselineSpec("gaussian_multi", sigma=1.0, count=4).resolve(x).shape == (4, 2)
    with pytest.raises(ParameterError):
        BaselineSpec("gaussian_multi", sigma=-1.0)
    with pytest.raises(ParameterError):
        BaselineSpec("gaussian_multi", count=0)
    with pytest.raises(ShapeError):
        BaselineSpec("explicit", vector=(1.0,)).resolve(x)


def test_result_json_round_trip(x1sq_x2):
    r = integrated_gradients(x1sq_x2, [1.0, 2.0], [0.0, 0.0], m=10)
    doc = json.loads(r.to_json())
    assert set(doc) >= {"method", "scores", "baseline_info", "completeness_residual"}
    back = AttributionResult.from_dict(doc)
    assert back.scores.tolist() == r.scores.tolist() and back.method == r.method


def test_result_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        AttributionResult(np.array([1.0, np.nan]), "x", "none")


def test_exact_ig_agrees_with_fine_riemann(x1sq_x2):
    x, b = [1.3, -0.7], [0.2, 0.4]
    np.testing.assert_allclose(
        integrated_gradients(x1sq_x2, x, b, 4000, "midpoint").scores, exact_ig(x1sq_x2, x, b).scores, atol=1e-7
    )
