import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_graph, toy_nodes
from ignnet.autodiff import Tape, sigmoid, softmax
from ignnet.errors import ConfigurationError, IntegrityError, ShapeError, UnsupportedVersionError
from ignnet.graph import build_graph
from ignnet.model import (
    ArchitectureConfig,
    IgnnetModel,
    dumps_model,
    init_params,
    loads_model,
    message_passing_layer,
    readout,
)


def make_model(config=None, n_nodes=5, seed=0, x=None):
    config = config or ArchitectureConfig()
    x = toy_nodes(nodes=n_nodes)[0] if x is None else x
    return IgnnetModel(config, init_params(config, n_nodes, seed), toy_graph(x))


def _perturb(model, seed=1, scale=0.1):
    """Move every weight and running statistic away from its initial value."""
    rng = np.random.default_rng(seed)
    model.params.replace_weights({k: v + scale * rng.normal(size=v.shape) for k, v in model.params.weights.items()})
    for state in model.params.bn.values():
        state.running_mean = rng.normal(size=state.running_mean.shape) * 0.1
        state.running_var = rng.random(state.running_var.shape) + 0.5
    return model


# -- parameters ---------------------------------------------------------------

def test_init_is_deterministic():
    a, b = init_params(ArchitectureConfig(), 10, seed=3), init_params(ArchitectureConfig(), 10, seed=3)
    assert all(a.weights[k].tobytes() == b.weights[k].tobytes() for k in a.weights)
    c = init_params(ArchitectureConfig(), 10, seed=4)
    assert any(a.weights[k].tobytes() != c.weights[k].tobytes() for k in a.weights)


def test_readout_shapes_follow_fnn_widths():
    p = init_params(ArchitectureConfig(), 10)
    shapes = [p.weights[f"readout{j}.weight"].shape for j in range(1, 8)]
    assert shapes == [(128, 64), (64, 32), (32, 16), (16, 8), (8, 4), (4, 2), (2, 1)]
    assert p.weights["head.weight"].shape == (10,)
    assert sorted(k for k in p.bn if k.startswith("readout")) == ["readout_bn2", "readout_bn4", "readout_bn6"]


def test_opaque_hidden_shape():
    p = init_params(ArchitectureConfig(head="opaque"), 10)
    assert p.weights["opaque.hidden.weight"].shape == (1280, 1024)
    assert not any(k.startswith("readout") or k.startswith("head") for k in p.weights)


def test_multiclass_head_has_one_vector_per_class():
    p = init_params(ArchitectureConfig(n_classes=3), 7)
    assert p.weights["head.weight"].shape == (3, 7)
    assert p.weights["head.bias"].shape == (3,)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ArchitectureConfig(readout_widths=(128, 2)).validate()
    with pytest.raises(ConfigurationError):
        ArchitectureConfig(embed_dim=32, residual=(1,)).validate()  # 32 -> 64 cannot carry an identity skip
    with pytest.raises(ConfigurationError):
        ArchitectureConfig.with_layers(4)
    for layers in (6, 3, 1):
        ArchitectureConfig.with_layers(layers).validate()
    with pytest.raises(ConfigurationError):
        init_params(ArchitectureConfig(), 0)


def test_params_are_read_only():
    p = init_params(ArchitectureConfig(), 3)
    with pytest.raises(ValueError):
        p.weights["head.bias"][0] = 1.0


# -- message passing ------------------------------------------------------------

def test_message_passing_examples():
    tape = Tape()
    h = np.array([[[-1.0, 2.0], [3.0, -4.0]]])
    assert message_passing_layer(tape, h, np.eye(2), np.eye(2)).value.tolist() == [[[0.0, 2.0], [3.0, 0.0]]]
    out = message_passing_layer(tape, np.array([[[2.0], [0.0]]]), np.full((2, 2), 0.5), np.array([[1.0]]))
    assert out.value.tolist() == [[[1.0], [1.0]]]
    zero = message_passing_layer(tape, np.zeros((1, 2, 3)), np.full((2, 2), 0.5), np.ones((3, 4)))
    assert not zero.value.any()
    with pytest.raises(ShapeError):
        message_passing_layer(tape, np.zeros((1, 3, 2)), np.eye(2), np.eye(2))


# -- forward ------------------------------------------------------------------

def test_zero_head_gives_one_half():
    model = make_model()
    weights = dict(model.params.weights)
    weights["head.weight"] = np.zeros(5)
    model.params.replace_weights(weights)
    x = np.random.default_rng(0).random((20, 5))
    assert (model.predict_proba(x) == 0.5).all()


def test_hand_trace_on_width_one_network():
    config = ArchitectureConfig(embed_dim=1, mp_widths=(1, 1), bn_after=(), residual=(2,),
                                readout_widths=(1, 1), readout_bn_after=())
    corr = np.array([[1.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 1.0]])
    graph = build_graph(corr, ["a", "b", "c"], 2.0)
    params = init_params(config, 3)
    values = {
        "embed.weight": 1.5, "embed.bias": -0.2, "mp1.weight": 0.8, "mp2.weight": -1.1,
        "readout1.weight": 0.7, "readout1.bias": 0.05,
    }
    weights = {k: np.full(v.shape, values[k]) for k, v in params.weights.items() if k in values}
    weights["head.weight"] = np.array([0.9, -0.4, 1.3])
    weights["head.bias"] = np.array([-0.25])
    params.replace_weights(weights)
    model = IgnnetModel(config, params, graph)
    x = [0.2, 0.9, 0.5]

    # spreadsheet-style trace in plain Python
    a = [[2.0, 0.6, 0.0], [0.6, 2.0, -0.3], [0.0, -0.3, 2.0]]
    deg = [sum(r) for r in a]
    an = [[a[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(3)] for i in range(3)]
    h0 = [1.5 * v - 0.2 for v in x]
    h1 = [max(0.0, 0.8 * sum(an[i][j] * h0[j] for j in range(3))) for i in range(3)]
    h2 = [max(0.0, -1.1 * sum(an[i][j] * h1[j] for j in range(3))) + h1[i] for i in range(3)]
    g = [1 / (1 + math.exp(-(0.7 * v + 0.05))) for v in h2]
    logit = 0.9 * g[0] - 0.4 * g[1] + 1.3 * g[2] - 0.25
    expected = 1 / (1 + math.exp(-logit))

    out = model.forward(np.array(x))
    np.testing.assert_allclose(out.node_values[0], g, rtol=1e-14)
    assert out.prediction[0] == pytest.approx(expected, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_binary_additivity_is_exact(seed):
    model = _perturb(make_model(seed=seed % 7), seed)
    x = np.random.default_rng(seed).random((16, 5))
    out = model.forward(x)
    for r in range(16):
        assert sigmoid(math.fsum(out.tau[r]) + out.bias) == out.prediction[r]


def test_multiclass_additivity_is_exact():
    config = ArchitectureConfig(n_classes=3)
    model = _perturb(make_model(config), 2, scale=0.5)
    out = model.forward(np.random.default_rng(1).random((12, 5)))
    for r in range(12):
        logits = np.array([math.fsum(out.tau[r, c]) for c in range(3)]) + out.bias
        assert np.array_equal(softmax(logits), out.prediction[r])
        assert out.prediction[r].sum() == pytest.approx(1.0)


def test_batch_and_single_row_predictions_agree():
    model = _perturb(make_model())
    x = np.random.default_rng(5).random((9, 5))
    batch = model.predict_proba(x)
    assert all(model.predict_proba(x[i])[0] == batch[i] for i in range(9))


def test_node_locality():
    # node 0 has no edges; its input must not reach the other nodes
    corr = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.5, 1.0]])
    config = ArchitectureConfig()
    graph = build_graph(corr, ["a", "b", "c"], 2.0)
    model = _perturb(IgnnetModel(config, init_params(config, 3, 0), graph))
    base = np.array([[0.3, 0.6, 0.1]])
    moved = base.copy()
    moved[0, 0] = 0.0
    g0, g1 = model.forward(base).node_values[0], model.forward(moved).node_values[0]
    assert g0[1:].tobytes() == g1[1:].tobytes()
    assert g0[0] != g1[0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-4, 4).filter(lambda a: abs(a) > 1e-3))
def test_readout_is_affine_in_inference_mode(seed, alpha):
    model = _perturb(make_model(), seed)
    model.params.set_training(False)
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(3, 5, 128))

    def f(v):
        tape = Tape()
        p = {k: tape.param(k, w) for k, w in model.params.weights.items()}
        return readout(tape, p, model.params, model.config, v).value

    zero = f(np.zeros_like(h))
    np.testing.assert_allclose(f(alpha * h) - zero, alpha * (f(h) - zero), rtol=1e-9, atol=1e-9)


def test_training_forward_updates_running_stats_only_in_training():
    model = make_model()
    x = np.random.default_rng(0).random((8, 5))
    before = model.params.bn["bn3"].running_mean.copy()
    model.forward(x)
    assert np.array_equal(before, model.params.bn["bn3"].running_mean)
    model.forward(x, training=True)
    assert not np.array_equal(before, model.params.bn["bn3"].running_mean)


def test_input_shape_mismatch():
    with pytest.raises(ShapeError):
        make_model().forward(np.zeros((2, 4)))


def test_opaque_forward_runs():
    model = _perturb(make_model(ArchitectureConfig(head="opaque")))
    out = model.forward(np.random.default_rng(0).random((4, 5)))
    assert out.tau is None and out.prediction.shape == (4,)
    assert ((out.prediction > 0) & (out.prediction < 1)).all()


# -- serialization --------------------------------------------------------------

@pytest.mark.parametrize("head", ["interpretable", "opaque"])
def test_roundtrip_is_bit_exact(head):
    model = _perturb(make_model(ArchitectureConfig(head=head)))
    model.metadata = {"seed": 3, "epochs": 12}
    again = loads_model(dumps_model(model))
    assert again.metadata == model.metadata
    x = np.random.default_rng(9).random((100, 5))
    assert model.predict_proba(x).tobytes() == again.predict_proba(x).tobytes()


def test_version_and_integrity_errors():
    text = dumps_model(make_model())
    doc = json.loads(text)
    doc["format"] = "ignnet-model/2"
    with pytest.raises(UnsupportedVersionError):
        loads_model(json.dumps(doc))
    with pytest.raises(IntegrityError):
        loads_model(text[: len(text) // 2])
    doc = json.loads(text)
    doc["metadata"] = {"tampered": True}
    with pytest.raises(IntegrityError):
        loads_model(json.dumps(doc))
