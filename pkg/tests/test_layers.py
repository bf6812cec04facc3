"""Layer semantics: batch norm statistics, per-task norms, presets, state dicts."""

import numpy as np
import pytest
from gradcheck import fd_grad, rel_err

from qreg import tensor as T
from qreg.errors import ContractError, DataError, DimensionError
from qreg.layers import (
    BN_EPS,
    BatchNorm,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Model,
    PerTaskNorm,
    ReLU,
    build_cnn_small,
    build_mlp_multitask,
    build_mlp_small,
    forward,
)


def rng_():
    return np.random.default_rng(42)


def test_dense_forward_matches_affine_oracle():
    rng = rng_()
    layer = Dense(5, 3, rng)
    x = rng.standard_normal((7, 5))
    out = layer.forward(T.constant(x), False, None)
    np.testing.assert_allclose(out.value, x @ layer.weight.value.T + layer.bias.value, rtol=1e-12)


def test_batchnorm_train_normalizes_and_updates_running_stats():
    rng = rng_()
    layer = BatchNorm(4)
    x = rng.standard_normal((32, 4)) * 3.0 + 1.5
    out = layer.forward(T.constant(x), True, None).value
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-3)  # eps shifts it slightly
    # running <- 0.9*initial + 0.1*batch, with initial stats (0, 1)
    np.testing.assert_allclose(layer.running_mean, 0.1 * x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(layer.running_var, 0.9 + 0.1 * x.var(axis=0), rtol=1e-12)


def test_batchnorm_eval_uses_running_stats():
    rng = rng_()
    layer = BatchNorm(3)
    layer.running_mean = np.array([1.0, -1.0, 0.5])
    layer.running_var = np.array([4.0, 1.0, 9.0])
    x = rng.standard_normal((5, 3))
    out = layer.forward(T.constant(x), False, None).value
    want = (x - layer.running_mean) / np.sqrt(layer.running_var + BN_EPS)
    np.testing.assert_allclose(out, want, rtol=1e-12)


def test_batchnorm_rejects_singleton_train_batch():
    layer = BatchNorm(3)
    with pytest.raises(ContractError):
        layer.forward(T.constant(np.zeros((1, 3))), True, None)
    # eval mode accepts a single example
    layer.forward(T.constant(np.zeros((1, 3))), False, None)


def test_batchnorm_gradients_flow_through_batch_stats():
    rng = rng_()
    x = rng.standard_normal((6, 5))
    g0 = rng.uniform(0.5, 1.5, size=5)
    b0 = rng.uniform(-0.5, 0.5, size=5)
    layer = BatchNorm(5)
    layer.gamma.value = g0.copy()
    layer.beta.value = b0.copy()
    xn = T.parameter(x)
    out = layer.forward(xn, True, None)
    weights = rng.standard_normal(out.shape)
    T.backward(T.reduce_sum(T.mul(out, T.constant(weights))))

    def f(xa, ga, ba):
        mu = xa.mean(axis=0)
        var = xa.var(axis=0)
        norm = (xa - mu) / np.sqrt(var + BN_EPS)
        return float(((norm * ga + ba) * weights).sum())

    for i, grad in enumerate([xn.grad, layer.gamma.grad, layer.beta.grad]):
        fd = fd_grad(f, [x, g0, b0], i)
        assert rel_err(grad, fd) < 1e-4, f"operand {i}"


def test_batchnorm_conv_input_normalizes_per_channel():
    rng = rng_()
    layer = BatchNorm(3)
    x = rng.standard_normal((4, 3, 5, 5)) * 2.0 + 0.7
    out = layer.forward(T.constant(x), True, None).value
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    np.testing.assert_allclose(layer.running_mean, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-12)


def test_per_task_norm_equals_independent_single_feature_norms():
    rng = rng_()
    tasks = 4
    x = rng.standard_normal((16, tasks)) * 2.0 + 0.3
    joint = PerTaskNorm(tasks)
    joint.gamma.value = rng.uniform(0.5, 1.5, size=tasks)
    joint.beta.value = rng.uniform(-1, 1, size=tasks)
    got = joint.forward(T.constant(x), True, None).value
    for t in range(tasks):
        single = BatchNorm(1)
        single.gamma.value = joint.gamma.value[t : t + 1].copy()
        single.beta.value = joint.beta.value[t : t + 1].copy()
        want = single.forward(T.constant(x[:, t : t + 1]), True, None).value
        np.testing.assert_allclose(got[:, t : t + 1], want, rtol=1e-12)
        np.testing.assert_allclose(joint.running_mean[t : t + 1], single.running_mean, rtol=1e-12)
        np.testing.assert_allclose(joint.running_var[t : t + 1], single.running_var, rtol=1e-12)


def test_per_task_norm_exposes_task_views():
    layer = PerTaskNorm(6)
    views = layer.task_norms
    assert len(views) == 6
    layer.gamma.value = np.arange(6.0)
    assert views[3].gamma[0] == 3.0
    layer.running_mean[2] = 7.0
    assert views[2].running_mean[0] == 7.0


def test_dropout_layer_contracts():
    with pytest.raises(ContractError):
        Dropout(1.0)
    layer = Dropout(0.5)
    x = T.constant(np.ones((4, 4)))
    with pytest.raises(ContractError):
        layer.forward(x, True, None)
    out = layer.forward(x, False, None)
    assert out is x


def test_flatten_and_relu():
    x = T.constant(np.arange(24.0).reshape(2, 3, 2, 2))
    flat = Flatten().forward(x, False, None)
    assert flat.shape == (2, 12)
    r = ReLU().forward(T.constant(np.array([[-1.0, 2.0]])), False, None)
    np.testing.assert_array_equal(r.value, [[0.0, 2.0]])


def test_mlp_small_architecture():
    m = build_mlp_small(784, 10, rng_())
    dense = [l for l in m.layers if isinstance(l, Dense)]
    assert [(d.in_features, d.out_features) for d in dense] == [(784, 256), (256, 128), (128, 10)]
    assert m.head == "softmax" and m.out_dim == 10
    out = forward(m, np.zeros((2, 784)))
    assert out.shape == (2, 10)


def test_mlp_small_dropout_insertion():
    m = build_mlp_small(20, 3, rng_(), dropout_p=0.25)
    assert sum(isinstance(l, Dropout) for l in m.layers) == 2
    m0 = build_mlp_small(20, 3, rng_(), dropout_p=0.0)
    assert sum(isinstance(l, Dropout) for l in m0.layers) == 0


def test_cnn_small_architecture_and_shapes():
    m = build_cnn_small((1, 8, 8), 5, rng_())
    convs = [l for l in m.layers if isinstance(l, Conv2d)]
    bns = [l for l in m.layers if isinstance(l, BatchNorm)]
    dense = [l for l in m.layers if isinstance(l, Dense)]
    assert len(convs) == 2 and len(bns) == 2 and len(dense) == 2
    m.train_mode = True
    out = forward(m, np.random.default_rng(0).standard_normal((3, 1, 8, 8)))
    assert out.shape == (3, 5)


def test_multitask_architecture():
    m = build_mlp_multitask(32, 12, rng_())
    assert m.head == "sigmoid" and m.out_dim == 12
    assert isinstance(m.layers[-1], PerTaskNorm)
    assert len(m.layers[-1].task_norms) == 12
    out = forward(m, np.zeros((4, 32)))
    assert out.shape == (4, 12)


def test_forward_rejects_wrong_input_shape():
    m = build_mlp_small(10, 3, rng_())
    with pytest.raises(DimensionError):
        forward(m, np.zeros((2, 11)))


def test_state_dict_round_trip_and_errors():
    rng = rng_()
    m = build_cnn_small((1, 6, 6), 4, rng)
    m.train_mode = True
    forward(m, rng.standard_normal((4, 1, 6, 6)))  # move running stats off init
    m.train_mode = False
    state = m.state_dict()

    m2 = build_cnn_small((1, 6, 6), 4, np.random.default_rng(7))
    m2.load_state_dict(state)
    for (_, a), (_, b) in zip(m.named_parameters(), m2.named_parameters()):
        np.testing.assert_array_equal(a.value, b.value)
    x = rng.standard_normal((2, 1, 6, 6))
    np.testing.assert_array_equal(forward(m, x).value, forward(m2, x).value)

    bad = dict(state)
    bad.pop(next(iter(bad)))
    with pytest.raises(DataError):
        m2.load_state_dict(bad)
    bad2 = dict(state)
    first = next(iter(bad2))
    bad2[first] = np.zeros((1, 2, 3))
    with pytest.raises(DimensionError):
        m2.load_state_dict(bad2)


def test_model_rejects_unknown_head():
    with pytest.raises(ContractError):
        Model([], "linear", 3, (4,))


def test_weight_nodes_excludes_norm_and_bias():
    m = build_cnn_small((1, 6, 6), 4, rng_())
    weights = m.weight_nodes()
    assert len(weights) == 4  # two conv kernels, two dense matrices
    assert all(w.value.ndim >= 2 for w in weights)
