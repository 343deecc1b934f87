"""Finite-difference verification of every backward pass."""

import numpy as np
import pytest

from conftest import check_network_gradients, grads_match, FD_H
from featcast.layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    GlobalAvgPool,
    Network,
    ReLU,
    sparse_xent,
)


def _net_for(kind: str, rng) -> tuple[Network, tuple[int, int, int]]:
    if kind == "conv1d":
        return Network([Conv1d(2, 3, 5, rng=rng), GlobalAvgPool(), Dense(3, 3, rng=rng)]), (4, 2, 9)
    if kind == "conv1d_even":
        return Network([Conv1d(1, 3, 8, rng=rng), GlobalAvgPool(), Dense(3, 3, rng=rng)]), (4, 1, 11)
    if kind == "batchnorm":
        return Network([Conv1d(1, 3, 3, rng=rng), BatchNorm1d(3), GlobalAvgPool(), Dense(3, 3, rng=rng)]), (5, 1, 7)
    if kind == "relu":
        return Network([Conv1d(1, 3, 3, rng=rng), ReLU(), GlobalAvgPool(), Dense(3, 3, rng=rng)]), (4, 1, 7)
    if kind == "dense":
        return Network([GlobalAvgPool(), Dense(2, 4, rng=rng), Dense(4, 3, rng=rng)]), (5, 2, 6)
    raise ValueError(kind)


@pytest.mark.parametrize("kind", ["conv1d", "conv1d_even", "batchnorm", "relu", "dense"])
def test_layer_gradients_match_finite_differences(kind, rng):
    for trial in range(3):
        net, shape = _net_for(kind, rng)
        x = rng.standard_normal(shape)
        labels = rng.integers(0, 3, size=shape[0])
        check_network_gradients(net, x, labels, rng, samples=12)


def test_full_stack_gradients(rng):
    net = Network(
        [
            Conv1d(1, 4, 8, rng=rng), BatchNorm1d(4), ReLU(),
            Conv1d(4, 6, 5, rng=rng), BatchNorm1d(6), ReLU(),
            Conv1d(6, 4, 3, rng=rng), BatchNorm1d(4), ReLU(),
            GlobalAvgPool(), Dense(4, 5, rng=rng), Dense(5, 3, rng=rng),
        ]
    )
    x = rng.standard_normal((6, 1, 12))
    labels = rng.integers(0, 3, size=6)
    check_network_gradients(net, x, labels, rng, samples=10)


def test_input_gradients_match_finite_differences(rng):
    net = Network([Conv1d(2, 3, 4, rng=rng), BatchNorm1d(3), ReLU(), GlobalAvgPool(), Dense(3, 3, rng=rng)])
    x = rng.standard_normal((4, 2, 9))
    labels = np.array([0, 1, 2, 0])
    net.zero_grad()
    logits = net.forward(x, training=True)
    _, dlogits = sparse_xent(logits, labels)
    g = dlogits
    for layer in reversed(net.layers):
        g = layer.backward(g)
    for _ in range(40):
        b, i, t = rng.integers(4), rng.integers(2), rng.integers(9)
        orig = x[b, i, t]
        x[b, i, t] = orig + FD_H
        lp, _ = sparse_xent(net.forward(x, True), labels)
        x[b, i, t] = orig - FD_H
        lm, _ = sparse_xent(net.forward(x, True), labels)
        x[b, i, t] = orig
        assert grads_match(g[b, i, t], (lp - lm) / (2 * FD_H))


def test_dense_quadratic_minimum_has_zero_gradient(rng):
    # loss = mean squared output; at w=0, b=0 the output is 0: a stationary point
    dense = Dense(3, 2)
    x = rng.standard_normal((4, 3))
    out = dense.forward(x, training=True)
    dense.backward(2 * out / out.size)
    assert np.allclose(dense.gw, 0.0) and np.allclose(dense.gb, 0.0)


def test_gap_preserves_mean_gradient_structure(rng):
    gap = GlobalAvgPool()
    x = rng.standard_normal((2, 3, 5))
    gap.forward(x, training=True)
    gout = rng.standard_normal((2, 3))
    gin = gap.backward(gout)
    assert np.allclose(gin.sum(axis=2), gout)
    assert np.allclose(gin, gout[:, :, None] / 5.0)
