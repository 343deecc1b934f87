"""Adam update oracles, evaluated directly from the recurrence."""

import numpy as np
import pytest

from featcast.adam import Adam


def _triple(w, g):
    return [("w", w, g)]


def test_zero_gradient_leaves_weights_unchanged():
    w = np.array([1.0, -2.0, 3.0])
    opt = Adam()
    opt.step(_triple(w, np.zeros(3)))
    assert np.array_equal(w, [1.0, -2.0, 3.0])


def test_first_step_is_signed_learning_rate():
    # bias-corrected first step: -lr * g / (|g| + eps') ~ -lr * sign(g)
    g = np.array([0.3, -4.0, 1e-3])
    w = np.zeros(3)
    opt = Adam(lr=1e-3)
    opt.step(_triple(w, g.copy()))
    expected = -1e-3 * g / (np.abs(g) + 1e-8)
    assert np.allclose(w, expected, rtol=1e-12)
    assert np.allclose(np.abs(w), 1e-3, rtol=1e-4)


def test_second_step_matches_recurrence_oracle():
    # evaluate the bias-corrected recurrence at t=1 and t=2 independently;
    # with a constant gradient the effective step never grows
    g = np.array([1.7])
    w = np.zeros(1)
    opt = Adam(lr=1e-3)
    opt.step(_triple(w, g.copy()))
    first_step = abs(w[0])
    before = w[0]
    opt.step(_triple(w, g.copy()))
    second_step = abs(w[0] - before)
    assert second_step <= first_step * (1 + 1e-12)

    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 1e-3
    m = v = 0.0
    expected = 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g[0]
        v = b2 * v + (1 - b2) * g[0] ** 2
        expected -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    assert np.isclose(w[0], expected, rtol=1e-12)


def test_growing_gradient_shrinks_relative_step():
    # second-moment growth: a larger repeat gradient moves the weight less
    # than proportionally (the t=2 update is damped by the inflated vhat)
    w1 = np.zeros(1)
    opt1 = Adam(lr=1e-3)
    opt1.step(_triple(w1, np.array([1.0])))
    opt1.step(_triple(w1, np.array([3.0])))
    w2 = np.zeros(1)
    opt2 = Adam(lr=1e-3)
    opt2.step(_triple(w2, np.array([1.0])))
    second_update = abs(w1[0] - w2[0])
    assert second_update < 1e-3  # a fresh t=1 step with g=3 would be ~lr


def test_step_counter_strictly_increases():
    opt = Adam()
    w = np.zeros(2)
    for expected_t in range(1, 6):
        opt.step(_triple(w, np.ones(2)))
        assert opt.t == expected_t


def test_nan_gradient_rejected_before_update():
    w = np.array([1.0, 2.0])
    opt = Adam()
    with pytest.raises(FloatingPointError, match="non-finite gradient"):
        opt.step(_triple(w, np.array([np.nan, 0.0])))
    assert np.array_equal(w, [1.0, 2.0])


def test_shape_mismatch_rejected():
    opt = Adam()
    with pytest.raises(ValueError, match="shape"):
        opt.step([("w", np.zeros(3), np.zeros(2))])


def test_moment_arrays_match_weight_shapes():
    opt = Adam()
    w = np.zeros((2, 3))
    opt.step(_triple(w, np.ones((2, 3))))
    assert opt._m["w"].shape == (2, 3)
    assert opt._v["w"].shape == (2, 3)
