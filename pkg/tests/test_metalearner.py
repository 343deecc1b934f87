"""Objective oracles, boosting behaviour, and the recovery experiment."""

import numpy as np
import pytest

from featcast.metalearner import (
    GbdtModel,
    GbdtParams,
    MetaInstance,
    combine,
    fit,
    load_model,
    objective,
    predict_weights,
    save_model,
)
from featcast.rng import substream


class TestObjective:
    def test_identical_errors_zero_gradient(self, rng):
        c = np.full(4, 3.7)
        z = rng.standard_normal(4)
        loss, grad, _ = objective(z, c)
        assert np.isclose(loss, 3.7)
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_hand_values_two_models(self):
        loss, grad, hess = objective(np.zeros(2), np.array([0.0, 2.0]))
        assert loss == 1.0
        assert np.allclose(grad, [-0.5, 0.5])
        assert np.all(hess >= 1e-6)

    def test_gradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(20):
            z = rng.standard_normal(5) * 2
            c = rng.uniform(0, 20, 5)
            _, grad, _ = objective(z, c)
            for j in range(5):
                zp, zm = z.copy(), z.copy()
                zp[j] += h
                zm[j] -= h
                numeric = (objective(zp, c)[0] - objective(zm, c)[0]) / (2 * h)
                assert abs(numeric - grad[j]) < 1e-6

    def test_constant_error_shift_leaves_gradient_unchanged(self, rng):
        z = rng.standard_normal(4)
        c = rng.uniform(0, 10, 4)
        _, g1, _ = objective(z, c)
        _, g2, _ = objective(z, c + 5.0)
        assert np.allclose(g1, g2, atol=1e-12)

    def test_positive_scaling_preserves_gradient_signs(self, rng):
        z = rng.standard_normal(4)
        c = rng.uniform(0.1, 10, 4)
        _, g1, _ = objective(z, c)
        _, g2, _ = objective(z, 7.5 * c)
        assert np.array_equal(np.sign(g1), np.sign(g2))

    def test_hessian_floor_applies(self):
        _, _, hess = objective(np.zeros(2), np.array([0.0, 2.0]))
        assert np.all(hess == 1e-6)  # true curvature is 0 at w = 1/2


def _planted_instances(n=400, n_features=16, gap=40.0, seed=1):
    rng = substream(seed, "meta-test")
    X = rng.standard_normal((n, n_features))
    C = np.zeros((n, 2))
    pos = X[:, 0] > 0
    C[pos, 1] = gap
    C[~pos, 0] = gap
    return [MetaInstance(f"i{i}", X[i], C[i]) for i in range(n)], X, C


class TestFit:
    def test_identical_error_vectors_keep_uniform_weights(self, rng):
        X = rng.standard_normal((40, 4))
        insts = [MetaInstance(f"i{i}", X[i], np.full(3, 2.0)) for i in range(40)]
        model = fit(insts, ("a", "b", "c"), GbdtParams(rounds=10), seed=0)
        w = predict_weights(model, rng.standard_normal(4))
        assert np.allclose(w, 1.0 / 3.0, atol=1e-9)

    def test_synthetic_rule_recovered_on_holdout(self):
        insts, X, _ = _planted_instances()
        model = fit(insts[:300], ("A", "B"), GbdtParams(), seed=0)
        holdout = X[300:]
        W = predict_weights(model, holdout)
        correct = np.where(holdout[:, 0] > 0, W[:, 0], W[:, 1])
        assert correct.mean() >= 0.8

    def test_flipping_feature_zero_flips_argmax(self):
        insts, _, _ = _planted_instances()
        model = fit(insts, ("A", "B"), GbdtParams(), seed=0)
        x = np.zeros(16)
        x[0] = 2.0
        up = predict_weights(model, x)
        x[0] = -2.0
        down = predict_weights(model, x)
        assert up.argmax() != down.argmax()

    def test_training_loss_non_increasing(self):
        insts, _, _ = _planted_instances(n=100, gap=5.0)
        model = fit(insts, ("A", "B"), GbdtParams(rounds=30), seed=0)
        for prev, cur in zip(model.train_loss, model.train_loss[1:]):
            assert cur <= prev + 1e-9
        assert model.train_loss[-1] <= model.train_loss[0]

    def test_too_few_instances_rejected(self, rng):
        insts = [MetaInstance(f"i{i}", rng.standard_normal(4), np.ones(2)) for i in range(5)]
        with pytest.raises(ValueError, match="at least"):
            fit(insts, ("A", "B"))

    def test_determinism(self):
        insts, _, _ = _planted_instances(n=80)
        a = fit(insts, ("A", "B"), GbdtParams(rounds=15), seed=4)
        b = fit(insts, ("A", "B"), GbdtParams(rounds=15), seed=4)
        assert a.train_loss == b.train_loss
        xs = substream(0, "probe").standard_normal((10, 16))
        assert np.array_equal(predict_weights(a, xs), predict_weights(b, xs))


class TestPredictCombine:
    def test_untrained_model_uniform(self):
        model = GbdtModel(model_names=("a", "b", "c", "d"), n_features=5, params=GbdtParams())
        w = predict_weights(model, np.zeros(5))
        assert np.allclose(w, 0.25)

    def test_weights_sum_to_one(self, rng):
        insts, _, _ = _planted_instances(n=60)
        model = fit(insts, ("A", "B"), GbdtParams(rounds=5), seed=0)
        for _ in range(10):
            w = predict_weights(model, rng.standard_normal(16) * 3)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w > 0)

    def test_dimension_mismatch_rejected(self):
        model = GbdtModel(model_names=("a", "b"), n_features=4, params=GbdtParams())
        with pytest.raises(ValueError, match="feature dimension"):
            predict_weights(model, np.zeros(3))

    def test_one_hot_weights_select_model(self, rng):
        fcs = rng.standard_normal((3, 6))
        assert np.array_equal(combine(np.array([0.0, 1.0, 0.0]), fcs), fcs[1])

    def test_uniform_two_models_is_midpoint(self, rng):
        fcs = rng.standard_normal((2, 5))
        assert np.allclose(combine(np.array([0.5, 0.5]), fcs), fcs.mean(axis=0))

    def test_combination_stays_in_envelope(self, rng):
        for _ in range(10):
            w = rng.dirichlet(np.ones(4))
            fcs = rng.standard_normal((4, 7)) * 5
            mix = combine(w, fcs)
            assert np.all(mix <= fcs.max(axis=0) + 1e-12)
            assert np.all(mix >= fcs.min(axis=0) - 1e-12)


class TestSerialization:
    def test_round_trip_identical_predictions(self, tmp_path, rng):
        insts, _, _ = _planted_instances(n=120)
        model = fit(insts, ("A", "B"), GbdtParams(rounds=12), seed=0)
        path = tmp_path / "meta.txt"
        save_model(path, model)
        loaded = load_model(path)
        assert loaded.model_names == model.model_names
        xs = rng.standard_normal((20, 16))
        assert np.array_equal(predict_weights(model, xs), predict_weights(loaded, xs))

    def test_double_round_trip_identical_bytes(self, tmp_path):
        insts, _, _ = _planted_instances(n=60)
        model = fit(insts, ("A", "B"), GbdtParams(rounds=6), seed=0)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_model(p1, model)
        save_model(p2, load_model(p1))
        assert p1.read_bytes() == p2.read_bytes()
