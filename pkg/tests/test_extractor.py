"""Classifier training, feature extraction, and aggregation contracts."""

import numpy as np
import pytest

from featcast.data import Dataset, TimeSeries, Window, WindowParams, make_windows, split, windows_tensor
from featcast.extractor import (
    FeatureVector,
    NetworkConfig,
    aggregate,
    extract_static_features,
    extract_window_features,
    load_extractor,
    save_extractor,
    train,
    window_features,
)
from featcast.rng import substream

L = 16


def _sanity_windows():
    # two trivially separable classes: constant-zero vs alternating +-1
    wins = []
    alt = np.array([1.0, -1.0] * (L // 2))
    for i in range(12):
        wins.append(Window(0, i, np.zeros(L), 0.0, 0.0))
        wins.append(Window(1, i, alt.copy(), 0.0, 1.0))
    return wins


@pytest.fixture(scope="module")
def sanity_extractor():
    return train(_sanity_windows(), NetworkConfig(n_classes=2, window_length=L), epochs=50, batch_size=8, seed=3)


class TestTrain:
    def test_separable_classes_reach_full_accuracy(self, sanity_extractor):
        assert sanity_extractor.report.accuracy == 1.0

    def test_single_class_rejected(self):
        wins = [Window(0, i, np.zeros(L), 0.0, 0.0) for i in range(4)]
        with pytest.raises(ValueError, match="at least 2 classes"):
            train(wins, NetworkConfig(n_classes=2, window_length=L), epochs=1)

    def test_missing_class_rejected(self):
        wins = [Window(0, 0, np.zeros(L), 0.0, 0.0), Window(2, 0, np.ones(L), 0.0, 0.0)]
        with pytest.raises(ValueError, match="without any window"):
            train(wins, NetworkConfig(n_classes=3, window_length=L), epochs=1)

    def test_same_seed_identical_report_and_weights(self):
        a = train(_sanity_windows(), NetworkConfig(2, L), epochs=8, batch_size=8, seed=5)
        b = train(_sanity_windows(), NetworkConfig(2, L), epochs=8, batch_size=8, seed=5)
        assert a.report == b.report
        for (_, wa, _), (_, wb, _) in zip(a.net.params(), b.net.params()):
            assert np.array_equal(wa, wb)

    def test_training_log_shape(self, sanity_extractor):
        assert sanity_extractor.report.epochs_run == len(sanity_extractor.report.log)
        epochs = [row[0] for row in sanity_extractor.report.log]
        assert epochs == list(range(1, len(epochs) + 1))


class TestFeatures:
    def test_feature_dimension_is_sixteen_by_default(self, sanity_extractor):
        x, _ = windows_tensor(_sanity_windows())
        feats = window_features(sanity_extractor, x)
        assert feats.shape[1] == 16

    def test_same_window_same_features(self, sanity_extractor):
        wins = _sanity_windows()[:2]
        feats = extract_window_features(sanity_extractor, wins + wins, ["a", "b", "a", "b"])
        assert np.array_equal(feats[0].values, feats[2].values)
        assert np.array_equal(feats[1].values, feats[3].values)

    def test_all_zero_window_finite(self, sanity_extractor):
        feats = window_features(sanity_extractor, np.zeros((1, 1, L)))
        assert np.all(np.isfinite(feats))

    def test_length_mismatch_rejected(self, sanity_extractor):
        with pytest.raises(ValueError, match="does not match extractor length"):
            window_features(sanity_extractor, np.zeros((1, 1, L + 2)))

    def test_decapitation_matches_penultimate_activations(self, sanity_extractor, rng):
        # full-classifier forward up to the feature layer == decapitated output
        x = rng.standard_normal((5, 1, L))
        net = sanity_extractor.net
        manual = x
        for layer in net.layers[:-1]:
            manual = layer.forward(manual, False)
        feats = window_features(sanity_extractor, x)
        assert np.array_equal(manual, feats)


class TestAggregate:
    def _fv(self, values, offset, sid="S"):
        return FeatureVector(series_id=sid, kind="window", values=np.asarray(values, float), window_offset=offset)

    def test_single_window_equals_itself_for_both_methods(self):
        fv = self._fv([1.0, 2.0, 3.0], 0)
        assert np.array_equal(aggregate([fv], "mean").values, fv.values)
        assert np.array_equal(aggregate([fv], "medoid").values, fv.values)

    def test_two_windows_mean_is_midpoint_medoid_lowest_offset(self):
        a = self._fv([0.0, 0.0], 4)
        b = self._fv([2.0, 2.0], 1)
        assert np.array_equal(aggregate([a, b], "mean").values, [1.0, 1.0])
        medoid = aggregate([a, b], "medoid")
        assert medoid.window_offset == 1  # tie resolves to the lower offset

    def test_medoid_matches_brute_force(self, rng):
        for _ in range(10):
            vecs = [self._fv(rng.standard_normal(5), i) for i in range(5)]
            got = aggregate(vecs, "medoid")
            pts = np.stack([v.values for v in vecs])
            sums = [np.linalg.norm(pts - pts[i], axis=1).sum() for i in range(5)]
            assert np.array_equal(got.values, pts[int(np.argmin(sums))])

    def test_medoid_is_member_mean_generally_not(self, rng):
        vecs = [self._fv(rng.standard_normal(4), i) for i in range(7)]
        pts = [tuple(v.values) for v in vecs]
        assert tuple(aggregate(vecs, "medoid").values) in pts
        assert tuple(aggregate(vecs, "mean").values) not in pts

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            aggregate([], "mean")


class TestStaticFeatures:
    def _dataset(self, n=4, seed=0):
        rng = substream(seed, "static-test")
        series = [
            TimeSeries(f"S{i}", np.sin(np.arange(60) / (i + 2.0)) + 0.1 * rng.standard_normal(60))
            for i in range(n)
        ]
        return Dataset(series, horizon=6)

    def _extractor(self, splits, params):
        return train(
            make_windows(splits, params, seed=0),
            NetworkConfig(n_classes=len(splits), window_length=params.length),
            epochs=4,
            batch_size=16,
            seed=0,
            series_ids=[s.id for s in splits],
        )

    def test_one_row_per_series_in_order(self):
        splits = split(self._dataset())
        params = WindowParams(length=16, stride=8, max_per_series=8)
        ex = self._extractor(splits, params)
        fm = extract_static_features(ex, splits, params, "mean", seed=0)
        assert fm.ids == [s.id for s in splits]
        assert fm.values.shape == (4, 16)

    def test_reordering_series_reorders_rows(self):
        splits = split(self._dataset())
        params = WindowParams(length=16, stride=8, max_per_series=8)
        ex = self._extractor(splits, params)
        fm = extract_static_features(ex, splits, params, "mean", seed=0)
        rev = list(reversed(splits))
        fm_rev = extract_static_features(ex, rev, params, "mean", seed=0, transfer=True)
        assert fm_rev.ids == list(reversed(fm.ids))
        assert np.allclose(fm_rev.values, fm.values[::-1], atol=1e-12)

    def test_mean_and_medoid_differ_on_asymmetric_series(self):
        splits = split(self._dataset())
        params = WindowParams(length=16, stride=4, max_per_series=8)
        ex = self._extractor(splits, params)
        mean_fm = extract_static_features(ex, splits, params, "mean", seed=0)
        med_fm = extract_static_features(ex, splits, params, "medoid", seed=0)
        assert not np.allclose(mean_fm.values, med_fm.values)

    def test_transfer_requires_flag(self):
        splits = split(self._dataset())
        params = WindowParams(length=16, stride=8, max_per_series=8)
        ex = self._extractor(splits, params)
        other = split(self._dataset(seed=9))
        renamed = [type(s)(f"X{i}", s.train, s.test, s.seasonal_period) for i, s in enumerate(other)]
        with pytest.raises(ValueError, match="transfer"):
            extract_static_features(ex, renamed, params, "mean", seed=0)
        fm = extract_static_features(ex, renamed, params, "mean", seed=0, transfer=True)
        assert fm.values.shape == (4, 16)

    def test_extracting_twice_is_identical(self):
        splits = split(self._dataset())
        params = WindowParams(length=16, stride=8, max_per_series=8)
        ex = self._extractor(splits, params)
        a = extract_static_features(ex, splits, params, "mean", seed=0)
        b = extract_static_features(ex, splits, params, "mean", seed=0)
        assert np.array_equal(a.values, b.values)


class TestSerialization:
    def test_save_load_round_trip(self, tmp_path, sanity_extractor, rng):
        path = tmp_path / "extractor.txt"
        save_extractor(path, sanity_extractor)
        loaded = load_extractor(path)
        assert loaded.config == sanity_extractor.config
        assert loaded.report.accuracy == sanity_extractor.report.accuracy
        assert loaded.report.epochs_run == sanity_extractor.report.epochs_run
        x = rng.standard_normal((3, 1, L))
        assert np.array_equal(
            window_features(sanity_extractor, x), window_features(loaded, x)
        )


def test_class_representation_on_synthetic(rng):
    # well-trained features cluster by class: intra < inter distance
    from featcast.synthetic import mixture_dataset

    ds = mixture_dataset(n_series=6, length=160, horizon=8, seed=4)
    splits = split(ds)
    params = WindowParams(length=24, stride=6, max_per_series=16)
    wins = make_windows(splits, params, seed=1)
    ex = train(wins, NetworkConfig(n_classes=6, window_length=24), epochs=40, batch_size=64, seed=1)
    assert ex.report.accuracy >= 0.9
    ids = [s.id for s in splits]
    feats = extract_window_features(ex, wins, [ids[w.class_index] for w in wins])
    X = np.stack([f.values for f in feats])
    lbl = np.array([w.class_index for w in wins])
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(len(X), 1)
    same = (lbl[:, None] == lbl[None, :])[iu]
    assert D[iu][same].mean() < D[iu][~same].mean()

    # aggregate proximity: the mean feature sits no farther from its nearest
    # same-series window than that series' own feature spread
    for c in range(6):
        members = np.flatnonzero(lbl == c)
        group = X[members]
        mean_vec = group.mean(axis=0)
        nearest = np.linalg.norm(group - mean_vec, axis=1).min()
        spread = D[np.ix_(members, members)].max()
        assert nearest <= spread + 1e-12
