"""Feature-extraction and LDA tests, with brute-force discriminant oracles."""
import math

import numpy as np
import pytest

from emgvit.baseline import (
    FEATURE_NAMES,
    FeatureVector,
    burg_ar,
    channel_stats,
    export_features_csv,
    extract_features,
    lda_fit,
    lda_predict,
    lda_predict_many,
    run_cv_lda,
    yule_walker_ar,
)
from emgvit.errors import ContractError, IllConditionedError, ParameterError, ShapeError
from emgvit.segment import WindowTensor


def window_from_channels(channels, gesture=0, subject=0, repetition=0):
    """channels: (T, C) array shaped into a (T, 1, C) grid."""
    channels = np.asarray(channels, dtype=float)
    return WindowTensor(
        data=channels[:, None, :],
        gesture_id=gesture,
        subject_id=subject,
        repetition_id=repetition,
    )


def generate_ar2(a1, a2, n, rng, burn=200):
    x = np.zeros(n + burn)
    e = rng.standard_normal(n + burn)
    for t in range(2, n + burn):
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + e[t]
    return x[burn:]


class TestChannelStats:
    def test_constant_channel(self):
        mav, zc, wl, rms, ssc = channel_stats(np.full(16, 0.5))
        assert (mav, zc, wl, rms, ssc) == (0.5, 0, 0.0, 0.5, 0)

    def test_alternating_hand_enumeration(self):
        # [1, -1, 1, -1]: three sign changes, steps of 2 each, unit magnitude
        mav, zc, wl, rms, ssc = channel_stats(np.array([1.0, -1.0, 1.0, -1.0]))
        assert zc == 3
        assert wl == 6.0
        assert mav == 1.0
        assert rms == 1.0

    def test_ssc_counts_extrema(self):
        # [0, 1, 0, 1, 0]: every interior sample is a local extremum
        _, _, _, _, ssc = channel_stats(np.array([0.0, 1.0, 0.0, 1.0, 0.0]))
        assert ssc == 3

    def test_zc_threshold_suppresses_small_steps(self):
        x = np.array([0.01, -0.01, 0.01, -0.01])
        assert channel_stats(x, zc_threshold=0.0)[1] == 3
        assert channel_stats(x, zc_threshold=0.1)[1] == 0

    def test_scale_invariance_of_counts(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(64)
        _, zc1, wl1, _, ssc1 = channel_stats(x)
        mav2, zc2, wl2, rms2, ssc2 = channel_stats(5.0 * x)
        assert (zc1, ssc1) == (zc2, ssc2)
        np.testing.assert_allclose(wl2, 5.0 * wl1, rtol=1e-12)
        np.testing.assert_allclose(mav2, 5.0 * np.mean(np.abs(x)), rtol=1e-12)


class TestBurg:
    def test_recovers_ar2_mean_estimate(self):
        # A single 64-sample realization carries ~0.1 sampling error, so the
        # bias check averages Burg fits over 50 independent windows of T=64.
        a1, a2 = 1.0, -0.5
        rng = np.random.default_rng(1)
        estimates = [burg_ar(generate_ar2(a1, a2, 64, rng), 2) for _ in range(50)]
        mean_est = np.mean(estimates, axis=0)
        assert np.max(np.abs(mean_est - [a1, a2])) < 0.05

    def test_ar4_on_ar2_has_small_trailing_terms(self):
        rng = np.random.default_rng(2)
        x = generate_ar2(1.0, -0.5, 4096, rng)
        est = burg_ar(x, 4)
        assert abs(est[0] - 1.0) < 0.1 and abs(est[1] + 0.5) < 0.1
        assert abs(est[2]) < 0.1 and abs(est[3]) < 0.1

    def test_poles_inside_unit_circle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.standard_normal(64)
            a = burg_ar(x, 4)
            poles = np.roots(np.concatenate([[1.0], -a]))
            assert np.all(np.abs(poles) <= 1.0 + 1e-9)

    def test_too_short_rejected(self):
        with pytest.raises(ShapeError):
            burg_ar(np.ones(4), 4)

    def test_yule_walker_agrees_on_long_series(self):
        rng = np.random.default_rng(4)
        x = generate_ar2(0.8, -0.4, 8192, rng)
        np.testing.assert_allclose(burg_ar(x, 2), yule_walker_ar(x, 2), atol=0.02)


class TestExtractFeatures:
    def test_ordering_and_grid_order(self):
        # channel c holds constant value c+1, so MAV/RMS identify the column
        t = 8
        channels = np.tile(np.arange(1.0, 4.0), (t, 1))
        fv = extract_features(window_from_channels(channels))
        assert fv.values.size == 3 * 9
        for c in range(3):
            base = c * 9
            assert fv.values[base + FEATURE_NAMES.index("MAV")] == c + 1
            assert fv.values[base + FEATURE_NAMES.index("RMS")] == c + 1
            assert fv.values[base + FEATURE_NAMES.index("WL")] == 0.0

    def test_labels_carried(self):
        fv = extract_features(
            window_from_channels(np.ones((8, 2)), gesture=5, subject=2, repetition=3)
        )
        assert (fv.gesture_id, fv.subject_id, fv.repetition_id) == (5, 2, 3)

    def test_too_short_window(self):
        with pytest.raises(ShapeError):
            extract_features(window_from_channels(np.ones((4, 2))))

    def test_negative_threshold_rejected(self):
        with pytest.raises(ParameterError):
            extract_features(window_from_channels(np.ones((8, 2))), zc_threshold=-1.0)

    def test_ar_method_selectable(self):
        rng = np.random.default_rng(5)
        w = window_from_channels(rng.standard_normal((64, 2)))
        fb = extract_features(w, ar_method="burg")
        fy = extract_features(w, ar_method="yule_walker")
        assert not np.array_equal(fb.values, fy.values)
        with pytest.raises(ParameterError):
            extract_features(w, ar_method="levinson")


def blob_features(rng, means, n_per_class, noise=0.3):
    feats = []
    for gid, mu in enumerate(means):
        for i in range(n_per_class):
            feats.append(
                FeatureVector(
                    values=np.asarray(mu) + noise * rng.standard_normal(len(mu)),
                    gesture_id=gid,
                    subject_id=0,
                    repetition_id=i % 5,
                )
            )
    return feats


class TestLda:
    def test_two_point_classes_boundary_at_midpoint(self):
        feats = [
            FeatureVector(np.array([0.0]), 0, 0, 0),
            FeatureVector(np.array([0.0]), 0, 0, 1),
            FeatureVector(np.array([2.0]), 1, 0, 0),
            FeatureVector(np.array([2.0]), 1, 0, 1),
        ]
        model = lda_fit(feats, shrinkage=0.1)
        assert lda_predict(model, np.array([0.9])) == 0
        assert lda_predict(model, np.array([1.1])) == 1
        # exact midpoint: deterministic tie-break to the lower class id
        assert lda_predict(model, np.array([1.0])) == 0

    def test_duplicated_column_needs_shrinkage(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal(20)
        feats = [
            FeatureVector(np.array([z[i], z[i]]), int(i < 10), 0, i % 5)
            for i in range(20)
        ]
        with pytest.raises(IllConditionedError):
            lda_fit(feats, shrinkage=0.0)
        lda_fit(feats, shrinkage=0.1)  # succeeds

    def test_class_means_match_sample_means(self):
        rng = np.random.default_rng(7)
        means = [[0, 0, 0, 0], [3, 1, -2, 0.5], [-1, 4, 0, 2]]
        feats = blob_features(rng, means, 100)
        model = lda_fit(feats, shrinkage=0.05)
        x = np.stack([f.values for f in feats])
        y = np.array([f.gesture_id for f in feats])
        for i, cid in enumerate(model.class_ids):
            np.testing.assert_allclose(
                model.class_means[i], x[y == cid].mean(axis=0), atol=1e-12
            )

    def test_priors_sum_to_one(self):
        rng = np.random.default_rng(8)
        feats = blob_features(rng, [[0, 0], [4, 4]], 50) + blob_features(
            rng, [[-4, 2]], 25
        )[0:25]
        # relabel third blob
        feats = feats[:100] + [
            FeatureVector(f.values, 2, 0, f.repetition_id) for f in feats[100:]
        ]
        model = lda_fit(feats, shrinkage=0.05)
        np.testing.assert_allclose(model.priors.sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(model.priors, [0.4, 0.4, 0.2], atol=1e-12)

    def test_feature_at_class_mean_classified_to_it(self):
        rng = np.random.default_rng(9)
        means = [[0, 0], [10, 0], [0, 10]]
        model = lda_fit(blob_features(rng, means, 60), shrinkage=0.05)
        for i, mu in enumerate(means):
            assert lda_predict(model, np.array(mu, dtype=float)) == i

    def test_predictions_match_mahalanobis_oracle(self):
        rng = np.random.default_rng(10)
        model = lda_fit(blob_features(rng, [[0.0, 0.0], [2.0, 1.0]], 80), shrinkage=0.05)
        sinv = model.shared_covariance_inverse
        points = rng.standard_normal((200, 2)) * 2 + 1

        def oracle_predict(x):
            best, best_score = None, -math.inf
            for i, cid in enumerate(model.class_ids):
                diff = [x[0] - model.class_means[i][0], x[1] - model.class_means[i][1]]
                maha = sum(
                    diff[a] * sinv[a][b] * diff[b] for a in range(2) for b in range(2)
                )
                score = -0.5 * maha + math.log(model.priors[i])
                if score > best_score:
                    best, best_score = int(cid), score
            return best

        got = lda_predict_many(model, points)
        want = [oracle_predict(p) for p in points]
        assert list(got) == want

    def test_scale_equivariance_of_predictions(self):
        rng = np.random.default_rng(11)
        feats = blob_features(rng, [[0, 0, 1], [3, -1, 0]], 60)
        points = rng.standard_normal((50, 3))
        base = lda_predict_many(lda_fit(feats, 0.05), points)
        scaled_feats = [
            FeatureVector(7.5 * f.values, f.gesture_id, f.subject_id, f.repetition_id)
            for f in feats
        ]
        scaled = lda_predict_many(lda_fit(scaled_feats, 0.05), 7.5 * points)
        assert np.array_equal(base, scaled)

    def test_training_accuracy_on_separated_classes(self):
        rng = np.random.default_rng(12)
        feats = blob_features(rng, [[0, 0], [50, 50]], 40, noise=0.5)
        model = lda_fit(feats, shrinkage=0.05)
        x = np.stack([f.values for f in feats])
        y = np.array([f.gesture_id for f in feats])
        assert np.mean(lda_predict_many(model, x) == y) == 1.0

    def test_needs_two_samples_per_class(self):
        feats = [
            FeatureVector(np.array([0.0]), 0, 0, 0),
            FeatureVector(np.array([1.0]), 1, 0, 0),
            FeatureVector(np.array([1.1]), 1, 0, 1),
        ]
        with pytest.raises(ContractError):
            lda_fit(feats, shrinkage=0.1)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(13)
        model = lda_fit(blob_features(rng, [[0, 0], [4, 4]], 30), shrinkage=0.05)
        with pytest.raises(ShapeError):
            lda_predict(model, np.zeros(3))


class TestLdaCv:
    def separable_windows(self, seed=14):
        rng = np.random.default_rng(seed)
        windows = []
        for g in range(3):
            for r in range(5):
                for _ in range(4):
                    data = (g + 1) * 0.3 + 0.01 * rng.standard_normal((8, 2, 2))
                    windows.append(
                        WindowTensor(data=data, gesture_id=g, subject_id=0, repetition_id=r)
                    )
        return windows

    def test_cv_deterministic_and_accurate(self):
        windows = self.separable_windows()
        a = run_cv_lda(windows, shrinkage=0.1)
        b = run_cv_lda(windows, shrinkage=0.1)
        assert a.fold_accuracies == b.fold_accuracies
        assert len(a.fold_accuracies) == 5
        assert a.mean_accuracy == 1.0

    def test_csv_export_round_trip(self, tmp_path):
        windows = self.separable_windows()[:6]
        feats = [extract_features(w) for w in windows]
        path = tmp_path / "features.csv"
        export_features_csv(feats, str(path))
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["subject_id", "gesture_id", "repetition_id"]
        assert header[3] == "ch0_MAV"
        assert len(lines) == 7
        values = [float(v) for v in lines[1].split(",")[3:]]
        np.testing.assert_array_equal(values, feats[0].values)
