"""Classifier, calibration and evaluation-harness tests.

The separability check is verified with an independent brute-force grid
search over 2-D separating lines before asserting anything about the
gradient-descent path.
"""

import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterspeech.classifier import (
    Calibration,
    HateSpeechClassifier,
    LabeledExample,
    confusion_counts,
    evaluate,
    interpolated_precision,
    load_model,
    pava_isotonic,
    precision_recall_sweep,
    predict,
    save_model,
    select_active_batch,
    select_threshold,
    train,
)
from counterspeech.embeddings import cosine_similarity, embed
from counterspeech.errors import DegenerateTrainingError, InvalidInputError
from counterspeech.models import PostRecord

T0 = datetime(2023, 8, 24, 8, 0, tzinfo=timezone.utc)


def two_clusters(rng, n=40, gap=4.0):
    a = rng.normal((-gap / 2, 0), 0.5, size=(n, 2))
    b = rng.normal((gap / 2, 0), 0.5, size=(n, 2))
    X = np.vstack([a, b])
    y = np.array([0.0] * n + [1.0] * n)
    return X, y


def separable_by_grid_search(X, y) -> bool:
    """Brute force: try a grid of line angles and offsets; the data counts as
    separable when some line classifies every point correctly."""
    for angle in np.linspace(0, math.pi, 180, endpoint=False):
        w = np.array([math.cos(angle), math.sin(angle)])
        proj = X @ w
        for cut in np.unique(proj):
            for direction in (1.0, -1.0):
                pred = (direction * (proj - cut) > 0).astype(float)
                if np.all(pred == y) or np.all((1 - pred) == y):
                    return True
    return False


class TestEmbedding:
    def test_determinism(self, provider):
        a = embed("abc", provider)
        b = embed("abc", provider)
        assert np.array_equal(a, b)

    def test_empty_text_rejected(self, provider):
        with pytest.raises(InvalidInputError):
            embed("   ", provider)

    def test_self_cosine_is_one(self, provider):
        v = embed("tax", provider)
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_unit_norm(self, provider):
        v = embed("pomoc dla ukrainy działa", provider)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


class TestTraining:
    def test_separable_clusters_reach_perfect_accuracy(self):
        rng = np.random.default_rng(42)
        X, y = two_clusters(rng)
        assert separable_by_grid_search(X, y), "oracle says data must be separable"
        clf = HateSpeechClassifier(learning_rate=1.0, l2=0.0, max_iter=3000).fit(X, y)
        accuracy = evaluate(y, clf.predict(X))["accuracy"]
        assert accuracy == 1.0

    def test_shuffled_labels_score_near_chance(self):
        accuracies = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            X, y = two_clusters(rng, n=50)
            shuffled = rng.permutation(y)
            clf = HateSpeechClassifier(
                learning_rate=0.5, l2=0.01, max_iter=300, threshold=0.5
            ).fit(X, shuffled)
            holdout_X, holdout_y = two_clusters(np.random.default_rng(seed + 1000), n=50)
            holdout_shuffled = np.random.default_rng(seed + 2000).permutation(holdout_y)
            accuracies.append(evaluate(holdout_shuffled, clf.predict(holdout_X))["accuracy"])
        assert abs(float(np.mean(accuracies)) - 0.5) <= 0.1

    def test_single_class_raises(self):
        X = np.ones((5, 3))
        with pytest.raises(DegenerateTrainingError):
            HateSpeechClassifier().fit(X, np.zeros(5))

    def test_train_requires_consistent_dims(self):
        examples = [
            LabeledExample("a", (1.0, 0.0), "harmful"),
            LabeledExample("b", (1.0, 0.0, 0.0), "not_harmful"),
        ]
        with pytest.raises(InvalidInputError):
            train(examples, "local")

    def test_get_set_params_roundtrip(self):
        clf = HateSpeechClassifier(l2=0.5)
        params = clf.get_params()
        assert params["l2"] == 0.5
        clf.set_params(l2=0.125, max_iter=7)
        assert clf.get_params()["l2"] == 0.125
        with pytest.raises(InvalidInputError):
            clf.set_params(not_a_param=1)


class TestPredict:
    def zero_model(self, dim=4):
        clf = HateSpeechClassifier(threshold=0.5)
        clf.dim_ = dim
        clf.weights_ = np.zeros(dim)
        clf.bias_ = 0.0
        clf.calibration_ = Calibration.identity()
        clf.threshold_ = 0.5
        return clf

    def test_zero_weights_give_half(self):
        prob, harmful = predict(self.zero_model(), np.ones(4))
        assert prob == pytest.approx(0.5, abs=1e-9)

    def test_threshold_boundary_is_harmful(self):
        clf = self.zero_model()
        prob, harmful = predict(clf, np.zeros(4))
        clf.threshold_ = prob
        _, harmful = predict(clf, np.zeros(4))
        assert harmful is True

    def test_dim_mismatch(self):
        with pytest.raises(InvalidInputError):
            predict(self.zero_model(dim=4), np.ones(5))

    def test_predict_is_pure(self, fixture_model, provider):
        v = embed("pomoc dla ukrainy", provider)
        assert predict(fixture_model, v) == predict(fixture_model, v)

    def test_precision_driven_to_one_by_raising_threshold(self, fixture_model, training_examples):
        X = np.array([ex.embedding for ex in training_examples])
        labels = np.array([ex.label == "harmful" for ex in training_examples])
        probs = fixture_model.predict_proba(X)
        sweep = precision_recall_sweep(probs, labels)
        perfect = [p for _, p, r in sweep if p == 1.0 and r > 0]
        assert perfect, "some threshold must reach precision 1.0 with nonzero recall"


class TestCalibration:
    def test_pava_is_nondecreasing(self):
        fitted = pava_isotonic(np.array([1.0, 0.0, 0.0, 1.0, 0.5]))
        assert all(a <= b + 1e-12 for a, b in zip(fitted, fitted[1:]))

    @given(
        # Scores on a 1e-6 grid: gaps below the blend's float resolution
        # (~1e-10) cannot be ordered by any monotone map in double precision.
        raws=st.lists(
            st.integers(1000, 999_000).map(lambda n: n / 1_000_000),
            min_size=4,
            max_size=40,
            unique=True,
        ),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=80, deadline=None)
    def test_calibration_preserves_ranking(self, raws, seed):
        rng = np.random.default_rng(seed)
        raws_arr = np.array(raws)
        labels = (rng.random(raws_arr.size) < raws_arr).astype(float)
        calibration = Calibration.fit(raws_arr, labels)
        scores = calibration.apply(raws_arr)
        assert np.array_equal(np.argsort(raws_arr), np.argsort(scores))

    def test_interpolated_precision_envelope_is_monotone(self):
        rng = np.random.default_rng(9)
        probs = rng.random(60)
        labels = rng.random(60) < probs
        envelope = interpolated_precision(precision_recall_sweep(probs, labels))
        precisions = [p for _, p in envelope]
        assert all(a >= b - 1e-12 for a, b in zip(precisions, precisions[1:]))

    def test_select_threshold_respects_recall_floor(self):
        probs = np.array([0.9, 0.8, 0.7, 0.3, 0.2, 0.1])
        labels = np.array([1, 1, 0, 1, 0, 0])
        threshold = select_threshold(probs, labels, min_recall=0.5)
        predicted = probs >= threshold
        recall = (predicted & (labels == 1)).sum() / labels.sum()
        assert recall >= 0.5


class TestEvaluationHarness:
    @given(
        st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=80)
    )
    @settings(max_examples=150, deadline=None)
    def test_matches_brute_force_counts(self, pairs):
        y_true = [t for t, _ in pairs]
        y_pred = [p for _, p in pairs]
        tp = sum(1 for t, p in pairs if t and p)
        fp = sum(1 for t, p in pairs if not t and p)
        fn = sum(1 for t, p in pairs if t and not p)
        tn = sum(1 for t, p in pairs if not t and not p)
        assert confusion_counts(y_true, y_pred) == (tp, fp, fn, tn)
        metrics = evaluate(y_true, y_pred)
        assert metrics["accuracy"] == pytest.approx((tp + tn) / len(pairs))
        if tp + fp:
            assert metrics["precision"] == pytest.approx(tp / (tp + fp))
        else:
            assert metrics["precision"] is None


class TestActiveBatch:
    def make_pool(self, texts):
        return [
            PostRecord(
                post_id=f"p{i:03d}", author_id="a", text=t, created_at=T0, is_reply=False
            )
            for i, t in enumerate(texts)
        ]

    def test_full_thousand_post_pool_ranked_descending(self, fixture_model, provider):
        # Active-learning batch the size of the whole pool: everything comes
        # back, best-scored first.
        texts = [
            f"pomoc dla ukrainy działa sprawnie numer {i}"
            if i % 3
            else f"dzicz wynocha pasożyty precz banderowcy {i}"
            for i in range(1000)
        ]
        pool = self.make_pool(texts)
        ranked = select_active_batch(fixture_model, pool, batch_size=1000, provider=provider)
        scores = [s for _, s in ranked]
        assert len(ranked) == 1000
        assert scores == sorted(scores, reverse=True)

    def test_batch_of_one_is_top_score(self, fixture_model, provider):
        pool = self.make_pool(["pomoc działa", "dzicz wynocha precz pasożyty"])
        ranked = select_active_batch(fixture_model, pool, batch_size=1, provider=provider)
        assert len(ranked) == 1
        assert ranked[0][0].post_id == "p001"

    def test_ties_break_by_post_id(self, fixture_model, provider):
        pool = self.make_pool(["pomoc działa", "pomoc działa"])
        ranked = select_active_batch(fixture_model, pool, batch_size=2, provider=provider)
        assert [p.post_id for p, _ in ranked] == ["p000", "p001"]

    def test_empty_pool(self, fixture_model, provider):
        assert select_active_batch(fixture_model, [], 5, provider) == []

    def test_bad_batch_size(self, fixture_model, provider):
        with pytest.raises(InvalidInputError):
            select_active_batch(fixture_model, [], 0, provider)


class TestModelIO:
    def test_roundtrip_preserves_predictions(self, fixture_model, provider, tmp_path):
        path = tmp_path / "model.json"
        save_model(fixture_model, path)
        loaded = load_model(path)
        for text in ("pomoc dla ukrainy", "dzicz wynocha pasożyty precz"):
            v = embed(text, provider)
            assert predict(loaded, v) == predict(fixture_model, v)

    def test_version_check(self, tmp_path, fixture_model):
        path = tmp_path / "model.json"
        save_model(fixture_model, path)
        broken = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(broken)
        with pytest.raises(InvalidInputError):
            load_model(path)
