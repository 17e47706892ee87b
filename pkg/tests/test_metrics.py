import numpy as np
import pytest

from facerestore.metrics import (
    MetricsReport, au_metrics, f1_from_counts, predict_attributes, psnr, ssim,
)
from facerestore.tensor import Tensor


def psnr_oracle(a, b):
    mse = np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2)
    if mse < 1e-10:
        return 100.0
    return 10.0 * np.log10(1.0 / mse)


def ssim_oracle(a, b, win=8, c1=0.01 ** 2, c2=0.03 ** 2):
    """Per-window loops over every sliding position, per channel."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    vals = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        h, w = x.shape
        scores = []
        for i in range(h - win + 1):
            for j in range(w - win + 1):
                px = x[i:i + win, j:j + win]
                py = y[i:i + win, j:j + win]
                mx, my = px.mean(), py.mean()
                vx = (px * px).mean() - mx * mx
                vy = (py * py).mean() - my * my
                cxy = (px * py).mean() - mx * my
                scores.append(((2 * mx * my + c1) * (2 * cxy + c2))
                              / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        vals.append(np.mean(scores))
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_capped(self):
        img = np.random.default_rng(0).uniform(0, 1, (3, 16, 16))
        assert psnr(img, img.copy()) == 100.0

    def test_zeros_vs_ones(self):
        assert psnr(np.zeros((3, 8, 8)), np.ones((3, 8, 8))) == 0.0

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.uniform(0, 1, (3, 12, 12))
            b = rng.uniform(0, 1, (3, 12, 12))
            assert abs(psnr(a, b) - psnr_oracle(a, b)) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)))


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(2).uniform(0, 1, (3, 16, 16))
        assert abs(ssim(img, img.copy()) - 1.0) < 1e-12

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = rng.uniform(0, 1, (1, 12, 12))
            b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
            assert abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-6

    def test_multichannel_matches_oracle(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0, 1, (3, 10, 10))
        b = rng.uniform(0, 1, (3, 10, 10))
        assert abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-6

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((3, 4, 4)), np.zeros((3, 4, 4)))


class TestF1:
    def test_perfect(self):
        assert f1_from_counts(tp=5, fp=0, fn=0) == 1.0

    def test_hand_confusion_matrix(self):
        # TP=1, FP=1, FN=0 -> precision .5, recall 1, F1 = 2/3
        assert abs(f1_from_counts(tp=1, fp=1, fn=0) - 2.0 / 3.0) < 1e-12

    def test_zero_denominator_rule(self):
        assert f1_from_counts(tp=0, fp=0, fn=0) == 0.0


class FixedClassifier:
    """Deterministic stub: predicts from a fixed logit table by image index."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float32)
        self._cursor = 0

    def predict_proba(self, batch: Tensor):
        n = batch.shape[0]
        rows = self.logits[self._cursor:self._cursor + n]
        self._cursor += n
        return Tensor(1.0 / (1.0 + np.exp(-rows)))


class TestAuMetrics:
    def test_perfect_predictions(self):
        labels = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float32)
        clf = FixedClassifier(np.where(labels == 1, 5.0, -5.0))
        out = au_metrics(clf, np.zeros((3, 3, 8, 8), np.float32), labels)
        assert out["per_au_f1"] == [1.0, 1.0]
        assert out["per_au_accuracy"] == [1.0, 1.0]
        assert out["f1"] == 1.0 and out["accuracy"] == 1.0

    def test_hand_fixture_two_thirds(self):
        # attribute 0: sample0 TP, sample1 FP, no FN -> F1 = 2/3
        labels = np.array([[1], [0]], dtype=np.float32)
        clf = FixedClassifier(np.array([[3.0], [3.0]]))
        out = au_metrics(clf, np.zeros((2, 3, 8, 8), np.float32), labels)
        assert abs(out["per_au_f1"][0] - 2.0 / 3.0) < 1e-12
        assert out["per_au_accuracy"][0] == 0.5

    def test_all_negative_degenerate_case(self):
        # all-negative predictions on all-negative labels: F1 0 by the
        # zero-denominator rule, accuracy 1
        labels = np.zeros((4, 3), dtype=np.float32)
        clf = FixedClassifier(np.full((4, 3), -4.0))
        out = au_metrics(clf, np.zeros((4, 3, 8, 8), np.float32), labels)
        assert out["per_au_f1"] == [0.0, 0.0, 0.0]
        assert out["per_au_accuracy"] == [1.0, 1.0, 1.0]

    def test_macro_average_is_mean(self):
        labels = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 0]], dtype=np.float32)
        clf = FixedClassifier(np.array([[2, -2, 2], [2, 2, -2], [-2, 2, 2]], float))
        out = au_metrics(clf, np.zeros((3, 3, 8, 8), np.float32), labels)
        assert out["f1"] == pytest.approx(np.mean(out["per_au_f1"]))
        assert out["accuracy"] == pytest.approx(np.mean(out["per_au_accuracy"]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="label"):
            au_metrics(FixedClassifier(np.zeros((2, 2))),
                       np.zeros((3, 3, 8, 8), np.float32), np.zeros((2, 2)))

    def test_nonbinary_labels_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            au_metrics(FixedClassifier(np.zeros((1, 2))),
                       np.zeros((1, 3, 8, 8), np.float32), np.array([[0.3, 1.0]]))

    def test_threshold_is_half(self):
        labels = np.array([[1, 0]], dtype=np.float32)
        clf = FixedClassifier(np.array([[0.01, -0.01]]))
        preds = predict_attributes(clf, np.zeros((1, 3, 8, 8), np.float32))
        assert np.array_equal(preds, [[1.0, 0.0]])

    def test_metrics_pure(self):
        labels = np.array([[1, 0], [0, 1]], dtype=np.float32)
        imgs = np.zeros((2, 3, 8, 8), np.float32)
        o1 = au_metrics(FixedClassifier(np.array([[1, -1], [-1, 1.0]])), imgs, labels)
        o2 = au_metrics(FixedClassifier(np.array([[1, -1], [-1, 1.0]])), imgs, labels)
        assert o1 == o2


class TestMetricsReport:
    def test_json_roundtrip(self):
        rep = MetricsReport(per_au_f1=[0.5, 1.0], per_au_accuracy=[0.75, 1.0],
                            f1=0.75, accuracy=0.875, psnr=31.5, ssim=0.91,
                            step=100, epoch=2)
        again = MetricsReport.from_json(rep.to_json())
        assert again == rep

    def test_range_validation(self):
        with pytest.raises(ValueError, match="f1"):
            MetricsReport(f1=1.2)
        with pytest.raises(ValueError, match="psnr"):
            MetricsReport(psnr=-1.0)
