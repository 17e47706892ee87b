"""Image quality (PSNR, SSIM) and multi-label attribute metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """10*log10(max^2/mse) in dB, capped at 100 when mse < 1e-10."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(max_val * max_val / mse))


def _window_means(x: np.ndarray) -> np.ndarray:
    win = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    return win.mean(axis=(-1, -2))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over sliding 8x8 uniform windows, per channel, averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ValueError(f"ssim: expected C,H,W or H,W images, got {a.shape}")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"ssim: image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    vals = []
    for ca, cb in zip(a, b):
        mu_a = _window_means(ca)
        mu_b = _window_means(cb)
        mu_aa = _window_means(ca * ca)
        mu_bb = _window_means(cb * cb)
        mu_ab = _window_means(ca * cb)
        var_a = mu_aa - mu_a * mu_a
        var_b = mu_bb - mu_b * mu_b
        cov = mu_ab - mu_a * mu_b
        num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """2PR/(P+R), with the zero-denominator convention F1 = 0."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def au_metrics(classifier, images: np.ndarray, labels: np.ndarray,
               batch_size: int = 32) -> dict:
    """Per-attribute F1 and accuracy at threshold 0.5, plus macro averages."""
    labels = np.asarray(labels)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} label rows")
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ValueError("labels must be binary")
    preds = predict_attributes(classifier, images, batch_size=batch_size)
    n_au = labels.shape[1]
    per_f1 = []
    per_acc = []
    for j in range(n_au):
        p = preds[:, j]
        t = labels[:, j]
        tp = int(np.sum((p == 1) & (t == 1)))
        fp = int(np.sum((p == 1) & (t == 0)))
        fn = int(np.sum((p == 0) & (t == 1)))
        per_f1.append(f1_from_counts(tp, fp, fn))
        per_acc.append(float(np.mean(p == t)))
    return {
        "per_au_f1": per_f1,
        "per_au_accuracy": per_acc,
        "f1": float(np.mean(per_f1)),
        "accuracy": float(np.mean(per_acc)),
    }


def predict_attributes(classifier, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Binary attribute predictions: sigmoid(logits) >= 0.5."""
    out = []
    for i in range(0, len(images), batch_size):
        batch = Tensor(np.asarray(images[i:i + batch_size], dtype=np.float32))
        probs = classifier.predict_proba(batch).data
        out.append((probs >= 0.5).astype(np.float32))
    return np.concatenate(out, axis=0)


@dataclass
class MetricsReport:
    """One evaluation event: attribute metrics plus image quality."""

    per_au_f1: list = field(default_factory=list)
    per_au_accuracy: list = field(default_factory=list)
    f1: float = 0.0
    accuracy: float = 0.0
    psnr: float = 0.0
    ssim: float = 0.0
    step: int = 0
    epoch: int = 0

    def __post_init__(self):
        for name in ("f1", "accuracy", "ssim"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.psnr < 0.0:
            raise ValueError(f"psnr must be >= 0 dB, got {self.psnr}")
        for v in list(self.per_au_f1) + list(self.per_au_accuracy):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"per-attribute metric out of [0,1]: {v}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "MetricsReport":
        return cls(**json.loads(s))
