"""Side-by-side evaluation of restoration methods on a test split.

Rows: the ground-truth images themselves, a plain bicubic upsample of the
degraded inputs, the residual-block baseline generator, and the full model.
Each row reports mean PSNR/SSIM against ground truth plus attribute F1 and
accuracy from the pretrained classifier.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .metrics import MetricsReport, au_metrics, psnr, ssim
from .synthdata import bicubic_resize
from .training import batch_restore

log = logging.getLogger(__name__)

METHOD_ORDER = ("ground_truth", "bicubic", "baseline_generator", "full_model")


def bicubic_upsample_baseline(degraded: np.ndarray, out_side: int) -> np.ndarray:
    """Bicubic x8 upsample of the masked inputs, clipped to [0,1]."""
    return np.stack([np.clip(bicubic_resize(d, out_side), 0.0, 1.0) for d in degraded])


def evaluate_split(classifier, gt: np.ndarray, degraded: np.ndarray,
                   labels: np.ndarray, generator=None, baseline_generator=None,
                   batch_size: int = 16) -> dict:
    """MetricsReport per method; generators passed as None are skipped."""
    out_side = gt.shape[-1]
    images = {"ground_truth": gt,
              "bicubic": bicubic_upsample_baseline(degraded, out_side)}
    if baseline_generator is not None:
        images["baseline_generator"] = batch_restore(baseline_generator, degraded,
                                                     batch_size)
    else:
        log.warning("baseline generator checkpoint missing; skipping its row")
    if generator is not None:
        images["full_model"] = batch_restore(generator, degraded, batch_size)
    else:
        log.warning("generator checkpoint missing; skipping the full-model row")

    methods = {}
    for name in METHOD_ORDER:
        if name not in images:
            continue
        imgs = images[name]
        ps = float(np.mean([psnr(imgs[i], gt[i]) for i in range(len(gt))]))
        ss = float(np.mean([ssim(imgs[i], gt[i]) for i in range(len(gt))]))
        au = au_metrics(classifier, imgs, labels, batch_size=batch_size)
        methods[name] = MetricsReport(per_au_f1=au["per_au_f1"],
                                      per_au_accuracy=au["per_au_accuracy"],
                                      f1=au["f1"], accuracy=au["accuracy"],
                                      psnr=ps, ssim=ss)
    skipped = [name for name in METHOD_ORDER if name not in methods]
    return {"methods": methods, "skipped": skipped}


CSV_COLUMNS = ("method", "au_id", "f1", "accuracy", "psnr", "ssim")


def write_report_csv(methods: dict[str, MetricsReport], path) -> Path:
    """Per-attribute rows plus one 'overall' row per method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for name in METHOD_ORDER:
            report = methods.get(name)
            if report is None:
                continue
            for j, (f1, acc) in enumerate(zip(report.per_au_f1, report.per_au_accuracy)):
                writer.writerow([name, j, f"{f1:.6f}", f"{acc:.6f}", "", ""])
            writer.writerow([name, "overall", f"{report.f1:.6f}",
                             f"{report.accuracy:.6f}", f"{report.psnr:.6f}",
                             f"{report.ssim:.6f}"])
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        for key in ("f1", "accuracy", "psnr", "ssim"):
            row[key] = float(row[key]) if row[key] else None
    return rows
