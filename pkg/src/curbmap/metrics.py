"""Tolerance-based segmentation metrics, instance IoU matching, dataset stats.

A predicted positive counts as true positive when it lies within the pixel
tolerance (Chebyshev by default) of some ground-truth positive; recall counts
ground-truth pixels that have a prediction within tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import InputValidationError


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    tolerance_pixels: int
    tp: int
    fp: int
    fn: int
    per_threshold: list = field(default_factory=list)  # (iou_threshold, P, R, F1)


@dataclass
class DatasetStats:
    frames: int = 0
    instances: int = 0
    points: int = 0


def _f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def _tolerance_structure(tolerance: int, metric: str) -> np.ndarray | None:
    if tolerance == 0:
        return None
    size = 2 * tolerance + 1
    if metric == "chebyshev":
        return np.ones((size, size), dtype=bool)
    if metric == "euclidean":
        yy, xx = np.mgrid[-tolerance : tolerance + 1, -tolerance : tolerance + 1]
        return yy * yy + xx * xx <= tolerance * tolerance
    raise InputValidationError(f"unknown tolerance metric {metric!r}")


def _dilate(mask: np.ndarray, tolerance: int, metric: str) -> np.ndarray:
    structure = _tolerance_structure(tolerance, metric)
    if structure is None:
        return mask
    return binary_dilation(mask, structure=structure)


def binary_metrics(pred_mask: np.ndarray, gt_mask: np.ndarray, tolerance: int = 1,
                   metric: str = "chebyshev") -> EvalReport:
    """Pixel-tolerant precision/recall/F1 between two binary masks."""
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise InputValidationError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    gt_near = _dilate(gt, tolerance, metric)
    pred_near = _dilate(pred, tolerance, metric)
    tp = int((pred & gt_near).sum())
    fp = int((pred & ~gt_near).sum())
    fn = int((gt & ~pred_near).sum())
    n_gt = int(gt.sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = (n_gt - fn) / n_gt if n_gt > 0 else 0.0
    return EvalReport(precision, recall, _f1(precision, recall), tolerance, tp, fp, fn)


def _instance_masks(mask: np.ndarray) -> dict[int, np.ndarray]:
    mask = np.asarray(mask)
    return {int(i): mask == i for i in np.unique(mask) if i != 0}


def instance_metrics(pred_instances: np.ndarray, gt_instances: np.ndarray,
                     iou_thresholds=(0.5, 0.7), tolerance: int = 1,
                     metric: str = "chebyshev") -> EvalReport:
    """Greedy one-to-one instance matching on tolerance-dilated IoU.

    Both sides are dilated by the same tolerance before computing IoU;
    matches at or above each threshold are true positives.
    """
    pred_instances = np.asarray(pred_instances)
    gt_instances = np.asarray(gt_instances)
    if pred_instances.shape != gt_instances.shape:
        raise InputValidationError(
            f"mask shapes differ: {pred_instances.shape} vs {gt_instances.shape}"
        )
    preds = {k: _dilate(m, tolerance, metric) for k, m in _instance_masks(pred_instances).items()}
    gts = {k: _dilate(m, tolerance, metric) for k, m in _instance_masks(gt_instances).items()}

    pairs = []
    for pk, pm in preds.items():
        for gk, gm in gts.items():
            union = int((pm | gm).sum())
            iou = int((pm & gm).sum()) / union if union else 0.0
            if iou > 0:
                pairs.append((iou, pk, gk))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))

    matched_iou: dict[tuple[int, int], float] = {}
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    for iou, pk, gk in pairs:
        if pk in used_pred or gk in used_gt:
            continue
        used_pred.add(pk)
        used_gt.add(gk)
        matched_iou[(pk, gk)] = iou

    per_threshold = []
    primary = None
    for threshold in iou_thresholds:
        tp = sum(1 for iou in matched_iou.values() if iou >= threshold)
        fp = len(preds) - tp
        fn = len(gts) - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        entry = (threshold, precision, recall, _f1(precision, recall), tp, fp, fn)
        per_threshold.append(entry)
        if primary is None:
            primary = (precision, recall, tp, fp, fn)
    if primary is None:
        primary = (0.0, 0.0, 0, len(preds), len(gts))
    precision, recall, tp, fp, fn = primary
    return EvalReport(precision, recall, _f1(precision, recall), tolerance, tp, fp, fn,
                      per_threshold=per_threshold)


def dataset_stats(annotations) -> DatasetStats:
    """Totals over a stream of FrameAnnotation."""
    stats = DatasetStats()
    for annotation in annotations:
        stats.frames += 1
        stats.instances += len(annotation.curbs)
        stats.points += sum(len(c.points) for c in annotation.curbs)
    return stats


def format_report(report: EvalReport) -> str:
    lines = [
        f"tolerance_pixels: {report.tolerance_pixels}",
        f"precision: {report.precision:.6f}",
        f"recall: {report.recall:.6f}",
        f"f1: {report.f1:.6f}",
        f"tp: {report.tp}",
        f"fp: {report.fp}",
        f"fn: {report.fn}",
    ]
    for threshold, precision, recall, f1, *_counts in report.per_threshold:
        lines.append(
            f"iou@{threshold}: precision={precision:.6f} recall={recall:.6f} f1={f1:.6f}"
        )
    return "\n".join(lines)
