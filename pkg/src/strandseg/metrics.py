"""Semantic and instance segmentation metrics, plus the CC baseline.

Instance scoring: at each IoU threshold t, predicted and ground-truth masks
are matched greedily in descending-IoU order, one-to-one, accepting a pair
when IoU >= t. There are no confidence scores in this method, so AP at a
threshold reduces to precision = TP/(TP+FP) and AR to recall = TP/(TP+FN);
the headline AP/AR average those over t in {0.20, 0.25, ..., 0.60}.
Dataset-level numbers accumulate TP/FP/FN over all images before dividing
(micro-averaging); per-image means (macro) are reported alongside.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .synth import InstanceSet

# the nine evaluation thresholds: 0.20 .. 0.60 step 0.05
THRESHOLDS = tuple(k / 100 for k in range(20, 65, 5))


def _as_mask_pair(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mask_iou(a, b) -> float:
    """|a & b| / |a | b|; two empty masks count as a perfect 1.0."""
    a, b = _as_mask_pair(a, b)
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def mask_dice(a, b) -> float:
    """2|a & b| / (|a| + |b|); both empty -> 1.0."""
    a, b = _as_mask_pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def greedy_match_counts(pred: InstanceSet, gt: InstanceSet, threshold: float):
    """(tp, fp, fn) under greedy descending-IoU one-to-one matching at IoU >= threshold."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError("pred and gt dimensions differ")
    n_pred, n_gt = len(pred), len(gt)
    if n_pred == 0 or n_gt == 0:
        return 0, n_pred, n_gt
    iou = np.empty((n_pred, n_gt))
    for i, pm in enumerate(pred.masks):
        for j, gm in enumerate(gt.masks):
            iou[i, j] = mask_iou(pm, gm)
    # Descending IoU; ties broken on mask content so the counts cannot
    # depend on the order instances happen to be listed in.
    pkeys = [np.ascontiguousarray(m).tobytes() for m in pred.masks]
    gkeys = [np.ascontiguousarray(m).tobytes() for m in gt.masks]
    order = sorted(((i, j) for i in range(n_pred) for j in range(n_gt)),
                   key=lambda ij: (-iou[ij], pkeys[ij[0]], gkeys[ij[1]]))
    pred_used = [False] * n_pred
    gt_used = [False] * n_gt
    tp = 0
    for i, j in order:
        if iou[i, j] < threshold:
            break
        if not pred_used[i] and not gt_used[j]:
            pred_used[i] = True
            gt_used[j] = True
            tp += 1
    return tp, n_pred - tp, n_gt - tp


def _precision(tp, fp, n_gt):
    if tp + fp > 0:
        return tp / (tp + fp)
    return 1.0 if n_gt == 0 else 0.0


def _recall(tp, fn, n_pred):
    if tp + fn > 0:
        return tp / (tp + fn)
    return 1.0 if n_pred == 0 else 0.0


def instance_ap_ar(pred: InstanceSet, gt: InstanceSet, thresholds=THRESHOLDS) -> dict:
    """Single-image AP/AR sweep; returns per-threshold rows plus the means."""
    rows = []
    for t in thresholds:
        tp, fp, fn = greedy_match_counts(pred, gt, t)
        rows.append({"t": t, "ap": _precision(tp, fp, len(gt)),
                     "ar": _recall(tp, fn, len(pred)),
                     "tp": tp, "fp": fp, "fn": fn})
    return {
        "ap": float(np.mean([r["ap"] for r in rows])),
        "ar": float(np.mean([r["ar"] for r in rows])),
        "per_threshold": rows,
    }


@dataclass
class MetricReport:
    """Dataset-level scores with the fixed JSON layout used by the CLI."""

    iou: float
    dice: float
    ap: float
    ar: float
    per_threshold: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    macro_ap: float = 0.0
    macro_ar: float = 0.0

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "dice": self.dice,
            "ap": self.ap,
            "ar": self.ar,
            "per_threshold": self.per_threshold,
            "counts": self.counts,
            "macro_ap": self.macro_ap,
            "macro_ar": self.macro_ar,
        }


def evaluate_dataset(pred_instances, gt_instances, pred_fg, gt_fg,
                     thresholds=THRESHOLDS) -> MetricReport:
    """Micro-averaged report over parallel lists of predictions and truths.

    pred_fg / gt_fg are the per-image semantic (foreground) masks; semantic
    IoU/Dice pool intersection and union pixel counts over the whole set.
    """
    n = len(pred_instances)
    if not (n == len(gt_instances) == len(pred_fg) == len(gt_fg)):
        raise ValueError("prediction and ground-truth lists must align")
    inter = union = pred_area = gt_area = 0
    tallies = {t: [0, 0, 0] for t in thresholds}
    image_aps, image_ars = [], []
    for pi, gi, pf, gf in zip(pred_instances, gt_instances, pred_fg, gt_fg):
        pf, gf = _as_mask_pair(pf, gf)
        inter += int((pf & gf).sum())
        union += int((pf | gf).sum())
        pred_area += int(pf.sum())
        gt_area += int(gf.sum())
        single = instance_ap_ar(pi, gi, thresholds)
        image_aps.append(single["ap"])
        image_ars.append(single["ar"])
        for row in single["per_threshold"]:
            tally = tallies[row["t"]]
            tally[0] += row["tp"]
            tally[1] += row["fp"]
            tally[2] += row["fn"]

    per_threshold = []
    counts = {}
    for t in thresholds:
        tp, fp, fn = tallies[t]
        ap_t = _precision(tp, fp, n_gt=tp + fn)
        ar_t = _recall(tp, fn, n_pred=tp + fp)
        per_threshold.append({"t": t, "ap": ap_t, "ar": ar_t})
        counts[f"{t:.2f}"] = {"tp": tp, "fp": fp, "fn": fn}

    return MetricReport(
        iou=inter / union if union else 1.0,
        dice=2.0 * inter / (pred_area + gt_area) if (pred_area + gt_area) else 1.0,
        ap=float(np.mean([r["ap"] for r in per_threshold])) if per_threshold else 1.0,
        ar=float(np.mean([r["ar"] for r in per_threshold])) if per_threshold else 1.0,
        per_threshold=per_threshold,
        counts=counts,
        macro_ap=float(np.mean(image_aps)) if image_aps else 1.0,
        macro_ar=float(np.mean(image_ars)) if image_ars else 1.0,
    )


def connected_components(fg: np.ndarray) -> InstanceSet:
    """Split a foreground mask into 8-connected components.

    Components are numbered by the raster position of their first-seen
    pixel, so labeling is deterministic. Empty mask -> empty InstanceSet.
    """
    fg = np.asarray(fg, dtype=bool)
    h, w = fg.shape
    labels = np.zeros((h, w), dtype=np.int32)
    masks = []
    for r0, c0 in np.argwhere(fg):
        if labels[r0, c0]:
            continue
        comp_id = len(masks) + 1
        labels[r0, c0] = comp_id
        queue = deque([(int(r0), int(c0))])
        pixels = []
        while queue:
            r, c = queue.popleft()
            pixels.append((r, c))
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and fg[rr, cc] and not labels[rr, cc]:
                        labels[rr, cc] = comp_id
                        queue.append((rr, cc))
        mask = np.zeros((h, w), dtype=bool)
        rows, cols = zip(*pixels)
        mask[list(rows), list(cols)] = True
        masks.append(mask)
    return InstanceSet(h, w, masks)
