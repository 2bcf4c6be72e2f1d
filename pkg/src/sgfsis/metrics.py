"""Instance-segmentation evaluation: detection F1 (novel/base), AJI,
multi-class panoptic quality and foreground Dice."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class MatchResult:
    pairs: list  # (gt_id, pred_id, iou), iou > 0.5 so matching is unique
    unmatched_gt: list
    unmatched_pred: list


@dataclass
class MetricsReport:
    f1_per_class: dict = field(default_factory=dict)
    f1_novel: float | None = None
    f1_base: float | None = None
    aji: float = 0.0
    mpq: float | None = None
    pq_per_class: dict = field(default_factory=dict)
    dice: float = 1.0

    def as_dict(self):
        return {
            "f1_per_class": {str(k): v for k, v in self.f1_per_class.items()},
            "f1_novel": self.f1_novel,
            "f1_base": self.f1_base,
            "aji": self.aji,
            "mpq": self.mpq,
            "pq_per_class": {str(k): v for k, v in self.pq_per_class.items()},
            "dice": self.dice,
        }

    def as_text(self):
        d = self.as_dict()
        lines = []
        for key in ("f1_novel", "f1_base", "aji", "mpq", "dice"):
            val = d[key]
            lines.append(f"{key} = {'undefined' if val is None else f'{val:.9f}'}")
        for cls in sorted(self.f1_per_class):
            v = self.f1_per_class[cls]
            lines.append(f"f1[{cls}] = {'undefined' if v is None else f'{v:.9f}'}")
        for cls in sorted(self.pq_per_class):
            lines.append(f"pq[{cls}] = {self.pq_per_class[cls]:.9f}")
        return "\n".join(lines) + "\n"

    def as_json(self):
        return json.dumps(self.as_dict())


def _areas_and_overlaps(gt_ids, pred_ids):
    """Contingency data between two id rasters (background id 0 excluded)."""
    gt_ids = np.asarray(gt_ids)
    pred_ids = np.asarray(pred_ids)
    if gt_ids.shape != pred_ids.shape:
        raise DimensionError("ground-truth and prediction rasters differ in shape")
    gt_areas = {int(i): int(a) for i, a in zip(*np.unique(gt_ids, return_counts=True)) if i != 0}
    pred_areas = {int(i): int(a) for i, a in zip(*np.unique(pred_ids, return_counts=True)) if i != 0}
    both = (gt_ids != 0) & (pred_ids != 0)
    pairs = np.stack([gt_ids[both], pred_ids[both]], axis=1)
    overlap = {}
    if len(pairs):
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        overlap = {(int(g), int(p)): int(c) for (g, p), c in zip(uniq, counts)}
    return gt_areas, pred_areas, overlap


def match_instances(gt_ids, pred_ids):
    """Pair instances with IoU > 0.5 (pairing is unique at this threshold)."""
    gt_areas, pred_areas, overlap = _areas_and_overlaps(gt_ids, pred_ids)
    pairs = []
    matched_gt, matched_pred = set(), set()
    for (g, p), inter in sorted(overlap.items()):
        union = gt_areas[g] + pred_areas[p] - inter
        iou = inter / union
        if iou > 0.5:
            pairs.append((g, p, iou))
            matched_gt.add(g)
            matched_pred.add(p)
    unmatched_gt = sorted(set(gt_areas) - matched_gt)
    unmatched_pred = sorted(set(pred_areas) - matched_pred)
    return MatchResult(pairs, unmatched_gt, unmatched_pred)


def detection_f1(gt, pred, base_classes=()):
    """Per-class detection F1 plus novel/base averages.

    A true positive needs an IoU > 0.5 match whose ground-truth and
    predicted classes both equal the class under evaluation. Classes absent
    from both rasters get ``None``; ``f1_base`` is ``None`` when no
    evaluated class overlaps the base set.
    """
    match = match_instances(gt.ids, pred.ids)
    gt_cls = {g: gt.classes[g] for g in _present_ids(gt.ids)}
    pred_cls = {p: pred.classes[p] for p in _present_ids(pred.ids)}
    classes = sorted(set(gt_cls.values()) | set(pred_cls.values()))

    f1 = {}
    for c in classes:
        tp = sum(1 for g, p, _ in match.pairs if gt_cls[g] == c and pred_cls[p] == c)
        fn = sum(1 for g in gt_cls if gt_cls[g] == c) - tp
        fp = sum(1 for p in pred_cls if pred_cls[p] == c) - tp
        denom = 2 * tp + fp + fn
        f1[c] = (2 * tp / denom) if denom else None
    defined = {c: v for c, v in f1.items() if v is not None}
    f1_novel = float(np.mean(list(defined.values()))) if defined else None
    overlap = {c: v for c, v in defined.items() if c in set(base_classes)}
    f1_base = float(np.mean(list(overlap.values()))) if overlap else None
    return f1, f1_novel, f1_base


def _present_ids(raster):
    return [int(i) for i in np.unique(raster) if i != 0]


def aji(gt_ids, pred_ids):
    """Aggregated Jaccard index, class-agnostic.

    Greedy over ground-truth instances in ascending id order; each
    prediction is usable once; IoU ties break toward the lower pred id.
    """
    gt_areas, pred_areas, overlap = _areas_and_overlaps(gt_ids, pred_ids)
    if not gt_areas and not pred_areas:
        return 1.0
    used = set()
    inter_sum = 0
    union_sum = 0
    for g in sorted(gt_areas):
        best_iou, best_p = 0.0, None
        for p in sorted(pred_areas):
            if p in used:
                continue
            inter = overlap.get((g, p), 0)
            if inter == 0:
                continue
            iou = inter / (gt_areas[g] + pred_areas[p] - inter)
            if iou > best_iou:
                best_iou, best_p = iou, p
        if best_p is None:
            union_sum += gt_areas[g]  # unmatched gt
        else:
            inter = overlap[(g, best_p)]
            inter_sum += inter
            union_sum += gt_areas[g] + pred_areas[best_p] - inter
            used.add(best_p)
    for p in sorted(set(pred_areas) - used):
        union_sum += pred_areas[p]
    return inter_sum / union_sum if union_sum else 0.0


def _restrict(raster, keep):
    out = np.asarray(raster).copy()
    mask = np.isin(out, list(keep)) if keep else np.zeros_like(out, dtype=bool)
    out[~mask] = 0
    return out


def panoptic_quality(gt, pred, per_class=True):
    """PQ per class and its mean over classes present in GT or prediction.

    With ``per_class=False`` every instance counts as one class and the
    single class-agnostic PQ is returned under key 0.
    """
    if gt.ids.shape != pred.ids.shape:
        raise DimensionError("ground-truth and prediction rasters differ in shape")
    if per_class:
        classes = sorted(
            {gt.classes[g] for g in _present_ids(gt.ids)}
            | {pred.classes[p] for p in _present_ids(pred.ids)}
        )
    else:
        classes = [0]
    pq = {}
    for c in classes:
        if per_class:
            g_ids = _restrict(gt.ids, [g for g in _present_ids(gt.ids) if gt.classes[g] == c])
            p_ids = _restrict(pred.ids, [p for p in _present_ids(pred.ids) if pred.classes[p] == c])
        else:
            g_ids, p_ids = gt.ids, pred.ids
        match = match_instances(g_ids, p_ids)
        tp = len(match.pairs)
        fp = len(match.unmatched_pred)
        fn = len(match.unmatched_gt)
        denom = tp + 0.5 * fp + 0.5 * fn
        pq[c] = (sum(iou for _, _, iou in match.pairs) / denom) if denom else 1.0
    mpq = float(np.mean(list(pq.values()))) if pq else None
    return pq, mpq


def dice_coefficient(gt_fg, pred_fg):
    """Plain dice of two binary masks; two empty masks give 1.0."""
    a = np.asarray(gt_fg) > 0
    b = np.asarray(pred_fg) > 0
    if a.shape != b.shape:
        raise DimensionError("masks differ in shape")
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.sum(a & b) / denom)


def evaluate(gt, pred, base_classes=()):
    """All metrics for one image pair."""
    f1, f1_novel, f1_base = detection_f1(gt, pred, base_classes)
    pq, mpq = panoptic_quality(gt, pred, per_class=True)
    return MetricsReport(
        f1_per_class=f1,
        f1_novel=f1_novel,
        f1_base=f1_base,
        aji=aji(gt.ids, pred.ids),
        mpq=mpq,
        pq_per_class=pq,
        dice=dice_coefficient(gt.ids, pred.ids),
    )


def macro_average(reports):
    """Mean of per-image reports, skipping undefined entries."""

    def mean_of(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    return MetricsReport(
        f1_per_class={},
        f1_novel=mean_of([r.f1_novel for r in reports]),
        f1_base=mean_of([r.f1_base for r in reports]),
        aji=mean_of([r.aji for r in reports]),
        mpq=mean_of([r.mpq for r in reports]),
        pq_per_class={},
        dice=mean_of([r.dice for r in reports]),
    )
