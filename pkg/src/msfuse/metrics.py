"""Detection evaluation: AP at fixed and ranged IoU, precision, recall, F1.

AP uses 101-point interpolation over recall levels 0, 0.01, ..., 1. Recall
comparisons are done in integer arithmetic (``tp * 100 >= k * num_gt``) so the
result does not depend on how 0.01 steps round.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from msfuse.detections import CANONICAL_CLASSES, DetectionSet, GroundTruthSet
from msfuse.geometry import iou

TP = True
FP = False

DEFAULT_IOU_RANGE = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_POINTS = 101


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    iou_fixed: float = 0.5
    iou_range: tuple[float, ...] = DEFAULT_IOU_RANGE
    # None: sweep every distinct confidence and keep the best F1
    f1_threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "iou_range", tuple(self.iou_range))
        for t in (self.iou_fixed, *self.iou_range):
            if not 0.0 < t <= 1.0:
                raise ValueError(f"IoU threshold {t} outside (0, 1]")
        if not self.iou_range:
            raise ValueError("iou_range must not be empty")
        if any(b <= a for a, b in zip(self.iou_range, self.iou_range[1:])):
            raise ValueError("iou_range must be strictly increasing")
        if self.f1_threshold is not None and not 0.0 <= self.f1_threshold <= 1.0:
            raise ValueError(f"f1 threshold {self.f1_threshold} outside [0, 1]")

    def to_dict(self) -> dict:
        policy = "max" if self.f1_threshold is None else {"fixed": self.f1_threshold}
        return {"iou_fixed": self.iou_fixed, "iou_range": list(self.iou_range), "f1_policy": policy}


@dataclass(frozen=True)
class ClassMetrics:
    ap50: float
    ap50_95: float
    precision: float
    recall: float
    f1: float
    f1_conf_threshold: float | None
    num_gt: int
    num_pred: int

    def to_dict(self) -> dict:
        return {
            "ap50": self.ap50,
            "ap50_95": self.ap50_95,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f1_conf_threshold": self.f1_conf_threshold,
            "num_gt": self.num_gt,
            "num_pred": self.num_pred,
        }


MEAN_FIELDS = ("ap50", "ap50_95", "precision", "recall", "f1")


@dataclass(frozen=True)
class EvalReport:
    config: EvalConfig
    classes: dict[str, ClassMetrics]
    mean: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "classes": {k: v.to_dict() for k, v in self.classes.items()},
            "mean": dict(self.mean),
        }

    def summary_line(self) -> str:
        m = self.mean
        return (
            f"map50={m['ap50']:.6f} map50_95={m['ap50_95']:.6f} "
            f"precision={m['precision']:.6f} f1={m['f1']:.6f}"
        )


# -- matching ---------------------------------------------------------------

def iou_matrix(pred_boxes, gt_boxes) -> np.ndarray:
    out = np.zeros((len(pred_boxes), len(gt_boxes)))
    for i, p in enumerate(pred_boxes):
        for j, g in enumerate(gt_boxes):
            out[i, j] = iou(p, g)
    return out


def _match_from_ious(order, ious: np.ndarray, iou_thr: float) -> list[bool]:
    labels = [FP] * ious.shape[0]
    if ious.shape[1] == 0:
        return labels
    taken = np.zeros(ious.shape[1], dtype=bool)
    for i in order:
        row = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(row))  # first index on ties
        if row[j] >= iou_thr:
            taken[j] = True
            labels[i] = TP
    return labels


def match_predictions(preds, gts, iou_thr: float) -> list[bool]:
    """Label single-class predictions TP/FP against ground-truth boxes.

    Predictions are visited by descending confidence (ties by index). Each
    takes the still-unmatched ground truth with the highest IoU when that IoU
    reaches ``iou_thr``. ``gts`` may hold boxes or objects with a ``box``.
    Labels are returned in the input order of ``preds``.
    """
    gt_boxes = [getattr(g, "box", g) for g in gts]
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].conf, i))
    ious = iou_matrix([p.box for p in preds], gt_boxes)
    return _match_from_ious(order, ious, iou_thr)


# -- AP ---------------------------------------------------------------------

def average_precision(labels, num_gt: int) -> float:
    """101-point interpolated AP from labels sorted by descending confidence.

    ``labels`` is a sequence of TP/FP booleans, or ``(label, conf)`` pairs.
    With no ground truth, AP is 1.0 for an empty label list and 0.0 otherwise.
    """
    flags = [bool(l[0]) if isinstance(l, tuple) else bool(l) for l in labels]
    if num_gt == 0:
        return 0.0 if flags else 1.0
    if not flags:
        return 0.0
    tp = np.cumsum(flags, dtype=np.int64)
    ranks = np.arange(1, len(flags) + 1)
    precision = tp / ranks
    # envelope: best precision at this rank or any later one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.arange(RECALL_POINTS, dtype=np.int64) * num_gt
    # first rank whose recall tp/num_gt reaches k/100
    idx = np.searchsorted(tp * (RECALL_POINTS - 1), levels, side="left")
    hit = idx < len(flags)
    total = envelope[idx[hit]].sum()
    return float(total / RECALL_POINTS)


def _pr_at_threshold(confs, flags, num_gt, thr):
    sel = confs >= thr
    tp = int(np.count_nonzero(flags & sel))
    n = int(np.count_nonzero(sel))
    p = tp / n if n else 0.0
    r = tp / num_gt if num_gt else (1.0 if n == 0 else 0.0)
    if num_gt == 0 and n == 0:
        p = 1.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def operating_point(confs, flags, num_gt: int, threshold: float | None = None):
    """Precision, recall, F1 and the confidence threshold they hold at.

    With ``threshold=None`` every distinct confidence is tried and the F1
    maximum is kept (highest threshold among equal F1 values).
    """
    confs = np.asarray(confs, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    if threshold is not None:
        return (*_pr_at_threshold(confs, flags, num_gt, threshold), threshold)
    if confs.size == 0:
        p, r, f1 = _pr_at_threshold(confs, flags, num_gt, 1.0)
        return p, r, f1, None
    # sweep from high to low threshold with cumulative counts
    order = np.lexsort((np.arange(confs.size), -confs))
    c = confs[order]
    tp = np.cumsum(flags[order])
    n = np.arange(1, c.size + 1)
    # evaluate only at the last rank of each distinct confidence
    last = np.r_[c[1:] != c[:-1], True]
    best = None
    for k in np.flatnonzero(last):
        p = tp[k] / n[k]
        r = tp[k] / num_gt if num_gt else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if best is None or f1 > best[2]:
            best = (float(p), float(r), float(f1), float(c[k]))
    return best


# -- pooled evaluation ------------------------------------------------------

@dataclass
class _ClassPool:
    confs: list = field(default_factory=list)
    # one label list per IoU threshold, parallel to confs
    labels: dict = field(default_factory=dict)
    num_gt: int = 0


def _image_labels(pred_set: DetectionSet | None, gt_set: GroundTruthSet, thresholds):
    """Per class: (confs, {thr: labels}, num_gt) for one image."""
    by_cls: dict = {}
    for o in gt_set.objects:
        by_cls.setdefault(o.cls, ([], []))[1].append(o.box)
    if pred_set is not None:
        for d in pred_set.detections:
            by_cls.setdefault(d.cls, ([], []))[0].append(d)
    out = {}
    for cls, (preds, gt_boxes) in by_cls.items():
        order = sorted(range(len(preds)), key=lambda i: (-preds[i].conf, i))
        ious = iou_matrix([preds[i].box for i in order], gt_boxes)
        ranks = range(len(order))
        out[cls] = (
            [preds[i].conf for i in order],
            {t: _match_from_ious(ranks, ious, t) for t in thresholds},
            len(gt_boxes),
        )
    return out


def _class_metrics(pool: _ClassPool, cfg: EvalConfig) -> ClassMetrics:
    confs = np.asarray(pool.confs, dtype=float)
    # stable sort keeps image order then within-image rank for equal confidences
    order = np.argsort(-confs, kind="stable")
    ranked = {t: [pool.labels[t][k] for k in order] for t in pool.labels}
    ap50 = average_precision(ranked[cfg.iou_fixed], pool.num_gt)
    ap_range = [average_precision(ranked[t], pool.num_gt) for t in cfg.iou_range]
    ap50_95 = float(sum(ap_range) / len(ap_range))
    p, r, f1, thr = operating_point(
        confs[order], np.asarray(ranked[cfg.iou_fixed], dtype=bool), pool.num_gt, cfg.f1_threshold
    )
    return ClassMetrics(ap50, ap50_95, p, r, f1, thr, pool.num_gt, len(pool.confs))


def evaluate(pred_sets, gt_sets, cfg: EvalConfig | None = None, *, threads: int = 1) -> EvalReport:
    """Score prediction sets against ground truth, pooled over images per class."""
    cfg = cfg or EvalConfig()
    gt_by_id = {}
    for g in gt_sets:
        if g.image_id in gt_by_id:
            raise EvalError(f"duplicate ground-truth image {g.image_id!r}")
        gt_by_id[g.image_id] = g
    pred_by_id = {}
    for p in pred_sets:
        if p.image_id not in gt_by_id:
            raise EvalError(f"image {p.image_id!r} has predictions but no ground truth")
        if p.image_id in pred_by_id:
            raise EvalError(f"duplicate prediction image {p.image_id!r}")
        pred_by_id[p.image_id] = p

    thresholds = sorted({cfg.iou_fixed, *cfg.iou_range})
    gts = list(gt_sets)
    work = lambda g: _image_labels(pred_by_id.get(g.image_id), g, thresholds)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            per_image = list(ex.map(work, gts))
    else:
        per_image = [work(g) for g in gts]

    classes = list(CANONICAL_CLASSES)
    for img in per_image:
        for c in img:
            if c not in classes:
                classes.append(c)
    classes.sort()
    pools = {c: _ClassPool(labels={t: [] for t in thresholds}) for c in classes}
    for img in per_image:
        for c, (confs, labels, n_gt) in img.items():
            pool = pools[c]
            pool.confs.extend(confs)
            for t in thresholds:
                pool.labels[t].extend(labels[t])
            pool.num_gt += n_gt

    per_class = {c.key: _class_metrics(pools[c], cfg) for c in classes}
    present = [m for m in per_class.values() if m.num_gt > 0] or list(per_class.values())
    mean = {f: float(sum(getattr(m, f) for m in present) / len(present)) for f in MEAN_FIELDS}
    return EvalReport(cfg, per_class, mean)
