"""Weighted fusion of a baseline detector's and a thermal detector's outputs.

Same-class boxes from the two models that overlap by at least ``tau_iou`` are
merged into one detection whose confidence and box parameters are convex
combinations weighted by ``gamma`` (thermal weight). Everything that did not
merge is carried over, and the combined list goes through greedy NMS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from msfuse.detections import Detection, DetectionSet
from msfuse.geometry import BoundingBox, iou


class ContractError(ValueError):
    pass


BASELINE = "baseline"
THERMAL = "thermal"
FUSED = "fused"


@dataclass(frozen=True)
class FusionConfig:
    gamma: float = 0.5
    tau_iou: float = 0.5
    tau_nms: float = 0.5
    class_agnostic_nms: bool = False
    # optional per-class override of gamma, keyed by class code ("C3")
    gamma_by_class: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for g in (self.gamma, *self.gamma_by_class.values()):
            if not 0.0 <= g <= 1.0:
                raise ValueError(f"gamma must be in [0, 1], got {g}")
        if not 0.0 < self.tau_iou <= 1.0:
            raise ValueError(f"tau_iou must be in (0, 1], got {self.tau_iou}")
        if not 0.0 < self.tau_nms <= 1.0:
            raise ValueError(f"tau_nms must be in (0, 1], got {self.tau_nms}")

    def gamma_for(self, cls) -> float:
        return self.gamma_by_class.get(cls.key, self.gamma)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau_iou": self.tau_iou,
            "tau_nms": self.tau_nms,
            "class_agnostic_nms": self.class_agnostic_nms,
            "gamma_by_class": dict(sorted(self.gamma_by_class.items())),
        }


@dataclass(frozen=True)
class FusedDetection:
    """An output detection plus the input positions it came from."""

    detection: Detection
    source: str
    baseline_index: int | None = None
    thermal_index: int | None = None

    def audit_record(self) -> dict:
        return {"source": self.source, "baseline_index": self.baseline_index, "thermal_index": self.thermal_index}


def _mix(a: float, b: float, gamma: float) -> float:
    """``gamma * b + (1 - gamma) * a``, clamped so rounding never leaves [a, b]."""
    if gamma == 0.0:
        return a
    if gamma == 1.0:
        return b
    v = gamma * b + (1.0 - gamma) * a
    return min(max(v, min(a, b)), max(a, b))


def fuse_pair(d_y: Detection, d_mt: Detection, gamma: float) -> Detection:
    """Convexly combine a baseline detection with a thermal one.

    ``gamma`` weights the thermal detection; ``1 - gamma`` the baseline.
    """
    if d_y.cls != d_mt.cls:
        raise ContractError(f"cannot fuse {d_y.cls.key} with {d_mt.cls.key}")
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"gamma must be in [0, 1], got {gamma}")
    a, b = d_y.box, d_mt.box
    box = BoundingBox(
        _mix(a.x, b.x, gamma),
        _mix(a.y, b.y, gamma),
        _mix(a.w, b.w, gamma),
        _mix(a.h, b.h, gamma),
    )
    return Detection(d_y.cls, box, _mix(d_y.conf, d_mt.conf, gamma))


def canonical_order(dets) -> list[int]:
    """Indices sorted by descending confidence, ties by ascending index."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].conf, i))


def match_and_fuse(o_y: DetectionSet, o_mt: DetectionSet, cfg: FusionConfig):
    """Greedy first-match pairing of baseline and thermal detections.

    Returns ``(fused, unmerged)`` lists of :class:`FusedDetection`.
    """
    if o_y.image_id != o_mt.image_id:
        raise ContractError(f"image id mismatch: {o_y.image_id!r} vs {o_mt.image_id!r}")
    ys, mts = o_y.detections, o_mt.detections
    mt_order = canonical_order(mts)
    mt_merged = [False] * len(mts)
    fused, unmerged = [], []
    for i in canonical_order(ys):
        d_i = ys[i]
        for j in mt_order:
            if mt_merged[j]:
                continue
            d_j = mts[j]
            if d_i.cls == d_j.cls and iou(d_i.box, d_j.box) >= cfg.tau_iou:
                fused.append(FusedDetection(fuse_pair(d_i, d_j, cfg.gamma_for(d_i.cls)), FUSED, i, j))
                mt_merged[j] = True
                break
        else:
            unmerged.append(FusedDetection(d_i, BASELINE, i, None))
    for j in mt_order:
        if not mt_merged[j]:
            unmerged.append(FusedDetection(mts[j], THERMAL, None, j))
    return fused, unmerged


def nms_indices(dets, tau_nms: float, class_agnostic: bool = False) -> list[int]:
    """Greedy NMS; returns kept indices ordered by descending confidence.

    A candidate is suppressed when its IoU with an already kept box of the
    same class (any class if ``class_agnostic``) is strictly above ``tau_nms``.
    """
    kept: list[int] = []
    for i in canonical_order(dets):
        d = dets[i]
        suppressed = False
        for k in kept:
            other = dets[k]
            if (class_agnostic or other.cls == d.cls) and iou(other.box, d.box) > tau_nms:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def nms(dets, tau_nms: float, class_agnostic: bool = False) -> list[Detection]:
    dets = list(dets)
    return [dets[i] for i in nms_indices(dets, tau_nms, class_agnostic)]


def ensemble_fuse_with_provenance(o_y: DetectionSet, o_mt: DetectionSet, cfg: FusionConfig) -> list[FusedDetection]:
    fused, unmerged = match_and_fuse(o_y, o_mt, cfg)
    combined = fused + unmerged
    keep = nms_indices([f.detection for f in combined], cfg.tau_nms, cfg.class_agnostic_nms)
    return [combined[k] for k in keep]


def ensemble_fuse(o_y: DetectionSet, o_mt: DetectionSet, cfg: FusionConfig | None = None) -> DetectionSet:
    """Full two-model ensemble for one image: pair, fuse, carry over, NMS."""
    cfg = cfg or FusionConfig()
    out = ensemble_fuse_with_provenance(o_y, o_mt, cfg)
    return o_y.with_detections(f.detection for f in out)
