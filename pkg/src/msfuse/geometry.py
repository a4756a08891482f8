"""Axis-aligned boxes in pixel units, top-left corner convention."""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidBoxError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Box with top-left corner ``(x, y)`` and extents ``w``, ``h`` in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box field in {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box extents must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def translated(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, s: float) -> BoundingBox:
        return BoundingBox(self.x * s, self.y * s, self.w * s, self.h * s)


def area(b: BoundingBox) -> float:
    return b.w * b.h


def intersection(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes, symmetric."""
    inter = intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = area(a) + area(b) - inter
    # rounding can push the ratio a hair past 1 for identical boxes
    return min(1.0, inter / union)


def from_normalized_center(cx, cy, w, h, img_w, img_h) -> BoundingBox:
    """Convert a center-format box in image fractions to a pixel top-left box."""
    if img_w <= 0 or img_h <= 0:
        raise InvalidBoxError(f"image size must be positive, got {img_w}x{img_h}")
    for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not 0.0 <= v <= 1.0:
            raise InvalidBoxError(f"normalized {name}={v} outside [0, 1]")
    return BoundingBox((cx - w / 2) * img_w, (cy - h / 2) * img_h, w * img_w, h * img_h)
