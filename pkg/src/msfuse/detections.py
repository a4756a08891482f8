"""Detection and ground-truth data model with canonical JSON files.

File layout::

    {"images": [{"id": "...", "width": W, "height": H,
                 "detections": [{"class": "C1", "x": .., "y": .., "w": .., "h": .., "conf": ..}]}]}

Ground truth uses ``"objects"`` instead of ``"detections"`` and omits ``conf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from msfuse import jsonio
from msfuse.geometry import BoundingBox, InvalidBoxError, from_normalized_center


class ValidationError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DefectClass:
    id: int
    name: str

    @property
    def key(self) -> str:
        """Short code used in files, e.g. ``"C1"``."""
        return f"C{self.id}"


CRACKS = DefectClass(1, "cracks")
CORROSION = DefectClass(2, "corrosion")
OVERHEATING = DefectClass(3, "overheating")
CANONICAL_CLASSES = (CRACKS, CORROSION, OVERHEATING)


class ClassRegistry:
    def __init__(self, classes=CANONICAL_CLASSES):
        self._by_key: dict[str, DefectClass] = {}
        for c in classes:
            self.register(c)

    def register(self, cls: DefectClass) -> DefectClass:
        if cls.id < 0:
            raise ValueError(f"class id must be non-negative, got {cls.id}")
        existing = self._by_key.get(cls.key)
        if existing is not None and existing != cls:
            raise ValueError(f"class id {cls.id} already registered as {existing.name!r}")
        self._by_key[cls.key] = cls
        return cls

    def lookup(self, key: str) -> DefectClass:
        try:
            return self._by_key[key]
        except KeyError:
            raise ValidationError(f"unknown class {key!r}") from None

    def __iter__(self):
        return iter(sorted(self._by_key.values()))

    def __contains__(self, key):
        return key in self._by_key


DEFAULT_REGISTRY = ClassRegistry()


@dataclass(frozen=True)
class Detection:
    cls: DefectClass
    box: BoundingBox
    conf: float

    def __post_init__(self):
        if not (math.isfinite(self.conf) and 0.0 <= self.conf <= 1.0):
            raise ValidationError(f"confidence {self.conf} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    cls: DefectClass
    box: BoundingBox


def _check_bounds(box: BoundingBox, w, h, where: str):
    if box.x < -w or box.x2 > 2 * w or box.y < -h or box.y2 > 2 * h:
        raise ValidationError(f"{where}: box {box} far outside a {w}x{h} image")


@dataclass(frozen=True)
class DetectionSet:
    image_id: str
    image_w: int
    image_h: int
    detections: tuple[Detection, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        _check_image_size(self.image_id, self.image_w, self.image_h)
        for i, d in enumerate(self.detections):
            _check_bounds(d.box, self.image_w, self.image_h, f"image {self.image_id!r} detection {i}")

    def __len__(self):
        return len(self.detections)

    def with_detections(self, dets) -> DetectionSet:
        return DetectionSet(self.image_id, self.image_w, self.image_h, tuple(dets))


@dataclass(frozen=True)
class GroundTruthSet:
    image_id: str
    image_w: int
    image_h: int
    objects: tuple[GroundTruth, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        _check_image_size(self.image_id, self.image_w, self.image_h)
        for i, o in enumerate(self.objects):
            _check_bounds(o.box, self.image_w, self.image_h, f"image {self.image_id!r} object {i}")

    def __len__(self):
        return len(self.objects)


def _check_image_size(image_id, w, h):
    if not (isinstance(w, int) and isinstance(h, int)) or isinstance(w, bool) or w <= 0 or h <= 0:
        raise ValidationError(f"image {image_id!r}: invalid size {w!r}x{h!r}")


# -- parsing ----------------------------------------------------------------

def _num(entry, key, where):
    v = entry.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}: field {key!r} must be a number, got {v!r}")
    return float(v)


def _parse_box(entry, img_w, img_h, normalized_center, where) -> BoundingBox:
    vals = [_num(entry, k, where) for k in ("x", "y", "w", "h")]
    try:
        if normalized_center:
            return from_normalized_center(*vals, img_w, img_h)
        return BoundingBox(*vals)
    except InvalidBoxError as e:
        raise ValidationError(f"{where}: {e}") from None


def _parse_images(doc, item_key, path):
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ValidationError(f"{path}: expected an object with an 'images' list")
    for n, img in enumerate(doc["images"]):
        if not isinstance(img, dict):
            raise ValidationError(f"{path}: images[{n}] is not an object")
        image_id = img.get("id")
        if not isinstance(image_id, str):
            raise ValidationError(f"{path}: images[{n}] has no string 'id'")
        w, h = img.get("width"), img.get("height")
        _check_image_size(image_id, w, h)
        items = img.get(item_key, [])
        if not isinstance(items, list):
            raise ValidationError(f"image {image_id!r}: '{item_key}' must be a list")
        yield image_id, w, h, items


def _cls(entry, registry, where):
    key = entry.get("class")
    if not isinstance(key, str):
        raise ValidationError(f"{where}: missing class name")
    try:
        return registry.lookup(key)
    except ValidationError as e:
        raise ValidationError(f"{where}: {e}") from None


def detection_sets_from_doc(doc, *, registry=DEFAULT_REGISTRY, normalized_center=False, path="<doc>"):
    out = []
    for image_id, w, h, items in _parse_images(doc, "detections", path):
        dets = []
        for i, e in enumerate(items):
            where = f"image {image_id!r} detection {i}"
            if not isinstance(e, dict):
                raise ValidationError(f"{where}: not an object")
            box = _parse_box(e, w, h, normalized_center, where)
            conf = _num(e, "conf", where)
            try:
                dets.append(Detection(_cls(e, registry, where), box, conf))
            except ValidationError as err:
                raise ValidationError(f"{where}: {err}") from None
        try:
            out.append(DetectionSet(image_id, w, h, tuple(dets)))
        except (ValidationError, InvalidBoxError) as err:
            raise ValidationError(str(err)) from None
    return out


def ground_truth_sets_from_doc(doc, *, registry=DEFAULT_REGISTRY, normalized_center=False, path="<doc>"):
    out = []
    for image_id, w, h, items in _parse_images(doc, "objects", path):
        objs = []
        for i, e in enumerate(items):
            where = f"image {image_id!r} object {i}"
            if not isinstance(e, dict):
                raise ValidationError(f"{where}: not an object")
            objs.append(GroundTruth(_cls(e, registry, where), _parse_box(e, w, h, normalized_center, where)))
        out.append(GroundTruthSet(image_id, w, h, tuple(objs)))
    return out


def load_detections(path, *, registry=DEFAULT_REGISTRY, normalized_center=False) -> list[DetectionSet]:
    return detection_sets_from_doc(
        jsonio.read_json(path), registry=registry, normalized_center=normalized_center, path=path
    )


def load_ground_truth(path, *, registry=DEFAULT_REGISTRY, normalized_center=False) -> list[GroundTruthSet]:
    return ground_truth_sets_from_doc(
        jsonio.read_json(path), registry=registry, normalized_center=normalized_center, path=path
    )


# -- serialization ----------------------------------------------------------

def _box_fields(box: BoundingBox) -> dict:
    return {"x": float(box.x), "y": float(box.y), "w": float(box.w), "h": float(box.h)}


def detection_sets_to_doc(sets) -> dict:
    images = []
    for s in sets:
        dets = [{"class": d.cls.key, **_box_fields(d.box), "conf": float(d.conf)} for d in s.detections]
        images.append({"id": s.image_id, "width": s.image_w, "height": s.image_h, "detections": dets})
    return {"images": images}


def ground_truth_sets_to_doc(sets) -> dict:
    images = []
    for s in sets:
        objs = [{"class": o.cls.key, **_box_fields(o.box)} for o in s.objects]
        images.append({"id": s.image_id, "width": s.image_w, "height": s.image_h, "objects": objs})
    return {"images": images}


def save_detections(sets, path) -> None:
    jsonio.write_json(path, detection_sets_to_doc(sets))


def save_ground_truth(sets, path) -> None:
    jsonio.write_json(path, ground_truth_sets_to_doc(sets))
