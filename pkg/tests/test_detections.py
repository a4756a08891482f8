import json
import random

import pytest

from msfuse import jsonio
from msfuse.detections import (
    CANONICAL_CLASSES,
    ClassRegistry,
    DefectClass,
    Detection,
    DetectionSet,
    GroundTruth,
    GroundTruthSet,
    ValidationError,
    load_detections,
    load_ground_truth,
    save_detections,
    save_ground_truth,
)
from msfuse.geometry import BoundingBox


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_canonical_registry():
    reg = ClassRegistry()
    assert [(c.key, c.name) for c in reg] == [("C1", "cracks"), ("C2", "corrosion"), ("C3", "overheating")]
    reg.register(DefectClass(4, "erosion"))
    assert reg.lookup("C4").name == "erosion"
    with pytest.raises(ValueError):
        reg.register(DefectClass(1, "not cracks"))


def test_load_single_detection(tmp_path):
    p = _write(tmp_path / "d.json", {"images": [{"id": "a", "width": 100, "height": 80, "detections": [
        {"class": "C1", "x": 10, "y": 20, "w": 30, "h": 40, "conf": 0.85}]}]})
    (s,) = load_detections(p)
    assert s.image_id == "a" and (s.image_w, s.image_h) == (100, 80)
    assert s.detections == (Detection(CANONICAL_CLASSES[0], BoundingBox(10, 20, 30, 40), 0.85),)


@pytest.mark.parametrize(
    "entry, fragment",
    [
        ({"class": "C1", "x": 1, "y": 1, "w": 3, "h": 3, "conf": 1.5}, "detection 1"),
        ({"class": "C9", "x": 1, "y": 1, "w": 3, "h": 3, "conf": 0.5}, "unknown class"),
        ({"class": "C1", "x": 1, "y": 1, "w": 0, "h": 3, "conf": 0.5}, "detection 1"),
        ({"class": "C1", "x": 1, "y": 1, "w": 3, "h": 3}, "conf"),
        ({"class": "C1", "x": 500, "y": 1, "w": 3, "h": 3, "conf": 0.5}, "outside"),
    ],
)
def test_validation_errors_name_image_and_index(tmp_path, entry, fragment):
    ok = {"class": "C2", "x": 1, "y": 1, "w": 3, "h": 3, "conf": 0.5}
    p = _write(tmp_path / "d.json", {"images": [{"id": "img7", "width": 100, "height": 100,
                                                 "detections": [ok, entry]}]})
    with pytest.raises(ValidationError) as e:
        load_detections(p)
    assert "img7" in str(e.value) and fragment in str(e.value)


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"images": [\n  {"id": "a",\n  oops}\n]}')
    with pytest.raises(jsonio.ParseError, match="line 3"):
        load_detections(p)


def test_empty_save(tmp_path):
    p = tmp_path / "e.json"
    save_detections([], p)
    text = p.read_text()
    assert json.loads(text) == {"images": []}
    assert text.endswith("\n")


def _random_sets(rng, n_images=5):
    sets = []
    for i in range(n_images):
        dets = [
            Detection(
                rng.choice(CANONICAL_CLASSES),
                BoundingBox(rng.uniform(0, 500), rng.uniform(0, 400), rng.uniform(0.1, 90), rng.uniform(0.1, 90)),
                rng.random(),
            )
            for _ in range(rng.randint(0, 8))
        ]
        sets.append(DetectionSet(f"im{i}", 640, 512, dets))
    return sets


def test_round_trip_and_determinism(tmp_path):
    rng = random.Random(3)
    for trial in range(20):
        sets = _random_sets(rng)
        a, b = tmp_path / f"a{trial}.json", tmp_path / f"b{trial}.json"
        save_detections(sets, a)
        save_detections(sets, b)
        assert a.read_bytes() == b.read_bytes()
        assert load_detections(a) == sets


def test_canonical_reserialization_of_foreign_file(tmp_path):
    # hand-written file with odd key order and integer coordinates
    src = _write(tmp_path / "f.json", {"images": [{"detections": [
        {"conf": 0.5, "h": 4, "w": 3, "y": 2, "x": 1, "class": "C3"}], "height": 50, "width": 60, "id": "z"}]})
    once, twice = tmp_path / "1.json", tmp_path / "2.json"
    save_detections(load_detections(src), once)
    save_detections(load_detections(once), twice)
    assert once.read_bytes() == twice.read_bytes()
    assert list(json.loads(once.read_text())["images"][0]) == ["id", "width", "height", "detections"]


def test_ground_truth_round_trip(tmp_path):
    gts = [GroundTruthSet("a", 10, 10, [GroundTruth(CANONICAL_CLASSES[2], BoundingBox(1, 2, 3, 4))])]
    p = tmp_path / "gt.json"
    save_ground_truth(gts, p)
    doc = json.loads(p.read_text())
    assert "conf" not in doc["images"][0]["objects"][0]
    assert load_ground_truth(p) == gts


def test_normalized_center_ingest(tmp_path):
    p = _write(tmp_path / "n.json", {"images": [{"id": "a", "width": 100, "height": 200, "detections": [
        {"class": "C1", "x": 0.5, "y": 0.5, "w": 0.5, "h": 0.5, "conf": 0.9}]}]})
    (s,) = load_detections(p, normalized_center=True)
    assert s.detections[0].box == BoundingBox(25, 50, 50, 100)


def test_input_order_preserved(tmp_path):
    sets = _random_sets(random.Random(11), 1)
    p = tmp_path / "o.json"
    save_detections(sets, p)
    assert [d.conf for d in load_detections(p)[0].detections] == [d.conf for d in sets[0].detections]
