import math
import random

import hypothesis
import hypothesis.strategies as st
import pytest
from conftest import int_boxes
from oracles import iou_pixel_grid, iou_rational

from msfuse.geometry import BoundingBox, InvalidBoxError, area, from_normalized_center, iou


@pytest.mark.parametrize(
    "box, expected",
    [((0, 0, 2, 2), 4), ((5, 5, 1, 3), 3), ((0, 0, 0.5, 0.5), 0.25)],
)
def test_area(box, expected):
    assert area(BoundingBox(*box)) == expected


@pytest.mark.parametrize("bad", [(0, 0, 0, 1), (0, 0, 1, -1), (math.nan, 0, 1, 1), (0, math.inf, 1, 1)])
def test_invalid_boxes_rejected(bad):
    with pytest.raises(InvalidBoxError):
        BoundingBox(*bad)


def test_iou_examples():
    b = BoundingBox(3.5, 2.0, 7.25, 1.5)
    assert iou(b, b) == 1.0
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(10, 10, 2, 2)) == 0.0
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == pytest.approx(1 / 7, rel=1e-12)


def test_iou_matches_pixel_grid_oracle():
    a, b = (0, 0, 2, 2), (1, 1, 2, 2)
    # lattice counting converges to the exact ratio; on aligned lattices it is exact
    for res in (1, 4, 16):
        assert iou_pixel_grid(a, b, res) == pytest.approx(1 / 7, rel=1e-12)
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pytest.approx(iou_pixel_grid(a, b, 16), rel=1e-12)


def test_touching_boxes_have_zero_iou():
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(2, 0, 2, 2)) == 0.0


def test_iou_rational_oracle_1000_pairs():
    rng = random.Random(7)
    worst = 0.0
    for _ in range(1000):
        a = (rng.randint(0, 100), rng.randint(0, 100), rng.randint(1, 100), rng.randint(1, 100))
        b = (rng.randint(0, 100), rng.randint(0, 100), rng.randint(1, 100), rng.randint(1, 100))
        got = iou(BoundingBox(*map(float, a)), BoundingBox(*map(float, b)))
        worst = max(worst, abs(got - float(iou_rational(a, b))))
    assert worst < 1e-12


@hypothesis.given(int_boxes(), int_boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert iou(a, a) == 1.0


@hypothesis.given(int_boxes(), int_boxes(), st.integers(-50, 50), st.integers(-50, 50))
def test_iou_translation_invariant(a, b, dx, dy):
    assert iou(a.translated(dx, dy), b.translated(dx, dy)) == pytest.approx(iou(a, b), rel=1e-12, abs=1e-15)


@hypothesis.given(int_boxes(), int_boxes(), st.floats(0.01, 100.0))
def test_iou_scale_invariant(a, b, s):
    assert iou(a.scaled(s), b.scaled(s)) == pytest.approx(iou(a, b), rel=1e-12, abs=1e-15)


def test_from_normalized_center():
    assert from_normalized_center(0.5, 0.5, 1.0, 1.0, 100, 100) == BoundingBox(0, 0, 100, 100)
    assert from_normalized_center(0.5, 0.5, 0.5, 0.5, 100, 200) == BoundingBox(25, 50, 50, 100)
    with pytest.raises(InvalidBoxError):
        from_normalized_center(0.1, 0.1, 0.0, 0.1, 100, 100)
    with pytest.raises(InvalidBoxError):
        from_normalized_center(1.2, 0.1, 0.1, 0.1, 100, 100)
