import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowfps_mot.core import (
    BoundingBox,
    ClassId,
    Detection,
    cosine_similarity,
    iou,
    l2_normalize,
)
from lowfps_mot.errors import DegenerateVectorError, DimensionError
from oracles import box_iou

coord = st.floats(-1000, 1000, allow_nan=False)
side = st.floats(0.01, 500, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(side), draw(side)
    return BoundingBox(x, y, x + w, y + h)


def test_box_rejects_degenerate():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(ValueError):
        BoundingBox(0, 5, 3, 1)


def test_box_properties():
    b = BoundingBox.from_ltwh(10, 20, 30, 40)
    assert b.as_tuple() == (10, 20, 40, 60)
    assert (b.width, b.height, b.area) == (30, 40, 1200)
    assert b.center == (25, 40)
    assert b.to_ltwh() == (10, 20, 30, 40)


def test_clamp():
    b = BoundingBox(-5, -5, 10, 10)
    assert b.clamped(100, 100).as_tuple() == (0, 0, 10, 10)
    assert BoundingBox(200, 0, 210, 10).clamped(100, 100) is None


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((0, 0, 10, 10), (0, 0, 10, 10), 1.0),
        ((0, 0, 10, 10), (20, 20, 30, 30), 0.0),
        ((0, 0, 10, 10), (5, 5, 15, 15), 25 / 175),
    ],
)
def test_iou_examples(a, b, expected):
    assert iou(BoundingBox(*a), BoundingBox(*b)) == pytest.approx(expected, abs=1e-15)


@given(boxes(), boxes())
def test_iou_symmetric_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(box_iou(a.as_tuple(), b.as_tuple()), abs=1e-12)


@given(boxes())
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_cosine_examples():
    assert cosine_similarity([1, 0, 0], [1, 0, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [0.6, 0.8]) == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(DimensionError):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(DegenerateVectorError):
        cosine_similarity([0, 0], [1, 0])


def test_l2_normalize_examples():
    np.testing.assert_allclose(l2_normalize([3, 4]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(l2_normalize([1, 0]), [1, 0])
    with pytest.raises(DegenerateVectorError):
        l2_normalize([0, 0])


vectors = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=16).filter(
    lambda v: np.linalg.norm(v) > 1e-6
)


@given(vectors)
def test_normalize_properties(v):
    u = l2_normalize(v)
    assert abs(np.linalg.norm(u) - 1) < 1e-12
    np.testing.assert_array_equal(l2_normalize(u), u)  # idempotent
    assert abs(cosine_similarity(u, u) - 1) <= 1e-9


def test_detection_validation():
    box = BoundingBox(0, 0, 1, 1)
    Detection(0, box, ClassId.TRUCK, 0.5, l2_normalize([1.0, 2.0]))
    with pytest.raises(ValueError):
        Detection(0, box, confidence=1.5)
    with pytest.raises(ValueError):
        Detection(0, box, embedding=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        Detection(-1, box)


def test_class_parse():
    assert ClassId.parse("1") is ClassId.HEAVILY_ARMORED
    assert ClassId.parse("3.0") is ClassId.TRUCK
    assert ClassId.parse(-1) is ClassId.UNKNOWN
    assert ClassId.parse(7) is ClassId.UNKNOWN
