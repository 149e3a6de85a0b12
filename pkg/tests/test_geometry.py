import math

import pytest
from hypothesis import given, strategies as st

from oracles import grid_iou, grid_union_area
from semchunk.errors import DegenerateClamp
from semchunk.geometry import BBox, PageGeom, clamp, intersection_area, iou, pairwise_intersections, union_area


@st.composite
def boxes(draw, lim=32):
    x0 = draw(st.integers(0, lim - 1))
    y0 = draw(st.integers(0, lim - 1))
    return BBox(x0, y0, draw(st.integers(x0 + 1, lim)), draw(st.integers(y0 + 1, lim)))


def test_bbox_rejects_bad_input():
    with pytest.raises(ValueError):
        BBox(5, 0, 5, 10)
    with pytest.raises(ValueError):
        BBox(0, 0, float("nan"), 1)
    with pytest.raises((TypeError, ValueError)):
        BBox("0", 0, 1, 1)


def test_from_xywh_and_area():
    b = BBox.from_xywh(10, 20, 30, 40)
    assert b.as_tuple() == (10, 20, 40, 60)
    assert (b.width, b.height, b.area) == (30, 40, 1200)


def test_touching_boxes_do_not_overlap():
    a, b = BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)
    assert intersection_area(a, b) == 0.0
    assert a.intersection(b) is None
    assert iou(a, b) == 0.0


def test_iou_half_overlap():
    assert iou(BBox(0, 0, 2, 1), BBox(1, 0, 3, 1)) == pytest.approx(1 / 3)


def test_union_area_examples():
    assert union_area([]) == 0.0
    assert union_area([BBox(0, 0, 10, 10), BBox(5, 5, 15, 15)]) == 175.0
    assert union_area([BBox(0, 0, 10, 10), BBox(2, 2, 4, 4)]) == 100.0


def test_clamp():
    page = PageGeom("p", 100, 50)
    assert clamp(BBox(-5, -5, 20, 70), page).as_tuple() == (0, 0, 20, 50)
    with pytest.raises(DegenerateClamp):
        clamp(BBox(100, 0, 120, 10), page)


def test_expand():
    assert BBox(10, 10, 20, 20).expand(3).as_tuple() == (7, 7, 23, 23)


@given(st.lists(boxes(), max_size=6))
def test_union_area_matches_grid(bs):
    assert union_area(bs) == grid_union_area([b.as_tuple() for b in bs], 32)


@given(boxes(), boxes())
def test_iou_matches_grid_and_is_symmetric(a, b):
    assert iou(a, b) == iou(b, a)
    assert math.isclose(iou(a, b), float(grid_iou(a.as_tuple(), b.as_tuple(), 32)), abs_tol=1e-12)
    assert 0.0 <= iou(a, b) <= 1.0


@given(st.lists(boxes(), max_size=5), st.lists(boxes(), max_size=5))
def test_union_of_intersections_is_bounded(a, b):
    inter = union_area(pairwise_intersections(a, b))
    assert inter <= min(union_area(a), union_area(b))


@given(st.lists(boxes(), min_size=1, max_size=6))
def test_union_bounds(bs):
    u = union_area(bs)
    assert max(b.area for b in bs) <= u <= sum(b.area for b in bs)
