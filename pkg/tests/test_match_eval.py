import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_max_assignment
from semchunk.chunker import BoxCategory, LayoutBox, LayoutPrediction
from semchunk.errors import EmptyCorpus
from semchunk.geometry import BBox, PageGeom
from semchunk.match_eval import coverage, hungarian_max, iou_matrix, matched_iou, threshold_sweep

SB, TITLE = BoxCategory.SEMANTIC_BOX, BoxCategory.TITLE


def test_hungarian_small_example():
    a = hungarian_max([[0.9, 0.1], [0.2, 0.8]])
    assert a.pairs == [(0, 0), (1, 1)]
    assert a.objective == pytest.approx(1.7)


def test_hungarian_rectangular_and_empty():
    a = hungarian_max([[0.1, 0.5, 0.3]])
    assert a.pairs == [(0, 1)]
    assert hungarian_max(np.zeros((0, 3))).pairs == []
    assert hungarian_max([], n_rows=0, n_cols=0).objective == 0.0


def test_hungarian_rejects_negative_and_nan():
    with pytest.raises(ValueError):
        hungarian_max([[-1.0]])
    with pytest.raises(ValueError):
        hungarian_max([[float("nan")]])


def test_hungarian_ties_pick_lexicographically_smallest():
    assert hungarian_max(np.ones((3, 3))).pairs == [(0, 0), (1, 1), (2, 2)]
    assert hungarian_max(np.zeros((2, 2))).pairs == [(0, 0), (1, 1)]


@settings(max_examples=300)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_hungarian_matches_brute_force(r, c, data):
    w = np.array(data.draw(st.lists(st.lists(st.integers(0, 3), min_size=c, max_size=c), min_size=r, max_size=r)), float)
    want_obj, want_pairs = brute_max_assignment(w)
    got = hungarian_max(w)
    assert got.objective == pytest.approx(want_obj, abs=1e-9)
    assert got.pairs == want_pairs


def test_iou_matrix_shape():
    m = iou_matrix([BBox(0, 0, 1, 1)], [BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)])
    assert m.shape == (1, 2)
    assert m.tolist() == [[1.0, 0.0]]


def test_matched_iou_edge_cases():
    b = BBox(0, 0, 10, 10)
    assert matched_iou([], []).score == 1.0
    assert matched_iou([b], []).score == 0.0
    assert matched_iou([], [b]).score == 0.0


def test_matched_iou_class_aware():
    p = [LayoutBox(BBox(0, 0, 10, 10), TITLE, 0.9)]
    g = [LayoutBox(BBox(0, 0, 10, 10), SB, 1.0)]
    assert matched_iou(p, g).score == 1.0
    assert matched_iou(p, g, class_aware=True).score == 0.0


def test_coverage():
    assert coverage([], []).coverage == 1.0
    assert coverage([], [BBox(0, 0, 1, 1)]).coverage == 0.0
    cv = coverage([BBox(0, 0, 5, 10), BBox(0, 0, 5, 10)], [BBox(0, 0, 10, 10)])
    assert cv.coverage == 0.5
    assert (cv.covered_area, cv.gt_area) == (50.0, 100.0)


def _page(preds, gts):
    pg = PageGeom("p", 100, 100)
    return (
        LayoutPrediction(pg, tuple(LayoutBox(BBox(*b), SB, c) for b, c in preds)),
        [LayoutBox(BBox(*b), SB, 1.0) for b in gts],
    )


def test_sweep_threshold_is_inclusive():
    rows = threshold_sweep([_page([((0, 0, 10, 10), 0.4)], [(0, 0, 10, 10)])], (0.4, 0.5))
    assert [r.n_boxes_kept for r in rows] == [1, 0]
    assert rows[0].matched_iou == 1.0 and rows[1].matched_iou == 0.0


def test_sweep_pooled_differs_from_page_mean():
    pages = [
        _page([((0, 0, 10, 10), 0.9)], [(0, 0, 10, 10)]),
        _page([], [(0, 0, 10, 10), (20, 20, 30, 30), (40, 40, 50, 50)]),
    ]
    mean = threshold_sweep(pages, (0.5,))[0]
    pooled = threshold_sweep(pages, (0.5,), pooled=True)[0]
    assert mean.matched_iou == 0.5
    assert pooled.matched_iou == 0.25
    assert pooled.coverage == 0.25


def test_sweep_validation():
    with pytest.raises(EmptyCorpus):
        threshold_sweep([])
    page = _page([], [])
    with pytest.raises(ValueError):
        threshold_sweep([page], (0.5, 0.4))
    with pytest.raises(ValueError):
        threshold_sweep([page], (0.0,))
