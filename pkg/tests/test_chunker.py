import pytest
from hypothesis import given, strategies as st
from PIL import Image

from semchunk.chunker import (
    BoxCategory,
    LayoutBox,
    LayoutPrediction,
    chunk_page,
    filter_confidence,
    granularity_stats,
    plan_crops,
    reading_order,
    render_crops,
    suppress_contained,
    whole_page_chunk,
)
from semchunk.errors import EmptyCorpus
from semchunk.geometry import BBox, PageGeom

SB = BoxCategory.SEMANTIC_BOX
PAGE = PageGeom("pg", 100, 200)


def lb(x0, y0, x1, y1, conf=0.9, cat=SB):
    return LayoutBox(BBox(x0, y0, x1, y1), cat, conf)


def test_category_parse_is_forgiving():
    assert BoxCategory.parse("semantic_box") is SB
    assert BoxCategory.parse("Semantic Box") is SB
    assert BoxCategory.parse("semantic") is SB
    assert BoxCategory.parse("TITLE") is BoxCategory.TITLE
    with pytest.raises(KeyError):
        BoxCategory.parse("figure")


def test_global_categories():
    assert not SB.is_global
    assert all(c.is_global for c in BoxCategory if c is not SB)


def test_confidence_bounds():
    with pytest.raises(ValueError):
        lb(0, 0, 1, 1, conf=1.5)


def test_filter_confidence_inclusive():
    pred = LayoutPrediction(PAGE, (lb(0, 0, 1, 1, 0.4), lb(0, 0, 1, 1, 0.39)))
    assert len(filter_confidence(pred, 0.4).boxes) == 1
    with pytest.raises(ValueError):
        filter_confidence(pred, 0.0)


def test_reading_order_y_then_x():
    a, b, c = lb(50, 10, 90, 20), lb(0, 10, 40, 20), lb(0, 0, 100, 5)
    assert reading_order([a, b, c]) == [c, b, a]


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=10))
def test_reading_order_is_sorted_and_stable(corners):
    boxes = [lb(x, y, x + 1 + i, y + 1) for i, (x, y) in enumerate(corners)]
    out = reading_order(boxes)
    keys = [(b.bbox.y0, b.bbox.x0) for b in out]
    assert keys == sorted(keys)
    # equal keys keep input order (widths encode input position)
    for p, q in zip(out, out[1:]):
        if (p.bbox.y0, p.bbox.x0) == (q.bbox.y0, q.bbox.x0):
            assert p.bbox.x1 < q.bbox.x1


def test_plan_crops_orders_pads_and_clamps():
    pred = LayoutPrediction(PAGE, (lb(10, 100, 90, 150), lb(0, 0, 100, 20)))
    chunks = plan_crops(pred, padding_px=5)
    assert [c.chunk_id for c in chunks] == ["pg__0", "pg__1"]
    assert chunks[0].bbox.as_tuple() == (0, 0, 100, 25)
    assert chunks[1].bbox.as_tuple() == (5, 95, 95, 155)
    assert chunks[1].image_name == "pg__1.png"


def test_plan_crops_drops_off_page_boxes_with_diagnostic():
    diags = []
    pred = LayoutPrediction(PAGE, (lb(0, 0, 10, 10), lb(150, 250, 160, 260)))
    chunks = plan_crops(pred, diagnostics=diags)
    assert len(chunks) == 1
    assert len(diags) == 1 and diags[0].index == 1 and diags[0].level == "warning"


def test_chunk_page_fallback():
    pred = LayoutPrediction(PAGE, (lb(0, 0, 10, 10, 0.1),))
    diags = []
    chunks = chunk_page(pred, 0.4, diagnostics=diags)
    assert [c.bbox.as_tuple() for c in chunks] == [(0, 0, 100, 200)]
    assert diags
    assert chunk_page(pred, 0.4, fallback_whole_page=False) == []


def test_suppress_contained():
    big, inner, other = lb(0, 0, 100, 100), lb(10, 10, 20, 20), lb(90, 90, 150, 150)
    assert suppress_contained([inner, big, other]) == [big, other]
    pred = LayoutPrediction(PageGeom("q", 200, 200), (inner, big, other))
    assert len(chunk_page(pred, suppress_ratio=0.95)) == 2


def test_granularity_stats():
    pg = PageGeom("a", 100, 100)
    title = lb(0, 0, 100, 10, cat=BoxCategory.TITLE)
    body = lb(0, 10, 50, 100)
    chunks = plan_crops(LayoutPrediction(pg, (title, body)))
    s = granularity_stats([(pg, chunks), (pg, whole_page_chunk(pg))])
    assert s.chunks_per_image == 1.5
    assert s.relative_chunk_size_pct == pytest.approx((10 + 45 + 100) / 3)
    s2 = granularity_stats([(pg, chunks)], include_global=False)
    assert (s2.chunks_per_image, s2.relative_chunk_size_pct) == (1.0, 45.0)
    with pytest.raises(EmptyCorpus):
        granularity_stats([])


def test_render_crops(tmp_path):
    img = Image.new("RGB", (100, 200), "white")
    img.paste((255, 0, 0), (10, 20, 30, 40))
    img.save(tmp_path / "pg.png")
    chunks = plan_crops(LayoutPrediction(PAGE, (lb(10, 20, 30, 40), lb(0.5, 100.5, 10.2, 110))))
    paths = render_crops(tmp_path / "pg.png", chunks, tmp_path / "crops")
    with Image.open(paths[0]) as a:
        assert a.size == (20, 20)
        assert a.getpixel((0, 0)) == (255, 0, 0)
    with Image.open(paths[1]) as b:
        assert b.size == (11, 10)
