"""Print a confidence-threshold sweep for a small synthetic two-page layout."""

from semchunk.chunker import BoxCategory, LayoutBox, LayoutPrediction
from semchunk.geometry import BBox, PageGeom
from semchunk.match_eval import threshold_sweep

SB = BoxCategory.SEMANTIC_BOX

PAGES = [
    (PageGeom("A", 100, 100),
     [(0, 0, 50, 50), (50, 0, 100, 50), (0, 50, 100, 100)],
     [((0, 0, 50, 50), 0.9), ((55, 0, 100, 50), 0.35), ((0, 50, 100, 90), 0.45), ((60, 60, 80, 80), 0.25)]),
    (PageGeom("B", 200, 100),
     [(10, 10, 90, 90), (110, 10, 190, 90)],
     [((10, 10, 90, 90), 0.55), ((100, 0, 150, 50), 0.3), ((0, 0, 200, 100), 0.22)]),
]

if __name__ == "__main__":
    pages = [
        (LayoutPrediction(g, tuple(LayoutBox(BBox(*b), SB, c) for b, c in preds)), [LayoutBox(BBox(*b), SB, 1.0) for b in gts])
        for g, gts, preds in PAGES
    ]
    for pooled in (False, True):
        print("pooled" if pooled else "per-page mean")
        for r in threshold_sweep(pages, pooled=pooled):
            print(f"  conf {r.confidence_threshold:.1f}  IoU {100 * r.matched_iou:5.1f}  coverage {100 * r.coverage:5.1f}  kept {r.n_boxes_kept}")
