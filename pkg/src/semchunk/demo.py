"""Synthetic three-page corpus for smoke tests and the demo pipeline.

Each layout region is painted in its own solid colour; ``texts.json`` maps
the colour to the region's markdown so :mod:`semchunk.mock_server` can play
the OCR model.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus_io import (
    AnnotationDoc,
    Manifest,
    ManifestPage,
    QAItem,
    canonical_json,
    sha256_file,
    write_annotations,
    write_jsonl,
    write_manifest,
    write_qa,
    write_text,
)
from .chunker import BoxCategory, LayoutBox
from .geometry import BBox, PageGeom

WIDTH, HEIGHT = 600, 800

# page_id -> [(box, category, colour, text, detection confidence)]
REGIONS = {
    "p1": [
        ((40, 30, 560, 90), "Title", "#1f77b4", "# Annual Report on Coastal Wind Energy", 0.91),
        ((40, 120, 290, 500), "SemanticBox", "#ff7f0e",
         "## Turbine Output\nOffshore turbines produced 4.2 terawatt hours in the northern array.", 0.88),
        ((310, 120, 560, 500), "SemanticBox", "#2ca02c",
         "## Maintenance Costs\nBlade inspections cost 18 million euros after the storm season.", 0.83),
        ((40, 740, 560, 780), "Footer", "#d62728", "Page 1 | Coastal Energy Board", 0.62),
    ],
    "p2": [
        ((40, 20, 560, 60), "Header", "#9467bd", "Coastal Energy Board | Quarterly Review", 0.71),
        ((40, 100, 560, 380), "SemanticBox", "#8c564b",
         "| Quarter | Revenue |\n| Q1 | 120 |\n| Q2 | 135 |", 0.95),
        ((40, 400, 560, 700), "SemanticBox", "#e377c2",
         "Capacity factor is computed as $ CF = E / (P \\times T) $ for each turbine.", 0.77),
        ((400, 720, 560, 760), "Date", "#7f7f7f", "Published March 2024", 0.45),
    ],
    "p3": [
        ((40, 30, 560, 90), "Title", "#bcbd22", "# Grid Storage Outlook", 0.93),
        ((310, 120, 560, 400), "SemanticBox", "#17becf",
         "Battery capacity chart: lithium 62 percent, flow batteries 23 percent, hydrogen 15 percent.", 0.86),
        ((40, 120, 290, 400), "SemanticBox", "#aec7e8",
         "## Pumped Hydro\nTwo new reservoirs near the fjord add 900 megawatts of storage.", 0.81),
        ((40, 420, 560, 700), "SemanticBox", "#98df8a", "Draft appendix notes on tidal lagoons.", 0.30),
        ((40, 740, 300, 780), "Author", "#ffbb78", "Prepared by Ingrid Solberg", 0.55),
    ],
}

# a detection lying entirely off the page; the chunker must drop it
CORRUPT_DETECTION = ("p3", (700, 900, 750, 950), "SemanticBox", 0.90)

QA = [
    ("q1", "How many terawatt hours did the offshore turbines produce in the northern array?", "p1", 1, "TXT"),
    ("q2", "What were the blade inspection maintenance costs after the storm season?", "p1", 2, "TXT"),
    ("q3", "What quarterly revenue is listed for Q1 and Q2?", "p2", 1, "TAB"),
    ("q4", "How is the capacity factor computed for each turbine?", "p2", 2, "FOR"),
    ("q5", "What share of battery capacity does lithium have in the chart?", "p3", 1, "CHA"),
    ("q6", "Which grid storage outlook title heads the page?", "p3", 0, "RO"),
]


def texts_by_color() -> dict[str, str]:
    return {color: text for regions in REGIONS.values() for _, _, color, text, _ in regions}


def _paint(path: Path, regions) -> None:
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (WIDTH, HEIGHT), "white")
    draw = ImageDraw.Draw(img)
    for (x0, y0, x1, y1), _, color, _, _ in regions:
        # PIL rectangles include the far edge; boxes here are half-open
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), fill=color)
    img.save(path, format="PNG")


def build_demo_corpus(out_dir: str | Path) -> Path:
    """Write images, manifest, annotations, detections, colour texts, and QA to ``out_dir``."""
    out = Path(out_dir)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    pages, docs, det_rows = [], [], []
    checksums = {}
    for page_id, regions in REGIONS.items():
        uri = f"pages/{page_id}.png"
        _paint(out / uri, regions)
        checksums[uri] = sha256_file(out / uri)
        pages.append(ManifestPage(page_id, uri, WIDTH, HEIGHT))
        boxes = tuple(LayoutBox(BBox(*box), BoxCategory.parse(cat), 1.0) for box, cat, _, _, _ in regions)
        docs.append(AnnotationDoc(PageGeom(page_id, WIDTH, HEIGHT), uri, boxes))
        # detection order is deliberately not reading order
        for box, cat, _, _, conf in reversed(regions):
            x0, y0, x1, y1 = box
            det_rows.append({"page_id": page_id, "x0": x0, "y0": y0, "x1": x1, "y1": y1, "category": cat, "confidence": conf})
    pid, box, cat, conf = CORRUPT_DETECTION
    det_rows.append({"page_id": pid, "x0": box[0], "y0": box[1], "x1": box[2], "y1": box[3], "category": cat, "confidence": conf})

    write_manifest(out / "manifest.json", Manifest("demo", pages, checksums))
    write_annotations(out / "annotations.json", docs)
    write_jsonl(out / "detections.jsonl", det_rows)
    write_text(out / "texts.json", canonical_json(texts_by_color()) + "\n")

    items = []
    for qa_id, question, page_id, idx, cat in QA:
        text = REGIONS[page_id][idx][3]
        items.append(QAItem(qa_id, question, text, text, cat, (page_id,)))
    write_qa(out / "qa.jsonl", items)
    return out


def load_texts_by_color(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
