"""Turn layout predictions into ordered crop chunks.

The pipeline for one page is: drop low-confidence boxes, sort the survivors
top-to-bottom then left-to-right by their upper-left corner, pad and clamp
each box to the page, and hand out ``order_index`` values in that order.
Pages that end up with no chunks can fall back to a single whole-page chunk.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DegenerateClamp, EmptyCorpus
from .geometry import BBox, PageGeom, clamp, intersection_area

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.4


class BoxCategory(str, enum.Enum):
    SEMANTIC_BOX = "SemanticBox"
    TITLE = "Title"
    HEADER = "Header"
    FOOTER = "Footer"
    DATE = "Date"
    AUTHOR = "Author"

    @property
    def is_global(self) -> bool:
        return self is not BoxCategory.SEMANTIC_BOX

    @classmethod
    def parse(cls, label: str) -> "BoxCategory":
        """Case/underscore-insensitive lookup ("semantic_box", "header", ...)."""
        key = str(label).replace("_", "").replace(" ", "").replace("-", "").lower()
        for cat in cls:
            if cat.value.lower() == key:
                return cat
        if key == "semantic":
            return cls.SEMANTIC_BOX
        raise KeyError(label)


@dataclass(frozen=True)
class LayoutBox:
    bbox: BBox
    category: BoxCategory = BoxCategory.SEMANTIC_BOX
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class LayoutPrediction:
    page: PageGeom
    boxes: tuple[LayoutBox, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    page_id: str
    bbox: BBox
    category: BoxCategory
    order_index: int
    confidence: float = 1.0

    @property
    def image_name(self) -> str:
        return f"{self.page_id}__{self.order_index}.png"


@dataclass(frozen=True)
class Diagnostic:
    """A warning (or error) record attached to a source location."""

    level: str
    source: str
    message: str
    index: int | None = None

    def __str__(self) -> str:
        loc = self.source if self.index is None else f"{self.source}[{self.index}]"
        return f"{self.level}: {loc}: {self.message}"


@dataclass(frozen=True)
class GranularityStats:
    chunks_per_image: float
    relative_chunk_size_pct: float
    n_pages: int
    n_chunks: int = 0


def filter_confidence(pred: LayoutPrediction, threshold: float = DEFAULT_CONFIDENCE) -> LayoutPrediction:
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    return LayoutPrediction(pred.page, tuple(b for b in pred.boxes if b.confidence >= threshold))


def reading_order(boxes: Iterable[LayoutBox]) -> list[LayoutBox]:
    # sorted() is stable, so equal (y0, x0) keys keep their input order
    return sorted(boxes, key=lambda b: (b.bbox.y0, b.bbox.x0))


def suppress_contained(boxes: Sequence[LayoutBox], ratio: float = 0.95) -> list[LayoutBox]:
    """Drop boxes lying at least ``ratio`` inside a larger kept box.

    Larger (then more confident, then earlier) boxes win; output keeps the
    input order of the survivors.
    """
    rank = sorted(range(len(boxes)), key=lambda i: (-boxes[i].bbox.area, -boxes[i].confidence, i))
    kept: list[int] = []
    for i in rank:
        b = boxes[i].bbox
        if any(intersection_area(b, boxes[k].bbox) >= ratio * b.area for k in kept):
            continue
        kept.append(i)
    return [boxes[i] for i in sorted(kept)]


def plan_crops(
    pred: LayoutPrediction,
    padding_px: float = 0,
    diagnostics: list[Diagnostic] | None = None,
) -> list[Chunk]:
    """Pad, clamp, and order every box of ``pred`` into chunks.

    Boxes that vanish when clamped to the page are skipped; a Diagnostic is
    appended to ``diagnostics`` (when given) and logged.
    """
    if padding_px < 0:
        raise ValueError("padding_px must be >= 0")
    page = pred.page
    index_of = {id(b): i for i, b in enumerate(pred.boxes)}
    survivors: list[tuple[LayoutBox, BBox]] = []
    for box in reading_order(pred.boxes):
        try:
            region = clamp(box.bbox.expand(padding_px) if padding_px else box.bbox, page)
        except DegenerateClamp as exc:
            diag = Diagnostic("warning", page.page_id, f"dropped box: {exc}", index_of[id(box)])
            log.warning("%s", diag)
            if diagnostics is not None:
                diagnostics.append(diag)
            continue
        survivors.append((box, region))
    return [
        Chunk(f"{page.page_id}__{k}", page.page_id, region, box.category, k, box.confidence)
        for k, (box, region) in enumerate(survivors)
    ]


def whole_page_chunk(page: PageGeom) -> list[Chunk]:
    return [Chunk(f"{page.page_id}__0", page.page_id, page.bbox, BoxCategory.SEMANTIC_BOX, 0, 1.0)]


def chunk_page(
    pred: LayoutPrediction,
    threshold: float = DEFAULT_CONFIDENCE,
    padding_px: float = 0,
    fallback_whole_page: bool = True,
    suppress_ratio: float | None = None,
    diagnostics: list[Diagnostic] | None = None,
) -> list[Chunk]:
    """Full per-page post-processing: filter, optional suppression, crop plan, fallback."""
    kept = filter_confidence(pred, threshold)
    if suppress_ratio is not None:
        kept = LayoutPrediction(kept.page, suppress_contained(kept.boxes, suppress_ratio))
    chunks = plan_crops(kept, padding_px, diagnostics)
    if not chunks and fallback_whole_page:
        diag = Diagnostic("warning", pred.page.page_id, "no boxes survived; using whole page")
        log.warning("%s", diag)
        if diagnostics is not None:
            diagnostics.append(diag)
        chunks = whole_page_chunk(pred.page)
    return chunks


def granularity_stats(
    chunk_sets: Sequence[tuple[PageGeom, Sequence[Chunk]]],
    include_global: bool = True,
) -> GranularityStats:
    """Mean chunks per page and mean chunk area as a percentage of its page.

    The size mean is taken over all chunks of the corpus, not per page.
    """
    if not chunk_sets:
        raise EmptyCorpus("granularity_stats needs at least one page")
    counts = []
    ratios = []
    for page, chunks in chunk_sets:
        if not include_global:
            chunks = [c for c in chunks if not c.category.is_global]
        counts.append(len(chunks))
        ratios.extend(c.bbox.area / page.area for c in chunks)
    per_image = math.fsum(counts) / len(counts)
    rel = 100.0 * math.fsum(ratios) / len(ratios) if ratios else 0.0
    return GranularityStats(per_image, rel, len(chunk_sets), len(ratios))


def render_crops(image_path: str | Path, chunks: Sequence[Chunk], out_dir: str | Path) -> list[Path]:
    """Cut each chunk out of the page image and save it as ``{page_id}__{order_index}.png``."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with Image.open(image_path) as img:
        img.load()
        for c in chunks:
            b = c.bbox
            # floor/ceil so fractional boxes never lose their edge pixels
            box = (math.floor(b.x0), math.floor(b.y0), math.ceil(b.x1), math.ceil(b.y1))
            path = out_dir / c.image_name
            img.crop(box).save(path, format="PNG")
            written.append(path)
    return written
