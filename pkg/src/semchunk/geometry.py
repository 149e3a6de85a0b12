"""Rectangle arithmetic in page pixel coordinates.

Boxes are half-open ``[x0, x1) x [y0, y1)`` with the origin at the top-left
corner and y growing downward, so two boxes that merely share an edge have
zero intersection.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateClamp


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not isinstance(v, numbers.Real) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"BBox has no area: {self.as_tuple()}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x, y, x + w, y + h)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def intersection(self, other: "BBox") -> "BBox | None":
        """Overlap region, or None when the boxes do not share any area."""
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x0 < x1 and y0 < y1:
            return BBox(x0, y0, x1, y1)
        return None

    def expand(self, pad: float) -> "BBox":
        return BBox(self.x0 - pad, self.y0 - pad, self.x1 + pad, self.y1 + pad)


@dataclass(frozen=True)
class PageGeom:
    page_id: str
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"page {self.page_id!r} must have positive size, got {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def bbox(self) -> BBox:
        return BBox(0, 0, self.width, self.height)


def intersection_area(a: BBox, b: BBox) -> float:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def union_area(boxes: Iterable[BBox]) -> float:
    """Exact area of the union of ``boxes``.

    Sweeps over the compressed x coordinates; inside each vertical slab the
    covered y-length is found by merging the intervals of boxes spanning it.
    """
    boxes = list(boxes)
    if not boxes:
        return 0.0
    xs = sorted({b.x0 for b in boxes} | {b.x1 for b in boxes})
    total = 0.0
    for left, right in zip(xs, xs[1:]):
        spans = sorted((b.y0, b.y1) for b in boxes if b.x0 <= left and b.x1 >= right)
        if not spans:
            continue
        covered = 0.0
        cur0, cur1 = spans[0]
        for y0, y1 in spans[1:]:
            if y0 > cur1:
                covered += cur1 - cur0
                cur0, cur1 = y0, y1
            elif y1 > cur1:
                cur1 = y1
        covered += cur1 - cur0
        total += covered * (right - left)
    return total


def pairwise_intersections(a: Sequence[BBox], b: Sequence[BBox]) -> list[BBox]:
    """All nonempty ``p & q`` for p in a, q in b; their union is ``(Ua) & (Ub)``."""
    out = []
    for p in a:
        for q in b:
            r = p.intersection(q)
            if r is not None:
                out.append(r)
    return out


def clamp(box: BBox, page: PageGeom) -> BBox:
    """Clip ``box`` to the page rectangle; raises DegenerateClamp if nothing is left."""
    x0, y0 = max(box.x0, 0.0), max(box.y0, 0.0)
    x1, y1 = min(box.x1, float(page.width)), min(box.y1, float(page.height))
    if not (x0 < x1 and y0 < y1):
        raise DegenerateClamp(
            f"box {box.as_tuple()} does not intersect page {page.page_id!r} ({page.width}x{page.height})"
        )
    return BBox(x0, y0, x1, y1)
