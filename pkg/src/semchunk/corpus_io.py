"""Readers and writers for every on-disk corpus artifact.

All files are UTF-8 without a byte-order mark. Writers emit a canonical form
(sorted keys, floats rounded to 6 significant digits) so that loading and
re-writing a canonical file reproduces it byte for byte.

Loaders return ``(records, diagnostics)``; anything skipped or suspicious
shows up in ``diagnostics`` rather than disappearing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .chunker import BoxCategory, Chunk, Diagnostic, LayoutBox, LayoutPrediction
from .errors import CategoryError, DuplicateId, GeometryError, ParseError, SchemaError, UnmappedLabel
from .geometry import BBox, PageGeom, intersection_area

log = logging.getLogger(__name__)

QA_CATEGORIES = ("TXT", "TAB", "FOR", "CHA", "RO")
_BOM = b"\xef\xbb\xbf"


@dataclass(frozen=True)
class AnnotationDoc:
    page: PageGeom
    image_uri: str
    boxes: tuple[LayoutBox, ...]


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    category_label: str
    confidence: float
    category: BoxCategory


@dataclass(frozen=True)
class DetectionDoc:
    page_id: str
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class QAItem:
    qa_id: str
    question: str
    gold_answer: str
    evidence: str
    category: str
    source_page_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class ManifestPage:
    page_id: str
    image_uri: str
    width: float
    height: float

    @property
    def geom(self) -> PageGeom:
        return PageGeom(self.page_id, self.width, self.height)


@dataclass
class Manifest:
    corpus_id: str
    pages: list[ManifestPage]
    checksums: dict[str, str] = field(default_factory=dict)
    root: Path | None = None  # directory that relative image_uris resolve against

    def page(self, page_id: str) -> ManifestPage:
        for p in self.pages:
            if p.page_id == page_id:
                return p
        raise KeyError(page_id)

    def resolve(self, uri: str) -> Path:
        p = Path(uri)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


# -- canonical text --------------------------------------------------------


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite number {x}")
    return format(x, ".6g")


def canonical_json(obj: Any) -> str:
    """JSON text with sorted keys and 6-significant-digit floats."""
    if isinstance(obj, Mapping):
        items = (f"{json.dumps(str(k), ensure_ascii=False)}: {canonical_json(obj[k])}" for k in sorted(obj))
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if hasattr(obj, "item"):  # numpy scalars
        return canonical_json(obj.item())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def read_text(path: str | Path) -> str:
    raw = Path(path).read_bytes()
    if raw.startswith(_BOM):
        raise ParseError("UTF-8 byte-order mark is not allowed", path=path)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=path) from None


def write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))


def read_jsonl(path: str | Path) -> list[tuple[int, Any]]:
    """``(line_number, value)`` for every non-blank line."""
    out = []
    for n, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append((n, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=n) from None
    return out


def write_jsonl(path: str | Path, records: Iterable[Any]) -> None:
    write_text(path, "".join(canonical_json(r) + "\n" for r in records))


def _load_json(path) -> Any:
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None


def _field(rec: Mapping, name: str, kind, path, line=None):
    if not isinstance(rec, Mapping):
        raise SchemaError(f"expected an object, got {type(rec).__name__}", path=path, line=line)
    if name not in rec:
        raise SchemaError(f"missing field {name!r}", path=path, line=line)
    v = rec[name]
    if kind is float:
        ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
    else:
        ok = isinstance(v, kind)
    if not ok:
        raise SchemaError(f"field {name!r} has wrong type {type(v).__name__}", path=path, line=line)
    return float(v) if kind is float else v


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# -- annotations -----------------------------------------------------------


def overlap_diagnostics(page_id: str, boxes: Sequence[LayoutBox], source: str) -> list[Diagnostic]:
    diags = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a = intersection_area(boxes[i].bbox, boxes[j].bbox)
            if a > 0:
                diags.append(
                    Diagnostic(
                        "warning",
                        source,
                        f"page {page_id!r}: boxes {i} and {j} overlap by {format_float(a)} px^2 "
                        "(annotated rectangles must not overlap)",
                        i,
                    )
                )
    return diags


def _parse_annotation(rec, path, idx) -> tuple[AnnotationDoc, list[Diagnostic]]:
    page_id = str(_field(rec, "page_id", (str, int), path))
    width = _field(rec, "width", float, path)
    height = _field(rec, "height", float, path)
    image_uri = _field(rec, "image_uri", str, path)
    raw_boxes = _field(rec, "boxes", list, path)
    try:
        page = PageGeom(page_id, width, height)
    except ValueError as exc:
        raise GeometryError(str(exc), path=path) from None
    boxes = []
    diags: list[Diagnostic] = []
    for k, b in enumerate(raw_boxes):
        x0, y0, x1, y1 = (_field(b, name, float, path) for name in ("x0", "y0", "x1", "y1"))
        label = _field(b, "category", str, path)
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"page {page_id!r} box {k}: degenerate box ({x0}, {y0}, {x1}, {y1})", path=path)
        try:
            cat = BoxCategory.parse(label)
        except KeyError:
            raise CategoryError(f"page {page_id!r} box {k}: unknown category {label!r}", path=path) from None
        box = LayoutBox(BBox(x0, y0, x1, y1), cat, 1.0)
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            diags.append(Diagnostic("warning", str(path), f"page {page_id!r}: box {k} extends outside the page", k))
        boxes.append(box)
    diags.extend(overlap_diagnostics(page_id, boxes, str(path)))
    return AnnotationDoc(page, image_uri, tuple(boxes)), diags


def load_annotations(path: str | Path) -> tuple[list[AnnotationDoc], list[Diagnostic]]:
    """Load a JSON object or array of annotation docs.

    Raises ParseError, SchemaError, GeometryError, or CategoryError; box
    overlaps only produce warnings.
    """
    data = _load_json(path)
    recs = data if isinstance(data, list) else [data]
    docs, diags = [], []
    seen = set()
    for i, rec in enumerate(recs):
        doc, d = _parse_annotation(rec, path, i)
        if doc.page.page_id in seen:
            raise DuplicateId(f"{path}: duplicate page_id {doc.page.page_id!r}")
        seen.add(doc.page.page_id)
        docs.append(doc)
        diags.extend(d)
    for d in diags:
        log.warning("%s", d)
    return docs, diags


def annotation_record(doc: AnnotationDoc) -> dict:
    return {
        "page_id": doc.page.page_id,
        "width": doc.page.width,
        "height": doc.page.height,
        "image_uri": doc.image_uri,
        "boxes": [
            {"x0": b.bbox.x0, "y0": b.bbox.y0, "x1": b.bbox.x1, "y1": b.bbox.y1, "category": b.category.value}
            for b in doc.boxes
        ],
    }


def write_annotations(path: str | Path, docs: Sequence[AnnotationDoc]) -> None:
    body = ",\n".join(canonical_json(annotation_record(d)) for d in docs)
    write_text(path, "[\n" + body + "\n]\n" if docs else "[]\n")


# -- detections ------------------------------------------------------------


def _map_label(label, label_map: Mapping[str, str] | None, path, line) -> BoxCategory:
    key = str(label)
    target = label_map.get(key) if label_map else None
    try:
        if target is not None:
            return BoxCategory.parse(target)
        return BoxCategory.parse(key)
    except KeyError:
        raise UnmappedLabel(f"label {key!r} has no category mapping", path=path, line=line) from None


def _check_confidence(conf: float, path, line) -> float:
    if not (0.0 <= conf <= 1.0):
        raise ParseError(f"confidence {conf} outside [0, 1]", path=path, line=line)
    return conf


def load_detections(
    path: str | Path, label_map: Mapping[str, str] | None = None
) -> tuple[list[DetectionDoc], list[Diagnostic]]:
    """Read native JSON Lines detections or a COCO results list.

    COCO ``bbox`` is ``[x, y, w, h]`` and is converted to corners. Labels go
    through ``label_map`` first, then are matched against the category names
    directly.
    """
    text = read_text(path)
    stripped = text.lstrip()
    rows: list[tuple[int | None, str, BBox, str, float, BoxCategory]] = []
    diags: list[Diagnostic] = []
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
        for i, rec in enumerate(data):
            image_id = _field(rec, "image_id", (str, int), path, i)
            bb = _field(rec, "bbox", list, path, i)
            if len(bb) != 4 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bb):
                raise SchemaError(f"record {i}: bbox must be [x, y, w, h]", path=path)
            conf = _check_confidence(_field(rec, "score", float, path, i), path, None)
            label = _field(rec, "category_id", (str, int), path, i)
            if bb[2] <= 0 or bb[3] <= 0:
                raise GeometryError(f"record {i}: non-positive width/height {bb}", path=path)
            cat = _map_label(label, label_map, path, None)
            rows.append((i, str(image_id), BBox.from_xywh(*bb), str(label), conf, cat))
    else:
        for line, rec in read_jsonl(path):
            page_id = str(_field(rec, "page_id", (str, int), path, line))
            x0, y0, x1, y1 = (_field(rec, k, float, path, line) for k in ("x0", "y0", "x1", "y1"))
            if not (x1 > x0 and y1 > y0):
                raise GeometryError(f"degenerate box ({x0}, {y0}, {x1}, {y1})", path=path, line=line)
            label = _field(rec, "category", (str, int), path, line)
            conf = _check_confidence(_field(rec, "confidence", float, path, line), path, line)
            cat = _map_label(label, label_map, path, line)
            rows.append((line, page_id, BBox(x0, y0, x1, y1), str(label), conf, cat))

    by_page: dict[str, list[Detection]] = {}
    for _, page_id, bbox, label, conf, cat in rows:
        by_page.setdefault(page_id, []).append(Detection(bbox, label, conf, cat))
    docs = [DetectionDoc(pid, tuple(dets)) for pid, dets in by_page.items()]
    return docs, diags


def detection_records(docs: Sequence[DetectionDoc]) -> list[dict]:
    return [
        {
            "page_id": d.page_id,
            "x0": det.bbox.x0,
            "y0": det.bbox.y0,
            "x1": det.bbox.x1,
            "y1": det.bbox.y1,
            "category": det.category.value,
            "confidence": det.confidence,
        }
        for d in docs
        for det in d.detections
    ]


def write_detections(path: str | Path, docs: Sequence[DetectionDoc]) -> None:
    write_jsonl(path, detection_records(docs))


def predictions_for_pages(
    pages: Sequence[PageGeom], detections: Sequence[DetectionDoc], diagnostics: list[Diagnostic] | None = None
) -> list[LayoutPrediction]:
    """Attach detections to page geometry; pages without detections get an empty box list."""
    by_id = {d.page_id: d for d in detections}
    known = {p.page_id for p in pages}
    for pid in by_id:
        if pid not in known:
            diag = Diagnostic("warning", "detections", f"page {pid!r} is not in the corpus; ignored")
            log.warning("%s", diag)
            if diagnostics is not None:
                diagnostics.append(diag)
    out = []
    for page in pages:
        dets = by_id[page.page_id].detections if page.page_id in by_id else ()
        out.append(LayoutPrediction(page, tuple(LayoutBox(d.bbox, d.category, d.confidence) for d in dets)))
    return out


# -- QA --------------------------------------------------------------------


def load_qa(path: str | Path) -> tuple[list[QAItem], list[Diagnostic]]:
    items, diags = [], []
    seen = set()
    for line, rec in read_jsonl(path):
        qa_id = str(_field(rec, "qa_id", (str, int), path, line))
        question = _field(rec, "question", str, path, line)
        gold = _field(rec, "gold_answer", str, path, line)
        evidence = _field(rec, "evidence", str, path, line)
        cat = _field(rec, "category", str, path, line)
        if cat not in QA_CATEGORIES:
            raise CategoryError(f"category {cat!r} not in {QA_CATEGORIES}", path=path, line=line)
        pages = rec.get("source_page_ids", [])
        if not isinstance(pages, list):
            raise SchemaError("source_page_ids must be a list", path=path, line=line)
        if qa_id in seen:
            raise DuplicateId(f"{path}:{line}: duplicate qa_id {qa_id!r}")
        seen.add(qa_id)
        if not evidence.strip():
            diags.append(Diagnostic("warning", f"{path}:{line}", f"qa {qa_id!r} has empty evidence; skipped in retrieval scoring"))
        items.append(QAItem(qa_id, question, gold, evidence, cat, tuple(str(p) for p in pages)))
    for d in diags:
        log.warning("%s", d)
    return items, diags


def write_qa(path: str | Path, items: Sequence[QAItem]) -> None:
    write_jsonl(
        path,
        (
            {
                "qa_id": q.qa_id,
                "question": q.question,
                "gold_answer": q.gold_answer,
                "evidence": q.evidence,
                "category": q.category,
                "source_page_ids": list(q.source_page_ids),
            }
            for q in items
        ),
    )


# -- manifest --------------------------------------------------------------


def load_manifest(path: str | Path, verify: bool = False) -> Manifest:
    path = Path(path)
    rec = _load_json(path)
    corpus_id = str(_field(rec, "corpus_id", (str, int), path))
    pages = []
    seen = set()
    for p in _field(rec, "pages", list, path):
        pid = str(_field(p, "page_id", (str, int), path))
        if pid in seen:
            raise DuplicateId(f"{path}: duplicate page_id {pid!r}")
        seen.add(pid)
        mp = ManifestPage(pid, _field(p, "image_uri", str, path), _field(p, "width", float, path), _field(p, "height", float, path))
        try:
            mp.geom
        except ValueError as exc:
            raise GeometryError(str(exc), path=path) from None
        pages.append(mp)
    checksums = rec.get("checksums", {}) or {}
    if not isinstance(checksums, dict):
        raise SchemaError("checksums must be an object", path=path)
    m = Manifest(corpus_id, pages, dict(checksums), path.parent)
    if verify:
        for uri, digest in m.checksums.items():
            actual = sha256_file(m.resolve(uri))
            if actual != digest:
                raise ParseError(f"checksum mismatch for {uri}", path=path)
    return m


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    rec = {
        "corpus_id": manifest.corpus_id,
        "pages": [
            {"page_id": p.page_id, "image_uri": p.image_uri, "width": p.width, "height": p.height}
            for p in manifest.pages
        ],
        "checksums": manifest.checksums,
    }
    write_text(path, canonical_json(rec) + "\n")


# -- chunk manifests -------------------------------------------------------


def chunk_record(c: Chunk) -> dict:
    return {
        "chunk_id": c.chunk_id,
        "page_id": c.page_id,
        "bbox": list(c.bbox.as_tuple()),
        "category": c.category.value,
        "order_index": c.order_index,
        "confidence": c.confidence,
    }


def write_chunks(path: str | Path, chunks: Iterable[Chunk]) -> None:
    write_jsonl(path, (chunk_record(c) for c in chunks))


def load_chunks(path: str | Path) -> list[Chunk]:
    out = []
    for line, rec in read_jsonl(path):
        bb = _field(rec, "bbox", list, path, line)
        if len(bb) != 4:
            raise SchemaError("bbox must have 4 numbers", path=path, line=line)
        try:
            bbox = BBox(*bb)
            cat = BoxCategory.parse(_field(rec, "category", str, path, line))
        except ValueError as exc:
            raise GeometryError(str(exc), path=path, line=line) from None
        except KeyError as exc:
            raise CategoryError(f"unknown category {exc.args[0]!r}", path=path, line=line) from None
        out.append(
            Chunk(
                _field(rec, "chunk_id", str, path, line),
                str(_field(rec, "page_id", (str, int), path, line)),
                bbox,
                cat,
                _field(rec, "order_index", int, path, line),
                _field(rec, "confidence", float, path, line),
            )
        )
    return out
