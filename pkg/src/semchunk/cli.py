"""``semchunk`` command line.

Every subcommand reads its inputs, writes its reports into ``--out``, and
exits 0 when nothing went wrong. Warnings are summarised on stderr and
recorded in the reports; ``--strict`` turns any warning into exit code 3.
Reports are deterministic: wall-clock figures go to a separate
``timing.json`` sidecar.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .chunker import (
    DEFAULT_CONFIDENCE,
    Chunk,
    Diagnostic,
    LayoutBox,
    LayoutPrediction,
    chunk_page,
    filter_confidence,
    granularity_stats,
    render_crops,
    whole_page_chunk,
)
from .corpus_io import (
    canonical_json,
    chunk_record,
    load_annotations,
    load_chunks,
    load_detections,
    load_manifest,
    load_qa,
    predictions_for_pages,
    read_jsonl,
    read_text,
    sha256_file,
    write_chunks,
    write_jsonl,
    write_text,
)
from .errors import MissingStageOutput, SemchunkError
from .match_eval import DEFAULT_THRESHOLDS, coverage, matched_iou, threshold_sweep
from .rag_eval import (
    DEFAULT_JUDGE_THRESHOLD,
    MODES,
    CategoryReport,
    JudgeVerdict,
    judge,
    mean_of_reports,
    pipeline_score,
)
from .retrieval import (
    TextIndex,
    bm25_build,
    bm25_query,
    load_embeddings,
    load_retrieval,
    rank_images,
    retrieval_record,
)
from .vlm_convert import (
    ChatClient,
    ChunkText,
    ConvertParams,
    Converter,
    PageText,
    cost_report,
    generate_answer,
    page_texts,
)

log = logging.getLogger("semchunk")

EXIT_OK, EXIT_ERROR, EXIT_WARNINGS = 0, 1, 3


@dataclass
class RunConfig:
    """Everything that determines a run's results.

    ``out_dir``, ``cache_dir``, ``jobs`` and ``endpoint`` do not affect the
    numbers and are left out of :meth:`digest`.
    """

    command: str
    inputs: dict[str, str] = field(default_factory=dict)  # role -> sha256 of file contents
    detections: str | None = None
    whole_page: bool = False
    confidence: float = DEFAULT_CONFIDENCE
    padding: float = 0.0
    endpoint: str | None = None
    model: str | None = None
    sampling: dict = field(default_factory=dict)
    retrieval_mode: str = "bm25"
    k: int = 5
    judge: bool = False
    out_dir: str = "."
    cache_dir: str | None = None
    jobs: int = 1
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.whole_page and self.detections:
            raise ValueError("choose either detections or whole-page chunking, not both")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def digest(self) -> str:
        d = asdict(self)
        for key in ("out_dir", "cache_dir", "jobs", "endpoint", "detections"):
            d.pop(key)
        return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


class Run:
    """Per-invocation bookkeeping: output dir, diagnostics, report writing."""

    def __init__(self, args, config: RunConfig):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.diagnostics: list[Diagnostic] = []

    def warn(self, diags: Sequence[Diagnostic]) -> None:
        self.diagnostics.extend(diags)

    @property
    def warnings(self) -> list[str]:
        return [str(d) for d in self.diagnostics]

    def write_json(self, name: str, obj) -> Path:
        path = self.out / name
        write_text(path, canonical_json(obj) + "\n")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_csv_cell(v) for v in r])
        path = self.out / name
        write_text(path, buf.getvalue())
        return path

    def finish(self) -> int:
        if self.diagnostics:
            print(f"{len(self.diagnostics)} warning(s):", file=sys.stderr)
            for w in self.warnings:
                print(f"  {w}", file=sys.stderr)
            if getattr(self.args, "strict", False):
                return EXIT_WARNINGS
        return EXIT_OK


def _csv_cell(v):
    if isinstance(v, float):
        return format(v, ".6g")
    return v


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _file_digests(**paths) -> dict[str, str]:
    return {role: sha256_file(p) for role, p in paths.items() if p}


def _label_map(path):
    if not path:
        return None
    import json

    return json.loads(read_text(path))


def _params(args) -> ConvertParams:
    return ConvertParams(
        endpoint=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        top_p=args.top_p,
        max_tokens=args.max_tokens,
        repetition_penalty=None if args.no_repetition_penalty else args.repetition_penalty,
        max_in_flight=args.jobs,
        timeout_s=args.timeout,
        retries=args.retries,
    )


def _sampling(p: ConvertParams) -> dict:
    return p.sampling()


# -- layout evaluation ------------------------------------------------------


def _layout_pages(args, run: Run):
    docs, diags = load_annotations(args.annotations)
    run.warn(diags)
    dets, diags = load_detections(args.detections, _label_map(args.label_map))
    run.warn(diags)
    preds = predictions_for_pages([d.page for d in docs], dets, run.diagnostics)
    return [(p, list(d.boxes)) for p, d in zip(preds, docs)]


def cmd_layout_eval(args) -> int:
    config = RunConfig(
        "layout-eval",
        _file_digests(annotations=args.annotations, detections=args.detections, label_map=args.label_map),
        confidence=args.confidence,
        extra={"class_aware": args.class_aware},
    )
    run = Run(args, config)
    pages = _layout_pages(args, run)
    rows = []
    for pred, gts in pages:
        kept = filter_confidence(pred, args.confidence).boxes
        m = matched_iou(kept, gts, args.class_aware)
        c = coverage(kept, gts)
        rows.append(
            {
                "page_id": pred.page.page_id,
                "matched_iou": m.score,
                "coverage": c.coverage,
                "n_pred": m.n_pred,
                "n_gt": m.n_gt,
            }
        )
    n = len(rows)
    report = {
        "command": "layout-eval",
        "config_digest": config.digest(),
        "confidence_threshold": args.confidence,
        "class_aware": args.class_aware,
        "mean_matched_iou": sum(r["matched_iou"] for r in rows) / n if n else 0.0,
        "mean_coverage": sum(r["coverage"] for r in rows) / n if n else 0.0,
        "n_pages": n,
        "per_page": rows,
        "warnings": run.warnings,
    }
    run.write_json("layout_eval.json", report)
    run.write_csv(
        "layout_eval.csv",
        ["page_id", "matched_iou", "coverage", "n_pred", "n_gt"],
        [[r["page_id"], r["matched_iou"], r["coverage"], r["n_pred"], r["n_gt"]] for r in rows],
    )
    print(f"mean matched IoU {report['mean_matched_iou']:.4f}, mean coverage {report['mean_coverage']:.4f} over {n} pages")
    return run.finish()


def cmd_sweep(args) -> int:
    config = RunConfig(
        "sweep",
        _file_digests(annotations=args.annotations, detections=args.detections, label_map=args.label_map),
        extra={"thresholds": args.thresholds, "class_aware": args.class_aware, "pooled": args.pooled},
    )
    run = Run(args, config)
    pages = _layout_pages(args, run)
    rows = threshold_sweep(pages, args.thresholds, args.class_aware, args.pooled)
    report = {
        "command": "sweep",
        "config_digest": config.digest(),
        "aggregation": "pooled" if args.pooled else "per_page_mean",
        "class_aware": args.class_aware,
        "rows": [asdict(r) for r in rows],
        "warnings": run.warnings,
    }
    run.write_json("sweep.json", report)
    run.write_csv(
        "sweep.csv",
        ["confidence_threshold", "matched_iou", "coverage", "n_boxes_kept"],
        [[r.confidence_threshold, r.matched_iou, r.coverage, r.n_boxes_kept] for r in rows],
    )
    for r in rows:
        print(f"conf {r.confidence_threshold:.2f}: IoU {100 * r.matched_iou:.1f}  coverage {100 * r.coverage:.1f}  kept {r.n_boxes_kept}")
    return run.finish()


# -- chunking ------------------------------------------------------------------


def _granularity_record(stats, include_global: bool) -> dict:
    return {
        "chunks_per_image": stats.chunks_per_image,
        "relative_chunk_size_pct": stats.relative_chunk_size_pct,
        "n_pages": stats.n_pages,
        "n_chunks": stats.n_chunks,
        "include_global": include_global,
    }


def cmd_chunk(args) -> int:
    if bool(args.detections) == bool(args.whole_page):
        raise SemchunkError("pass exactly one of --detections or --whole-page")
    config = RunConfig(
        "chunk",
        _file_digests(manifest=args.manifest, detections=args.detections, label_map=args.label_map),
        detections=args.detections,
        whole_page=args.whole_page,
        confidence=args.confidence,
        padding=args.padding,
        extra={"fallback_whole_page": args.fallback_whole_page, "suppress_contained": args.suppress_contained},
    )
    run = Run(args, config)
    manifest = load_manifest(args.manifest)
    geoms = [p.geom for p in manifest.pages]

    per_page: list[list[Chunk]] = []
    if args.whole_page:
        per_page = [whole_page_chunk(g) for g in geoms]
    else:
        dets, diags = load_detections(args.detections, _label_map(args.label_map))
        run.warn(diags)
        preds = predictions_for_pages(geoms, dets, run.diagnostics)
        for pred in preds:
            per_page.append(
                chunk_page(
                    pred,
                    args.confidence,
                    args.padding,
                    args.fallback_whole_page,
                    args.suppress_contained,
                    run.diagnostics,
                )
            )

    chunks = [c for cs in per_page for c in cs]
    write_chunks(run.out / "chunks.jsonl", chunks)

    if not args.no_render:
        crop_dir = run.out / "crops"

        def render(i):
            page = manifest.pages[i]
            return render_crops(manifest.resolve(page.image_uri), per_page[i], crop_dir)

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(render, range(len(manifest.pages))))

    stats = granularity_stats(list(zip(geoms, per_page)))
    report = {
        "command": "chunk",
        "config_digest": config.digest(),
        "n_chunks": len(chunks),
        "granularity": _granularity_record(stats, True),
        "warnings": run.warnings,
    }
    run.write_json("granularity.json", report)
    print(f"{len(chunks)} chunks over {len(geoms)} pages; {stats.chunks_per_image:.1f} chunks/page, "
          f"relative size {stats.relative_chunk_size_pct:.1f}%")
    return run.finish()


def cmd_stats(args) -> int:
    config = RunConfig("stats", _file_digests(chunks=args.chunks, manifest=args.manifest), extra={"semantic_only": args.semantic_only})
    run = Run(args, config)
    manifest = load_manifest(args.manifest)
    chunks = load_chunks(args.chunks)
    by_page: dict[str, list[Chunk]] = {p.page_id: [] for p in manifest.pages}
    for c in chunks:
        if c.page_id not in by_page:
            run.warn([Diagnostic("warning", str(args.chunks), f"chunk {c.chunk_id!r} refers to unknown page {c.page_id!r}")])
            continue
        by_page[c.page_id].append(c)
    stats = granularity_stats([(p.geom, by_page[p.page_id]) for p in manifest.pages], not args.semantic_only)
    report = {"command": "stats", "config_digest": config.digest(), "granularity": _granularity_record(stats, not args.semantic_only), "warnings": run.warnings}
    run.write_json("stats.json", report)
    print(f"chunks/page {stats.chunks_per_image:.1f}, relative chunk size {stats.relative_chunk_size_pct:.1f}%")
    return run.finish()


# -- conversion ----------------------------------------------------------------


def _crop_bytes(manifest, chunks: Sequence[Chunk], crops_dir: str | None) -> dict[str, bytes]:
    """PNG bytes for every chunk, from pre-rendered crops or cut from page images."""
    import math

    from PIL import Image

    out = {}
    if crops_dir:
        for c in chunks:
            out[c.chunk_id] = (Path(crops_dir) / c.image_name).read_bytes()
        return out
    by_page: dict[str, list[Chunk]] = {}
    for c in chunks:
        by_page.setdefault(c.page_id, []).append(c)
    for page_id, cs in by_page.items():
        with Image.open(manifest.resolve(manifest.page(page_id).image_uri)) as img:
            img.load()
            for c in cs:
                b = c.bbox
                crop = img.crop((math.floor(b.x0), math.floor(b.y0), math.ceil(b.x1), math.ceil(b.y1)))
                buf = io.BytesIO()
                crop.save(buf, format="PNG")
                out[c.chunk_id] = buf.getvalue()
    return out


def _page_text_record(p: PageText) -> dict:
    return {"page_id": p.page_id, "text": p.text, "chunk_order": p.chunk_order}


def _chunk_text_record(t: ChunkText) -> dict:
    return {
        "chunk_id": t.chunk_id,
        "page_id": t.page_id,
        "markdown": t.markdown,
        "input_tokens": t.input_tokens,
        "output_tokens": t.output_tokens,
        "usage_missing": t.usage_missing,
    }


def load_page_texts(path) -> list[PageText]:
    out = []
    for line, rec in read_jsonl(path):
        try:
            out.append(PageText(str(rec["page_id"]), rec["text"], list(rec.get("chunk_order", []))))
        except (KeyError, TypeError):
            from .errors import SchemaError

            raise SchemaError("expected {page_id, text}", path=path, line=line) from None
    return out


def cmd_convert(args) -> int:
    params = _params(args)
    config = RunConfig(
        "convert",
        _file_digests(chunks=args.chunks, manifest=args.manifest),
        model=params.model,
        sampling=_sampling(params),
        cache_dir=args.cache_dir,
        jobs=args.jobs,
        endpoint=params.endpoint,
    )
    run = Run(args, config)
    manifest = load_manifest(args.manifest)
    chunks = load_chunks(args.chunks)
    images = _crop_bytes(manifest, chunks, args.crops)
    with ChatClient(params) as client:
        conv = Converter(client, args.cache_dir)
        texts, logs = conv.convert_chunks([(c, images[c.chunk_id]) for c in chunks])
        n_requests = client.n_requests
    pages = page_texts(chunks, texts)

    write_jsonl(run.out / "chunk_texts.jsonl", (_chunk_text_record(texts[c.chunk_id]) for c in chunks))
    write_jsonl(run.out / "page_texts.jsonl", (_page_text_record(p) for p in pages))
    cost = cost_report(logs)
    missing = [t.chunk_id for t in texts.values() if t.usage_missing]
    if missing:
        run.warn([Diagnostic("warning", "convert", f"{len(missing)} response(s) lacked usage counts (recorded as -1)")])
    report = {
        "command": "convert",
        "config_digest": config.digest(),
        "n_pages": cost.n_pages,
        "mean_input_tokens": cost.mean_input_tokens,
        "mean_output_tokens": cost.mean_output_tokens,
        "mean_chunks": cost.mean_chunks,
        "per_request_input_tokens": cost.per_request_input_tokens,
        "n_usage_missing": cost.n_usage_missing,
        "per_page": [
            {"page_id": l.page_id, "n_chunks": l.n_chunks, "input_tokens": l.input_tokens, "output_tokens": l.output_tokens}
            for l in logs
        ],
        "warnings": run.warnings,
    }
    run.write_json("cost.json", report)
    run.write_json(
        "timing.json",
        {
            "mean_wall_time_s": cost.mean_wall_time_s,
            "per_page_wall_time_s": {l.page_id: l.wall_time_s for l in logs},
            "n_requests": n_requests,
            "n_cached": sum(t.from_cache for t in texts.values()),
        },
    )
    print(f"converted {len(chunks)} chunks on {cost.n_pages} pages ({n_requests} requests); "
          f"{cost.per_request_input_tokens:.1f} input tokens per request")
    return run.finish()


# -- retrieval -----------------------------------------------------------------


def cmd_index(args) -> int:
    config = RunConfig("index", _file_digests(texts=args.texts), extra={"unit": args.unit, "k1": args.k1, "b": args.b})
    run = Run(args, config)
    if args.unit == "page":
        units = [(p.page_id, p.text) for p in load_page_texts(args.texts)]
    else:
        units = [(str(rec["chunk_id"]), rec["markdown"]) for _, rec in read_jsonl(args.texts)]
    index = bm25_build(units, args.k1, args.b)
    rec = index.to_json()
    rec["unit"] = args.unit
    rec["config_digest"] = config.digest()
    run.write_json("index.json", rec)
    print(f"indexed {index.N} {args.unit} units, avgdl {index.avgdl:.1f}")
    return run.finish()


def _load_index(path) -> TextIndex:
    import json

    return TextIndex.from_json(json.loads(read_text(path)))


def cmd_retrieve(args) -> int:
    config = RunConfig(
        "retrieve",
        _file_digests(qa=args.qa, index=args.index, query_embeddings=args.query_embeddings, doc_embeddings=args.doc_embeddings),
        retrieval_mode=args.mode,
        k=args.top_k,
    )
    run = Run(args, config)
    qa, diags = load_qa(args.qa)
    run.warn(diags)
    results = []
    if args.mode == "bm25":
        if not args.index:
            raise SemchunkError("--index is required for bm25 retrieval")
        index = _load_index(args.index)
        for item in qa:
            results.append(bm25_query(index, item.question, args.top_k, item.qa_id))
    else:
        if not (args.query_embeddings and args.doc_embeddings):
            raise SemchunkError("--query-embeddings and --doc-embeddings are required for maxsim retrieval")
        queries = {q.unit_id: q for q in load_embeddings(args.query_embeddings)}
        docs = load_embeddings(args.doc_embeddings)
        for item in qa:
            if item.qa_id not in queries:
                raise MissingStageOutput(f"no query embedding for qa_id {item.qa_id!r}")
            r = rank_images(queries[item.qa_id], docs, args.top_k)
            results.append(r)
    write_jsonl(run.out / "retrieval.jsonl", (retrieval_record(r) for r in results))
    print(f"retrieved top-{args.top_k} for {len(results)} queries")
    return run.finish()


# -- RAG scoring ---------------------------------------------------------------


def _report_record(report: CategoryReport, mode: str, config: RunConfig, extra: dict | None = None) -> dict:
    digest = config.digest()
    rec = {
        "run_id": f"{mode}-{digest[:12]}",
        "mode": mode,
        "per_category": report.per_category,
        "overall": report.overall,
        "n_items": report.n_items,
        "config_digest": digest,
    }
    if extra:
        rec.update(extra)
    return rec


def _image_for_unit(manifest, chunk_by_id, unit_id: str, cache: dict) -> bytes:
    if unit_id not in cache:
        if unit_id in chunk_by_id:
            cache.update(_crop_bytes(manifest, [chunk_by_id[unit_id]], None))
        else:
            page = manifest.page(unit_id)
            cache[unit_id] = manifest.resolve(page.image_uri).read_bytes()
    return cache[unit_id]


def cmd_rag(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise SemchunkError(f"unknown mode {m!r}; choose from {', '.join(MODES)}")
    need_llm = any(m in ("generation", "overall") for m in modes)
    params = _params(args)
    config = RunConfig(
        "rag",
        _file_digests(
            qa=args.qa,
            retrieval=args.retrieval,
            index=args.index,
            page_texts=args.page_texts,
            chunks=args.chunks,
            manifest=args.manifest,
        ),
        model=params.model if need_llm else None,
        sampling=_sampling(params) if need_llm else {},
        k=args.top_k,
        judge=args.judge,
        endpoint=params.endpoint,
        jobs=args.jobs,
        extra={"modes": modes, "lcs_granularity": args.lcs_granularity, "visual": args.visual, "judge_threshold": args.judge_threshold},
    )
    run = Run(args, config)
    qa, diags = load_qa(args.qa)
    run.warn(diags)

    retrieved = {r.query_id: r.unit_ids()[: args.top_k] for r in load_retrieval(args.retrieval)}
    unit_texts = _load_index(args.index).texts if args.index else {}
    page_text = {p.page_id: p.text for p in load_page_texts(args.page_texts)} if args.page_texts else {}
    manifest = load_manifest(args.manifest) if args.manifest else None
    chunk_by_id = {c.chunk_id: c for c in load_chunks(args.chunks)} if args.chunks else {}
    if args.visual and manifest is None:
        raise SemchunkError("--visual needs --manifest (and --chunks for chunk-level units)")
    images: dict[str, bytes] = {}

    def texts_for(qa_id):
        ids = retrieved.get(qa_id)
        if ids is None:
            raise MissingStageOutput(f"no retrieval result for qa_id {qa_id!r}")
        missing = [u for u in ids if u not in unit_texts]
        if missing:
            raise MissingStageOutput(f"no text for retrieved unit(s) {missing} (pass --index)")
        return [unit_texts[u] for u in ids]

    def retrieved_context(item):
        if args.visual:
            ids = retrieved.get(item.qa_id)
            if ids is None:
                raise MissingStageOutput(f"no retrieval result for qa_id {item.qa_id!r}")
            return [_image_for_unit(manifest, chunk_by_id, u, images) for u in ids]
        return texts_for(item.qa_id)

    def gold_context(item):
        if not item.source_page_ids:
            raise MissingStageOutput(f"qa {item.qa_id!r} has no source_page_ids for generation mode")
        if args.visual:
            return [_image_for_unit(manifest, chunk_by_id, p, images) for p in item.source_page_ids]
        missing = [p for p in item.source_page_ids if p not in page_text]
        if missing:
            raise MissingStageOutput(f"no page text for {missing} (pass --page-texts)")
        return [page_text[p] for p in item.source_page_ids]

    outputs: dict[str, dict] = {}
    answers: dict[str, dict] = {item.qa_id: {"qa_id": item.qa_id} for item in qa}
    verdicts: list[JudgeVerdict] = []

    if "retrieval" in modes:
        outputs["retrieval"] = {item.qa_id: texts_for(item.qa_id) for item in qa}

    client = ChatClient(params) if need_llm else None
    try:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            if "generation" in modes:
                gen = list(pool.map(lambda it: generate_answer(it.question, gold_context(it), client), qa))
                outputs["generation"] = {it.qa_id: a for it, a in zip(qa, gen)}
                for it, a in zip(qa, gen):
                    answers[it.qa_id]["generation_answer"] = a
            if "overall" in modes:
                ans = list(pool.map(lambda it: generate_answer(it.question, retrieved_context(it), client), qa))
                for it, a in zip(qa, ans):
                    answers[it.qa_id]["answer"] = a
                if args.judge:
                    verdicts = list(
                        pool.map(
                            lambda pair: judge(pair[0].question, pair[0].gold_answer, pair[1], client, args.judge_threshold, pair[0].qa_id),
                            zip(qa, ans),
                        )
                    )
                    outputs["overall"] = {v.qa_id: v for v in verdicts}
                else:
                    outputs["overall"] = {it.qa_id: a for it, a in zip(qa, ans)}
    finally:
        if client is not None:
            client.close()

    summary = {}
    for mode in modes:
        report = pipeline_score(qa, mode, outputs[mode], args.lcs_granularity)
        scorer = {"retrieval": "lcs", "generation": "token_f1"}.get(mode, "judge" if args.judge else "token_f1")
        rec = _report_record(report, mode, config, {"scorer": scorer, "warnings": run.warnings})
        run.write_json(f"rag_{mode}.json", rec)
        summary[mode] = report.overall
    if need_llm:
        write_jsonl(run.out / "answers.jsonl", (answers[it.qa_id] for it in qa))
    if verdicts:
        write_jsonl(run.out / "verdicts.jsonl", (asdict(v) for v in verdicts))
    for mode, overall in summary.items():
        print(f"{mode}: ALL {overall:.1f}")
    return run.finish()


def cmd_judge(args) -> int:
    params = _params(args)
    config = RunConfig(
        "judge",
        _file_digests(qa=args.qa, answers=args.answers),
        model=params.model,
        sampling=_sampling(params),
        judge=True,
        endpoint=params.endpoint,
        jobs=args.jobs,
        extra={"judge_threshold": args.judge_threshold},
    )
    run = Run(args, config)
    qa, diags = load_qa(args.qa)
    run.warn(diags)
    answers = {}
    for _, rec in read_jsonl(args.answers):
        answers[str(rec["qa_id"])] = rec.get("answer", "")
    for item in qa:
        if item.qa_id not in answers:
            raise MissingStageOutput(f"no answer for qa_id {item.qa_id!r}")
    with ChatClient(params) as client, ThreadPoolExecutor(max_workers=args.jobs) as pool:
        verdicts = list(
            pool.map(lambda it: judge(it.question, it.gold_answer, answers[it.qa_id], client, args.judge_threshold, it.qa_id), qa)
        )
    write_jsonl(run.out / "verdicts.jsonl", (asdict(v) for v in verdicts))
    report = pipeline_score(qa, "overall", {v.qa_id: v for v in verdicts})
    run.write_json("judge.json", _report_record(report, "overall", config, {"scorer": "judge", "warnings": run.warnings}))
    print(f"judge accuracy ALL {report.overall:.1f} over {report.n_items} items")
    return run.finish()


def cmd_report(args) -> int:
    import json

    config = RunConfig("report", {f"run{i}": sha256_file(p) for i, p in enumerate(args.runs)})
    run = Run(args, config)
    reports, modes = [], set()
    for p in args.runs:
        rec = json.loads(read_text(p))
        reports.append(CategoryReport(dict(rec["per_category"]), float(rec["overall"]), int(rec.get("n_items", 0))))
        modes.add(rec.get("mode", ""))
    if len(modes) > 1:
        run.warn([Diagnostic("warning", "report", f"averaging runs of different modes: {sorted(modes)}")])
    combined = mean_of_reports(reports)
    mode = modes.pop() if len(modes) == 1 else "mixed"
    rec = _report_record(combined, mode, config, {"n_runs": len(reports), "warnings": run.warnings})
    run.write_json("report.json", rec)
    cats = list(combined.per_category)
    run.write_csv("report.csv", cats + ["ALL"], [[combined.per_category[c] for c in cats] + [combined.overall]])
    print(" ".join(f"{c} {combined.per_category[c]:.1f}" for c in cats) + f" ALL {combined.overall:.1f}")
    return run.finish()


# -- argument parsing ------------------------------------------------------


def _add_out(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict", action="store_true", help="exit with code 3 when any warning was raised")


def _add_endpoint(p):
    p.add_argument("--endpoint", default="http://127.0.0.1:8000", help="base URL of the chat-completions server")
    p.add_argument("--model", default=ConvertParams.model)
    p.add_argument("--temperature", type=float, default=ConvertParams.temperature)
    p.add_argument("--top-p", type=float, default=ConvertParams.top_p)
    p.add_argument("--max-tokens", type=int, default=ConvertParams.max_tokens)
    p.add_argument("--repetition-penalty", type=float, default=ConvertParams.repetition_penalty)
    p.add_argument("--no-repetition-penalty", action="store_true", help="omit repetition_penalty from requests")
    p.add_argument("--timeout", type=float, default=ConvertParams.timeout_s, help="per-request timeout in seconds")
    p.add_argument("--retries", type=int, default=ConvertParams.retries)
    p.add_argument("--jobs", type=int, default=1, help="maximum requests in flight")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semchunk", description="Semantic layout chunking and RAG evaluation toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("layout-eval", cmd_layout_eval, "matched IoU and coverage per page at one confidence threshold"),
        ("sweep", cmd_sweep, "matched IoU and coverage across confidence thresholds"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--annotations", required=True)
        p.add_argument("--detections", required=True)
        p.add_argument("--label-map", help="JSON object mapping detector labels to categories")
        p.add_argument("--class-aware", action="store_true", help="zero IoU between boxes of different categories")
        if name == "layout-eval":
            p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
        else:
            p.add_argument("--thresholds", type=_parse_floats, default=list(DEFAULT_THRESHOLDS))
            p.add_argument("--pooled", action="store_true", help="pool boxes corpus-wide instead of averaging pages")
        _add_out(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("chunk", help="plan (and render) chunks from detections or whole pages")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections")
    p.add_argument("--label-map")
    p.add_argument("--whole-page", action="store_true", help="one chunk per page (no layout analysis)")
    p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    p.add_argument("--padding", type=float, default=0.0, help="pixels added on every side before clamping")
    p.add_argument("--fallback-whole-page", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--suppress-contained", type=float, default=None, metavar="RATIO",
                   help="drop boxes lying at least RATIO inside another box (e.g. 0.95)")
    p.add_argument("--no-render", action="store_true", help="skip writing crop images")
    p.add_argument("--jobs", type=int, default=1)
    _add_out(p)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("stats", help="granularity statistics of a chunk manifest")
    p.add_argument("--chunks", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--semantic-only", action="store_true", help="ignore title/header/footer/date/author chunks")
    _add_out(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("convert", help="convert chunk images to markdown through the VLM endpoint")
    p.add_argument("--chunks", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--crops", help="directory of pre-rendered crops (default: cut from page images)")
    p.add_argument("--cache-dir")
    _add_endpoint(p)
    _add_out(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("index", help="build a BM25 index over page or chunk texts")
    p.add_argument("--texts", required=True, help="page_texts.jsonl (or chunk_texts.jsonl with --unit chunk)")
    p.add_argument("--unit", choices=("page", "chunk"), default="page")
    p.add_argument("--k1", type=float, default=1.5)
    p.add_argument("--b", type=float, default=0.75)
    _add_out(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="rank units for every QA question")
    p.add_argument("--qa", required=True)
    p.add_argument("--mode", choices=("bm25", "maxsim"), default="bm25")
    p.add_argument("--index")
    p.add_argument("--query-embeddings")
    p.add_argument("--doc-embeddings")
    p.add_argument("--top-k", type=int, default=5)
    _add_out(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rag", help="score retrieval, generation, and end-to-end answers")
    p.add_argument("--qa", required=True)
    p.add_argument("--retrieval", required=True)
    p.add_argument("--index", help="index.json supplying unit texts")
    p.add_argument("--page-texts", help="page_texts.jsonl used as gold context in generation mode")
    p.add_argument("--modes", default="retrieval,generation,overall")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--lcs-granularity", choices=("char", "word"), default="char")
    p.add_argument("--judge", action="store_true", help="score overall answers with the LLM judge")
    p.add_argument("--judge-threshold", type=float, default=DEFAULT_JUDGE_THRESHOLD)
    p.add_argument("--visual", action="store_true", help="send retrieved units to the answer model as images")
    p.add_argument("--manifest")
    p.add_argument("--chunks")
    _add_endpoint(p)
    _add_out(p)
    p.set_defaults(func=cmd_rag)

    p = sub.add_parser("judge", help="LLM-as-judge scoring of generated answers")
    p.add_argument("--qa", required=True)
    p.add_argument("--answers", required=True, help="JSON Lines of {qa_id, answer}")
    p.add_argument("--judge-threshold", type=float, default=DEFAULT_JUDGE_THRESHOLD)
    _add_endpoint(p)
    _add_out(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("report", help="average several run reports (e.g. retriever x answer-model grid)")
    p.add_argument("runs", nargs="+")
    _add_out(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "jobs", 1) < 1 or getattr(args, "top_k", 1) < 1:
        parser.error("--jobs and --top-k must be >= 1")
    try:
        return args.func(args)
    except (SemchunkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
