"""VLM text conversion over an OpenAI-style ``/v1/chat/completions`` endpoint.

:class:`ChatClient` is the one place that talks HTTP. It caps the number of
outstanding requests with a semaphore, so every caller sharing a client
(chunk conversion, answer generation, judging) respects ``max_in_flight``.
:class:`Converter` adds the content-addressed result cache.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .chunker import Chunk
from .corpus_io import canonical_json
from .errors import ConvertTimeout, EmptyCorpus, EndpointError, MixedPages
from .prompts import ANSWER_SYSTEM_PROMPT, OCR_PROMPT

log = logging.getLogger(__name__)

API_KEY_ENV = "SEMCHUNK_API_KEY"


@dataclass(frozen=True)
class ConvertParams:
    endpoint: str = "http://127.0.0.1:8000"
    model: str = "Qwen/Qwen2.5-VL-72B-Instruct"
    temperature: float = 0.3
    top_p: float = 0.95
    max_tokens: int = 8192
    repetition_penalty: float | None = 1.1
    max_in_flight: int = 1
    timeout_s: float = 120.0
    retries: int = 3
    backoff_s: tuple[float, ...] = (1.0, 2.0, 4.0)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def url(self) -> str:
        return self.endpoint.rstrip("/") + "/v1/chat/completions"

    def sampling(self) -> dict:
        out = {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        if self.repetition_penalty is not None:
            out["repetition_penalty"] = self.repetition_penalty
        return out


@dataclass(frozen=True)
class ChunkText:
    chunk_id: str
    markdown: str
    input_tokens: int
    output_tokens: int
    latency_ms: float = 0.0
    from_cache: bool = False
    usage_missing: bool = False
    page_id: str = ""


@dataclass(frozen=True)
class PageText:
    page_id: str
    text: str
    chunk_order: list[str]


@dataclass(frozen=True)
class PageLog:
    page_id: str
    n_chunks: int
    input_tokens: int
    output_tokens: int
    wall_time_s: float = 0.0
    n_usage_missing: int = 0


@dataclass(frozen=True)
class CostReport:
    n_pages: int
    mean_input_tokens: float
    mean_output_tokens: float
    mean_chunks: float
    mean_wall_time_s: float
    per_request_input_tokens: float
    n_usage_missing: int = 0


@dataclass(frozen=True)
class ChatReply:
    content: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    usage_missing: bool = False


def png_data_uri(image: bytes) -> str:
    return "data:image/png;base64," + base64.b64encode(image).decode("ascii")


def image_part(image: bytes) -> dict:
    return {"type": "image_url", "image_url": {"url": png_data_uri(image)}}


class ChatClient:
    """Thread-safe chat-completions client with bounded parallelism and retries."""

    def __init__(self, params: ConvertParams, transport: httpx.BaseTransport | None = None):
        self.params = params
        self._sem = threading.BoundedSemaphore(params.max_in_flight)
        headers = {}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(timeout=params.timeout_s, headers=headers, transport=transport)
        self.n_requests = 0
        self._count_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post_once(self, payload: dict) -> httpx.Response:
        with self._sem:
            with self._count_lock:
                self.n_requests += 1
            return self._http.post(self.params.url, json=payload)

    def chat(self, messages: list[dict], **overrides) -> ChatReply:
        p = self.params
        payload = {"model": p.model, "messages": messages, **p.sampling(), **overrides}
        delays = list(p.backoff_s) or [0.0]
        for attempt in range(p.retries + 1):
            last = attempt == p.retries
            t0 = time.perf_counter()
            try:
                resp = self._post_once(payload)
            except httpx.TimeoutException as exc:
                if last:
                    raise ConvertTimeout(f"{p.url} timed out after {p.timeout_s}s") from exc
            except httpx.TransportError as exc:
                if last:
                    raise EndpointError(None, str(exc), p.url) from exc
            else:
                latency = (time.perf_counter() - t0) * 1000.0
                if resp.is_success:
                    return _parse_reply(resp, latency, p.url)
                retryable = resp.status_code == 429 or resp.status_code >= 500
                if last or not retryable:
                    raise EndpointError(resp.status_code, resp.text, p.url)
            delay = delays[min(attempt, len(delays) - 1)]
            log.warning("request to %s failed (attempt %d); retrying in %.1fs", p.url, attempt + 1, delay)
            time.sleep(delay)
        raise AssertionError("unreachable")


def _parse_reply(resp: httpx.Response, latency_ms: float, url: str) -> ChatReply:
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise EndpointError(resp.status_code, resp.text, url) from None
    if content is None:
        content = ""
    usage = data.get("usage") or {}
    pt, ct = usage.get("prompt_tokens"), usage.get("completion_tokens")
    if not isinstance(pt, int) or not isinstance(ct, int):
        log.warning("response from %s has no usage counts; recording -1", url)
        return ChatReply(content, -1, -1, latency_ms, usage_missing=True)
    return ChatReply(content, pt, ct, latency_ms)


def cache_key(image: bytes, prompt: str, params: ConvertParams) -> str:
    parts = {
        "image_sha256": hashlib.sha256(image).hexdigest(),
        "prompt": prompt,
        "model": params.model,
        "temperature": repr(params.temperature),
        "top_p": repr(params.top_p),
        "max_tokens": params.max_tokens,
        "repetition_penalty": repr(params.repetition_penalty),
    }
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode("utf-8")).hexdigest()


class Converter:
    """Chunk-image to markdown conversion with an on-disk result cache."""

    def __init__(self, client: ChatClient, cache_dir: str | Path | None = None, prompt: str = OCR_PROMPT):
        self.client = client
        self.prompt = prompt
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    @property
    def params(self) -> ConvertParams:
        return self.client.params

    def _cache_get(self, key: str) -> dict | None:
        if self.cache_dir is None:
            return None
        path = self.cache_dir / f"{key}.json"
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except ValueError:
            log.warning("ignoring corrupt cache entry %s", path)
            return None

    def _cache_put(self, key: str, ct: ChunkText) -> None:
        if self.cache_dir is None:
            return
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(canonical_json(asdict(ct)) + "\n")
        os.replace(tmp, self.cache_dir / f"{key}.json")

    def convert_chunk(self, image: bytes, chunk_id: str = "", page_id: str = "", prompt: str | None = None) -> ChunkText:
        if not image:
            raise ValueError("empty image")
        prompt = self.prompt if prompt is None else prompt
        key = cache_key(image, prompt, self.params)
        hit = self._cache_get(key)
        if hit is not None:
            return ChunkText(
                chunk_id,
                hit["markdown"],
                int(hit["input_tokens"]),
                int(hit["output_tokens"]),
                0.0,
                True,
                bool(hit.get("usage_missing", False)),
                page_id,
            )
        messages = [
            {"role": "system", "content": prompt},
            {"role": "user", "content": [image_part(image)]},
        ]
        reply = self.client.chat(messages)
        ct = ChunkText(
            chunk_id,
            reply.content,
            reply.prompt_tokens,
            reply.completion_tokens,
            reply.latency_ms,
            False,
            reply.usage_missing,
            page_id,
        )
        self._cache_put(key, ct)
        return ct

    def convert_chunks(self, items: Sequence[tuple[Chunk, bytes]]) -> tuple[dict[str, ChunkText], list[PageLog]]:
        """Convert many chunks concurrently (``max_in_flight`` workers).

        Returns texts keyed by chunk_id and one PageLog per page, in
        first-appearance order. A page's wall time spans from its first
        request start to its last completion.
        """
        spans: dict[str, list[float]] = {}
        lock = threading.Lock()

        def work(item):
            chunk, image = item
            t0 = time.perf_counter()
            ct = self.convert_chunk(image, chunk.chunk_id, chunk.page_id)
            t1 = time.perf_counter()
            with lock:
                s = spans.setdefault(chunk.page_id, [t0, t1])
                s[0], s[1] = min(s[0], t0), max(s[1], t1)
            return ct

        with ThreadPoolExecutor(max_workers=self.params.max_in_flight) as pool:
            results = list(pool.map(work, items))
        texts = {ct.chunk_id: ct for ct in results}

        logs = []
        for page_id in dict.fromkeys(c.page_id for c, _ in items):
            page_texts = [ct for ct in results if ct.page_id == page_id]
            ok = [ct for ct in page_texts if not ct.usage_missing]
            span = spans.get(page_id, [0.0, 0.0])
            logs.append(
                PageLog(
                    page_id,
                    len(page_texts),
                    sum(ct.input_tokens for ct in ok),
                    sum(ct.output_tokens for ct in ok),
                    span[1] - span[0],
                    len(page_texts) - len(ok),
                )
            )
        return texts, logs


def _page_of(chunk_id: str) -> str:
    return chunk_id.rsplit("__", 1)[0] if "__" in chunk_id else ""


def assemble_page_text(chunks: Sequence[ChunkText], separator: str = "\n\n", page_id: str | None = None) -> PageText:
    """Join chunk markdown (already in reading order), skipping empty texts."""
    pages = {c.page_id or _page_of(c.chunk_id) for c in chunks} - {""}
    if page_id is not None:
        pages.add(page_id)
    if len(pages) > 1:
        raise MixedPages(f"chunks come from several pages: {sorted(pages)}")
    pid = page_id if page_id is not None else (pages.pop() if pages else "")
    text = separator.join(c.markdown for c in chunks if c.markdown)
    return PageText(pid, text, [c.chunk_id for c in chunks])


def page_texts(chunks: Sequence[Chunk], texts: Mapping[str, ChunkText], separator: str = "\n\n") -> list[PageText]:
    """PageText for every page of ``chunks``, ordered by ``order_index`` within a page."""
    by_page: dict[str, list[Chunk]] = {}
    for c in chunks:
        by_page.setdefault(c.page_id, []).append(c)
    out = []
    for pid, cs in by_page.items():
        cs = sorted(cs, key=lambda c: c.order_index)
        out.append(assemble_page_text([texts[c.chunk_id] for c in cs], separator, pid))
    return out


def cost_report(page_logs: Sequence[PageLog]) -> CostReport:
    if not page_logs:
        raise EmptyCorpus("cost_report needs at least one page log")
    n = len(page_logs)
    mean_in = math.fsum(p.input_tokens for p in page_logs) / n
    mean_out = math.fsum(p.output_tokens for p in page_logs) / n
    mean_chunks = math.fsum(p.n_chunks for p in page_logs) / n
    mean_wall = math.fsum(p.wall_time_s for p in page_logs) / n
    per_req = mean_in / mean_chunks if mean_chunks else 0.0
    return CostReport(n, mean_in, mean_out, mean_chunks, mean_wall, per_req, sum(p.n_usage_missing for p in page_logs))


def generate_answer(question: str, context: Sequence[str | bytes], client: ChatClient) -> str:
    """Ask the answer model ``question`` given retrieved ``context``.

    Strings are sent as numbered text passages; bytes are sent as PNG image
    parts. Either way the context keeps its retrieval-rank order and the
    question comes last.
    """
    if not context:
        raise ValueError("generate_answer needs at least one context item")
    if all(isinstance(c, str) for c in context):
        passages = "\n\n".join(f"### Context {i}\n\n{c}" for i, c in enumerate(context, start=1))
        user: str | list = f"{passages}\n\nQuestion: {question}"
    else:
        user = []
        for c in context:
            user.append({"type": "text", "text": c} if isinstance(c, str) else image_part(c))
        user.append({"type": "text", "text": f"Question: {question}"})
    messages = [{"role": "system", "content": ANSWER_SYSTEM_PROMPT}, {"role": "user", "content": user}]
    return client.chat(messages).content
