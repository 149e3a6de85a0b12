"""Deterministic stand-in for a chat-completions server.

Used by the test suite and the demo script. It answers three kinds of
requests, recognised by their system prompt:

* OCR: the image is decoded and every known fill colour in it is mapped back
  to its text (``texts_by_color``), in top-left reading order.
* Answering: returns the context paragraph sharing the most tokens with the
  question (an extractive reader).
* Judging: scores ``1 + 4 * token_f1(generated, reference)``.

The server counts requests and records the peak number in flight, and can
inject seeded random latency, failures, or missing usage fields.
"""

from __future__ import annotations

import base64
import io
import json
import math
import random
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .prompts import ANSWER_SYSTEM_PROMPT, JUDGE_SYSTEM_PROMPT, OCR_PROMPT
from .retrieval import normalize_text

_CONTEXT_HEADER = re.compile(r"^### Context \d+$")


def _hex(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(*(int(v) for v in rgb[:3]))


def ocr_image(png: bytes, texts_by_color: dict[str, str]) -> str:
    from PIL import Image

    with Image.open(io.BytesIO(png)) as img:
        arr = np.asarray(img.convert("RGB"))
    found = []
    for color, text in texts_by_color.items():
        rgb = tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))
        ys, xs = np.nonzero(np.all(arr == rgb, axis=2))
        if len(ys):
            found.append((int(ys.min()), int(xs.min()), text))
    found.sort(key=lambda t: (t[0], t[1]))
    return "\n\n".join(t for _, _, t in found)


def _image_bytes(part: dict) -> bytes:
    url = part["image_url"]["url"]
    return base64.b64decode(url.split(",", 1)[1])


def _user_parts(messages) -> list:
    user = next((m["content"] for m in messages if m.get("role") == "user"), "")
    if isinstance(user, str):
        return [{"type": "text", "text": user}]
    return list(user)


def extract_answer(question: str, paragraphs: list[str]) -> str:
    q = set(normalize_text(question))
    best, best_n = "", -1
    for p in paragraphs:
        n = len(q & set(normalize_text(p)))
        if n > best_n:
            best, best_n = p, n
    return best


class _State:
    def __init__(self, texts_by_color, latency, seed, fail_status, omit_usage):
        self.texts_by_color = dict(texts_by_color or {})
        self.latency = latency
        self.rng = random.Random(seed)
        self.fail_status = fail_status
        self.omit_usage = omit_usage
        self.lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0
        self.n_requests = 0
        self.requests: list[dict] = []


class MockChatServer:
    """Background-thread HTTP server; use as a context manager."""

    def __init__(
        self,
        texts_by_color: dict[str, str] | None = None,
        latency: tuple[float, float] = (0.0, 0.0),
        seed: int = 0,
        fail_status: int | None = None,
        omit_usage: bool = False,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.state = _State(texts_by_color, latency, seed, fail_status, omit_usage)
        state = self.state

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                with state.lock:
                    state.in_flight += 1
                    state.n_requests += 1
                    state.peak_in_flight = max(state.peak_in_flight, state.in_flight)
                    lo, hi = state.latency
                    delay = state.rng.uniform(lo, hi) if hi > 0 else 0.0
                try:
                    body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                    if delay:
                        time.sleep(delay)
                    if not self.path.endswith("/v1/chat/completions"):
                        self._send(404, {"error": "not found"})
                        return
                    if state.fail_status is not None:
                        self._send(state.fail_status, {"error": "injected failure"})
                        return
                    try:
                        req = json.loads(body)
                    except ValueError:
                        self._send(400, {"error": "bad json"})
                        return
                    with state.lock:
                        state.requests.append(req)
                    content, pt, ct = _respond(req, state.texts_by_color)
                    out = {
                        "id": "mock",
                        "object": "chat.completion",
                        "model": req.get("model", ""),
                        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                    }
                    if not state.omit_usage:
                        out["usage"] = {"prompt_tokens": pt, "completion_tokens": ct, "total_tokens": pt + ct}
                    self._send(200, out)
                finally:
                    self._leave()

            def _leave(self):
                # count the request as finished before the client can see the reply
                if not getattr(self, "_left", False):
                    self._left = True
                    with state.lock:
                        state.in_flight -= 1

            def _send(self, status, obj):
                data = json.dumps(obj).encode("utf-8")
                self._leave()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def peak_in_flight(self) -> int:
        return self.state.peak_in_flight

    @property
    def n_requests(self) -> int:
        return self.state.n_requests

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()


def _respond(req: dict, texts_by_color: dict[str, str]) -> tuple[str, int, int]:
    messages = req.get("messages", [])
    system = next((m["content"] for m in messages if m.get("role") == "system"), "")
    parts = _user_parts(messages)
    images = [_image_bytes(p) for p in parts if p.get("type") == "image_url"]
    texts = [p["text"] for p in parts if p.get("type") == "text"]
    prompt_tokens = len(normalize_text(system)) + sum(len(normalize_text(t)) for t in texts)

    if system == OCR_PROMPT or (images and system not in (ANSWER_SYSTEM_PROMPT, JUDGE_SYSTEM_PROMPT)):
        from PIL import Image

        pieces = []
        for png in images:
            with Image.open(io.BytesIO(png)) as img:
                w, h = img.size
            # roughly one visual token per 28x28 patch
            prompt_tokens += math.ceil(w / 28) * math.ceil(h / 28)
            pieces.append(ocr_image(png, texts_by_color))
        content = "\n\n".join(p for p in pieces if p)

    elif system == JUDGE_SYSTEM_PROMPT:
        user = texts[0] if texts else ""
        ref = re.search(r"## Reference Answer\n(.*?)\n\n## Generated Answer\n", user, re.S)
        gen = user.split("## Generated Answer\n", 1)[-1]
        from .rag_eval import token_f1

        f1 = token_f1(gen, ref.group(1) if ref else "").f1
        score = round(1.0 + 4.0 * f1, 1)
        content = json.dumps({"reason": f"token overlap f1={f1:.3f}", "score": f"{score:.1f}"})

    elif system == ANSWER_SYSTEM_PROMPT:
        question = ""
        paragraphs: list[str] = []
        for t in texts:
            body, sep, q = t.rpartition("Question: ")
            if sep:
                question = q.strip()
                t = body
            paragraphs.extend(p.strip() for p in t.split("\n\n"))
        for png in images:
            paragraphs.extend(ocr_image(png, texts_by_color).split("\n\n"))
        paragraphs = [p for p in paragraphs if p and not _CONTEXT_HEADER.match(p)]
        content = extract_answer(question, paragraphs)

    else:
        content = texts[-1] if texts else ""

    return content, prompt_tokens, len(normalize_text(content))


def main(argv=None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="Run the deterministic mock chat-completions server.")
    ap.add_argument("--texts", help="JSON file mapping '#rrggbb' colours to chunk text")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    args = ap.parse_args(argv)
    texts = {}
    if args.texts:
        with open(args.texts, encoding="utf-8") as f:
            texts = json.load(f)
    srv = MockChatServer(texts, host=args.host, port=args.port)
    print(f"mock server listening on {srv.url}", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
