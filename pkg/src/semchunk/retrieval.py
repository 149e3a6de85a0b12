"""Text and image retrieval over chunk/page units, plus the LCS evidence metric.

Text retrieval is Okapi BM25 over :func:`normalize_text` tokens. Image
retrieval scores externally computed multi-vector embeddings with
late-interaction MaxSim. Nothing here runs a neural model.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateId, EmptyCorpus, ParseError, SchemaError

_CJK_RANGES = (
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x31F0, 0x31FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2FA1F),
)


def is_cjk(ch: str) -> bool:
    o = ord(ch)
    return any(lo <= o <= hi for lo, hi in _CJK_RANGES)


def normalize_text(raw: str) -> list[str]:
    """NFKC, case-fold, punctuation/symbols to spaces, split on whitespace.

    CJK ideographs and kana become one token per code point.
    """
    text = unicodedata.normalize("NFKC", raw).casefold()
    tokens: list[str] = []
    buf: list[str] = []
    for ch in text:
        cat = unicodedata.category(ch)
        if ch.isspace() or cat[0] in "PSZ" or cat == "Cc":
            if buf:
                tokens.append("".join(buf))
                buf = []
        elif is_cjk(ch):
            if buf:
                tokens.append("".join(buf))
                buf = []
            tokens.append(ch)
        else:
            buf.append(ch)
    if buf:
        tokens.append("".join(buf))
    return tokens


# -- LCS -------------------------------------------------------------------


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence of ``a`` and ``b``.

    Bit-parallel: each DP row is packed into one Python int, so the cost is
    O(len(b)) big-int operations on ``len(a)``-bit integers.
    """
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    masks: dict = {}
    for i, sym in enumerate(a):
        masks[sym] = masks.get(sym, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for sym in b:
        m = masks.get(sym)
        if m is None:
            continue
        u = v & m
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def lcs_score(evidence: str, retrieved: Sequence[str], granularity: str = "char") -> float:
    """Best fraction of ``evidence`` recoverable as a subsequence of one candidate.

    ``granularity="char"`` compares normalized characters (tokens concatenated
    without separators); ``"word"`` compares token sequences.
    """
    ev = _lcs_units(evidence, granularity)
    if not ev:
        raise ValueError("evidence is empty after normalization")
    best = 0
    for cand in retrieved:
        best = max(best, lcs_length(ev, _lcs_units(cand, granularity)))
        if best == len(ev):
            break
    return best / len(ev)


def _lcs_units(text: str, granularity: str):
    toks = normalize_text(text)
    if granularity == "char":
        return "".join(toks)
    if granularity == "word":
        return toks
    raise ValueError(f"unknown LCS granularity {granularity!r}")


# -- BM25 ------------------------------------------------------------------


@dataclass
class RetrievalResult:
    query_id: str
    ranked: list[tuple[str, float]]
    k: int

    def unit_ids(self) -> list[str]:
        return [u for u, _ in self.ranked]


def _top_k(query_id: str, scores: Iterable[tuple[str, float]], k: int, keep_zero: bool) -> RetrievalResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    items = [(u, s) for u, s in scores if keep_zero or s > 0]
    items.sort(key=lambda us: (-us[1], us[0]))
    return RetrievalResult(query_id, items[:k], k)


@dataclass
class TextIndex:
    documents: list[tuple[str, list[str]]]
    df: dict[str, int]
    avgdl: float
    N: int
    k1: float = 1.5
    b: float = 0.75
    texts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._tf = [Counter(toks) for _, toks in self.documents]

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log((self.N - df + 0.5) / (df + 0.5) + 1.0)

    def score(self, query_terms: Iterable[str], i: int) -> float:
        tf = self._tf[i]
        dl = len(self.documents[i][1])
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl) if self.avgdl > 0 else self.k1
        total = []
        for t in query_terms:
            f = tf.get(t, 0)
            if f:
                total.append(self.idf(t) * f * (self.k1 + 1.0) / (f + norm))
        return math.fsum(total)

    def to_json(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "documents": [
                {"unit_id": u, "tokens": toks, "text": self.texts.get(u, "")} for u, toks in self.documents
            ],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "TextIndex":
        try:
            docs = [(str(d["unit_id"]), list(d["tokens"])) for d in rec["documents"]]
            texts = {str(d["unit_id"]): d.get("text", "") for d in rec["documents"]}
            return _make_index(docs, float(rec["k1"]), float(rec["b"]), texts)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed index: {exc}") from None


def _make_index(docs, k1, b, texts) -> TextIndex:
    df: Counter = Counter()
    for _, toks in docs:
        df.update(set(toks))
    n = len(docs)
    avgdl = math.fsum(len(t) for _, t in docs) / n if n else 0.0
    return TextIndex(docs, dict(df), avgdl, n, k1, b, texts)


def bm25_build(units: Sequence[tuple[str, str]], k1: float = 1.5, b: float = 0.75) -> TextIndex:
    if not units:
        raise EmptyCorpus("bm25_build needs at least one unit")
    if not k1 > 0:
        raise ValueError("k1 must be > 0")
    if not 0.0 <= b <= 1.0:
        raise ValueError("b must be in [0, 1]")
    seen = set()
    docs = []
    for unit_id, text in units:
        if unit_id in seen:
            raise DuplicateId(f"duplicate unit_id {unit_id!r}")
        seen.add(unit_id)
        docs.append((unit_id, normalize_text(text)))
    return _make_index(docs, k1, b, {u: t for u, t in units})


def bm25_query(index: TextIndex, query: str, k: int = 5, query_id: str = "") -> RetrievalResult:
    """Top-``k`` units by BM25; units scoring zero are left out.

    Each distinct query term contributes once.
    """
    terms = list(dict.fromkeys(normalize_text(query)))
    scores = ((u, index.score(terms, i)) for i, (u, _) in enumerate(index.documents))
    return _top_k(query_id, scores, k, keep_zero=False)


# -- late interaction --------------------------------------------------------


@dataclass
class MultiVec:
    unit_id: str
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError(f"{self.unit_id}: vectors must be a nonempty (n, dim) array, got shape {v.shape}")
        self.vectors = v

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def maxsim_score(query: MultiVec, doc: MultiVec) -> float:
    if query.dim != doc.dim:
        raise DimensionMismatch(f"query dim {query.dim} != doc {doc.unit_id!r} dim {doc.dim}")
    sims = query.vectors @ doc.vectors.T
    return float(sims.max(axis=1).sum())


def rank_images(query: MultiVec, docs: Sequence[MultiVec], k: int = 5) -> RetrievalResult:
    scores = [(d.unit_id, maxsim_score(query, d)) for d in docs]
    return _top_k(query.unit_id, scores, k, keep_zero=True)


def load_embeddings(path: str | Path) -> list[MultiVec]:
    """Read ``{unit_id, vectors: [[...], ...]}`` JSON Lines."""
    from .corpus_io import read_jsonl

    out = []
    dim = None
    for line, rec in read_jsonl(path):
        if not isinstance(rec, dict) or "unit_id" not in rec or "vectors" not in rec:
            raise SchemaError("expected {unit_id, vectors}", path=path, line=line)
        try:
            mv = MultiVec(str(rec["unit_id"]), rec["vectors"])
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), path=path, line=line) from None
        if dim is not None and mv.dim != dim:
            raise DimensionMismatch(f"{path}:{line}: dimension {mv.dim} differs from {dim}")
        dim = mv.dim
        out.append(mv)
    return out


def retrieval_record(r: RetrievalResult) -> dict:
    return {"query_id": r.query_id, "ranked": [{"unit_id": u, "score": s} for u, s in r.ranked]}


def load_retrieval(path: str | Path) -> list[RetrievalResult]:
    from .corpus_io import read_jsonl

    out = []
    for line, rec in read_jsonl(path):
        try:
            ranked = [(str(x["unit_id"]), float(x["score"])) for x in rec["ranked"]]
            out.append(RetrievalResult(str(rec["query_id"]), ranked, max(len(ranked), 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed retrieval record: {exc}", path=path, line=line) from None
    return out
