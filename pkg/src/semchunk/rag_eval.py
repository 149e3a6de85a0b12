"""Answer-quality scoring and per-category aggregation."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus_io import QA_CATEGORIES, QAItem
from .errors import EmptyInput, JudgeParseError, MissingStageOutput, ScoreRangeError
from .prompts import judge_messages
from .retrieval import lcs_score, normalize_text

log = logging.getLogger(__name__)

DEFAULT_JUDGE_THRESHOLD = 4.0
MODES = ("retrieval", "generation", "overall")


@dataclass(frozen=True)
class F1Score:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class JudgeVerdict:
    qa_id: str
    reason: str
    score: float
    correct: bool

    @property
    def value(self) -> int:
        return int(self.correct)


@dataclass(frozen=True)
class CategoryReport:
    per_category: dict[str, float]
    overall: float
    n_items: int


def token_f1(prediction: str, gold: str) -> F1Score:
    """Precision/recall/F1 over the multiset of shared normalized tokens."""
    pred = normalize_text(prediction)
    ref = normalize_text(gold)
    if not pred and not ref:
        return F1Score(1.0, 1.0, 1.0)
    if not pred or not ref:
        return F1Score(0.0, 0.0, 0.0)
    common = sum((Counter(pred) & Counter(ref)).values())
    if common == 0:
        return F1Score(0.0, 0.0, 0.0)
    # 2PR/(P+R) reduces to 2c/(|pred|+|gold|); one division keeps it correctly rounded
    return F1Score(common / len(pred), common / len(ref), 2 * common / (len(pred) + len(ref)))


def _json_objects(text: str) -> Iterable[dict]:
    dec = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = dec.raw_decode(text, m.start())
        except ValueError:
            continue
        if isinstance(obj, dict):
            yield obj


def parse_judge_response(text: str, qa_id: str = "", threshold: float = DEFAULT_JUDGE_THRESHOLD) -> JudgeVerdict:
    """Pull the first JSON object carrying both ``reason`` and ``score`` out of ``text``.

    The score may be a number or a numeric string ("4.0").
    """
    for obj in _json_objects(text):
        if "reason" not in obj or "score" not in obj:
            continue
        raw = obj["score"]
        if isinstance(raw, bool):
            break
        try:
            score = float(raw)
        except (TypeError, ValueError):
            break
        if not math.isfinite(score) or not (1.0 <= score <= 5.0):
            raise ScoreRangeError(f"judge score {raw!r} outside [1, 5]")
        return JudgeVerdict(qa_id, str(obj["reason"]), score, score >= threshold)
    raise JudgeParseError(f"no JSON object with 'reason' and a numeric 'score' in judge output: {text[:200]!r}")


def judge(question: str, gold_answer: str, generated: str, client, threshold: float = DEFAULT_JUDGE_THRESHOLD, qa_id: str = "") -> JudgeVerdict:
    reply = client.chat(judge_messages(question, gold_answer, generated))
    return parse_judge_response(reply.content, qa_id, threshold)


def aggregate(items: Iterable[tuple[str, float]]) -> CategoryReport:
    """Per-category means and their unweighted (macro) mean.

    Categories are reported in the canonical TXT, TAB, FOR, CHA, RO order,
    followed by any others alphabetically.
    """
    groups: dict[str, list[float]] = {}
    n = 0
    for cat, score in items:
        groups.setdefault(cat, []).append(float(score))
        n += 1
    if not groups:
        raise EmptyInput("aggregate needs at least one item")
    order = [c for c in QA_CATEGORIES if c in groups] + sorted(c for c in groups if c not in QA_CATEGORIES)
    per_cat = {c: math.fsum(groups[c]) / len(groups[c]) for c in order}
    overall = math.fsum(per_cat.values()) / len(per_cat)
    return CategoryReport(per_cat, overall, n)


def mean_of_reports(reports: Sequence[CategoryReport]) -> CategoryReport:
    """Outer average across runs (e.g. retriever x answer-model combinations)."""
    if not reports:
        raise EmptyInput("no reports to average")
    cats: dict[str, list[float]] = {}
    for r in reports:
        for c, v in r.per_category.items():
            cats.setdefault(c, []).append(v)
    order = [c for c in QA_CATEGORIES if c in cats] + sorted(c for c in cats if c not in QA_CATEGORIES)
    per_cat = {c: math.fsum(cats[c]) / len(cats[c]) for c in order}
    overall = math.fsum(r.overall for r in reports) / len(reports)
    return CategoryReport(per_cat, overall, sum(r.n_items for r in reports))


def _need(outputs: Mapping, qa_id: str, mode: str):
    if qa_id not in outputs:
        raise MissingStageOutput(f"{mode}: no stage output for qa_id {qa_id!r}")
    return outputs[qa_id]


def pipeline_score(
    qa: Sequence[QAItem],
    mode: str,
    outputs: Mapping[str, object],
    lcs_granularity: str = "char",
) -> CategoryReport:
    """Score every QA item for one evaluation mode and aggregate to percent.

    ``outputs`` maps qa_id to: the list of retrieved texts (retrieval), the
    generated answer string (generation / overall), or a JudgeVerdict
    (overall with judging). Retrieval skips items whose evidence is empty.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    scored = []
    for item in qa:
        out = _need(outputs, item.qa_id, mode)
        if mode == "retrieval":
            if not normalize_text(item.evidence):
                log.warning("qa %s: empty evidence, skipped", item.qa_id)
                continue
            s = lcs_score(item.evidence, list(out), lcs_granularity)
        elif isinstance(out, JudgeVerdict):
            s = float(out.value)
        else:
            s = token_f1(str(out), item.gold_answer).f1
        scored.append((item.category, 100.0 * s))
    return aggregate(scored)
