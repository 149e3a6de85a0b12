"""Detection-quality metrics: Hungarian-matched IoU, coverage, threshold sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chunker import LayoutBox, LayoutPrediction, filter_confidence
from .errors import EmptyCorpus
from .geometry import BBox, pairwise_intersections, union_area

DEFAULT_THRESHOLDS = (0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class Assignment:
    pairs: list[tuple[int, int]]
    objective: float


@dataclass(frozen=True)
class MatchedIoUReport:
    score: float
    pairs: Assignment
    n_pred: int
    n_gt: int
    per_pair_iou: list[float]

    @property
    def denominator(self) -> int:
        return max(self.n_pred, self.n_gt)


@dataclass(frozen=True)
class CoverageReport:
    coverage: float
    covered_area: float
    gt_area: float


@dataclass(frozen=True)
class SweepRow:
    confidence_threshold: float
    matched_iou: float
    coverage: float
    n_boxes_kept: int


# -- assignment ------------------------------------------------------------


def _solve_min(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Square min-cost assignment by shortest augmenting paths with potentials.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are optimal duals:
    ``cost[i, j] - u[i] - v[j] >= 0`` everywhere and ``== 0`` on the assignment.
    Ties in the path search go to the lowest column index, so results are
    deterministic.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)  # p[j]: 1-based row holding column j (0 = free)
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.intp)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def hungarian_max(weights, n_rows: int | None = None, n_cols: int | None = None) -> Assignment:
    """Maximum-weight assignment of size ``min(n_rows, n_cols)``.

    Solved as min-cost assignment on ``top - w`` over a square matrix padded
    with cost ``top`` (weight 0), where ``top = max(1, max w)``. Among all
    optimal assignments the lexicographically smallest sorted pair list is
    returned: rows are fixed in ascending order to the lowest column that
    still admits an optimal completion, with dual reduced costs pruning the
    candidates before any re-solve.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2:
        if w.size == 0:
            w = w.reshape(n_rows or 0, n_cols or 0)
        else:
            raise ValueError(f"weights must be a 2-d matrix, got shape {w.shape}")
    if n_rows is not None and n_cols is not None and w.shape != (n_rows, n_cols):
        raise ValueError(f"weights shape {w.shape} != ({n_rows}, {n_cols})")
    r, c = w.shape
    if r == 0 or c == 0:
        return Assignment([], 0.0)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and >= 0")

    n = max(r, c)
    top = max(1.0, float(w.max()))
    cost = np.full((n, n), top)
    cost[:r, :c] = top - w
    tol = 1e-12 * n * top

    col_of_row, u, v = _solve_min(cost)
    best = math.fsum(cost[np.arange(n), col_of_row])

    rows = list(range(n))  # residual problem: rows[k], cols[k] are original indices
    cols = list(range(n))
    cur = {i: int(col_of_row[i]) for i in range(n)}
    du = {i: u[i] for i in range(n)}
    dv = {j: v[j] for j in range(n)}
    fixed_cost = 0.0
    pairs = []

    for i in range(min(r, n)):
        chosen = cur[i]
        limit = chosen if chosen < c else c
        for j in cols:
            if j >= limit:
                break
            if cost[i, j] - du[i] - dv[j] > tol:
                continue
            sub_rows = [x for x in rows if x != i]
            sub_cols = [y for y in cols if y != j]
            sub = cost[np.ix_(sub_rows, sub_cols)]
            s_col, s_u, s_v = _solve_min(sub)
            total = fixed_cost + cost[i, j] + math.fsum(sub[np.arange(len(sub_rows)), s_col])
            if total <= best + tol:
                chosen = j
                cur = {sub_rows[k]: sub_cols[s_col[k]] for k in range(len(sub_rows))}
                du = {sub_rows[k]: s_u[k] for k in range(len(sub_rows))}
                dv = {sub_cols[k]: s_v[k] for k in range(len(sub_cols))}
                break
        fixed_cost += cost[i, chosen]
        rows.remove(i)
        cols.remove(chosen)
        if chosen < c:
            pairs.append((i, chosen))

    objective = math.fsum(float(w[i, j]) for i, j in pairs)
    return Assignment(pairs, objective)


# -- metrics ---------------------------------------------------------------


def iou_matrix(preds: Sequence[BBox], gts: Sequence[BBox]) -> np.ndarray:
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    p = np.array([b.as_tuple() for b in preds])
    g = np.array([b.as_tuple() for b in gts])
    iw = np.minimum(p[:, None, 2], g[None, :, 2]) - np.maximum(p[:, None, 0], g[None, :, 0])
    ih = np.minimum(p[:, None, 3], g[None, :, 3]) - np.maximum(p[:, None, 1], g[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_p = (p[:, 2] - p[:, 0]) * (p[:, 3] - p[:, 1])
    area_g = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    union = area_p[:, None] + area_g[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def _as_bbox(b) -> BBox:
    return b.bbox if isinstance(b, LayoutBox) else b


def matched_iou(preds: Sequence[LayoutBox], gts: Sequence[LayoutBox], class_aware: bool = False) -> MatchedIoUReport:
    """Average IoU over optimally matched pairs, counting every unmatched box as 0.

    The denominator is ``max(len(preds), len(gts))``; two empty sides score 1.
    """
    n_pred, n_gt = len(preds), len(gts)
    if n_pred == 0 and n_gt == 0:
        return MatchedIoUReport(1.0, Assignment([], 0.0), 0, 0, [])
    m = iou_matrix([_as_bbox(b) for b in preds], [_as_bbox(b) for b in gts])
    if class_aware and m.size:
        same = np.array([[p.category == g.category for g in gts] for p in preds])
        m = np.where(same, m, 0.0)
    assignment = hungarian_max(m, n_pred, n_gt)
    per_pair = [float(m[i, j]) for i, j in assignment.pairs]
    score = math.fsum(per_pair) / max(n_pred, n_gt)
    return MatchedIoUReport(score, assignment, n_pred, n_gt, per_pair)


def coverage(preds: Sequence[BBox], gts: Sequence[BBox]) -> CoverageReport:
    """Share of the ground-truth union that the prediction union overlaps."""
    preds = [_as_bbox(b) for b in preds]
    gts = [_as_bbox(b) for b in gts]
    gt_area = union_area(gts)
    if gt_area == 0.0:
        return CoverageReport(1.0, 0.0, 0.0)
    covered = union_area(pairwise_intersections(preds, gts))
    return CoverageReport(covered / gt_area, covered, gt_area)


def _check_thresholds(thresholds: Sequence[float]) -> list[float]:
    ts = [float(t) for t in thresholds]
    if not ts:
        raise ValueError("at least one threshold is required")
    for t in ts:
        if not (0.0 < t <= 1.0):
            raise ValueError(f"threshold {t} outside (0, 1]")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError(f"thresholds must be strictly increasing: {ts}")
    return ts


def threshold_sweep(
    pred_pages: Sequence[tuple[LayoutPrediction, Sequence[LayoutBox]]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    class_aware: bool = False,
    pooled: bool = False,
) -> list[SweepRow]:
    """One row per confidence threshold.

    By default ``matched_iou`` and ``coverage`` are unweighted means of the
    per-page values. With ``pooled=True`` they are corpus-wide ratios instead:
    summed matched IoU over summed ``max(|P|, |G|)``, and summed covered area
    over summed ground-truth area.
    """
    if not pred_pages:
        raise EmptyCorpus("threshold_sweep needs at least one page")
    rows = []
    for t in _check_thresholds(thresholds):
        ious, covs = [], []
        iou_num = iou_den = cov_num = cov_den = 0.0
        kept = 0
        for pred, gts in pred_pages:
            boxes = filter_confidence(pred, t).boxes
            kept += len(boxes)
            m = matched_iou(boxes, gts, class_aware)
            cv = coverage(boxes, gts)
            ious.append(m.score)
            covs.append(cv.coverage)
            iou_num += math.fsum(m.per_pair_iou)
            iou_den += m.denominator
            cov_num += cv.covered_area
            cov_den += cv.gt_area
        if pooled:
            mi = iou_num / iou_den if iou_den else 1.0
            mc = cov_num / cov_den if cov_den else 1.0
        else:
            mi = math.fsum(ious) / len(ious)
            mc = math.fsum(covs) / len(covs)
        rows.append(SweepRow(t, mi, mc, kept))
    return rows
