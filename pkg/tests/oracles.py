"""Slow, obviously-correct reference implementations used as test oracles.

None of these import the code they check.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def grid_mask(boxes, size=64):
    """Boolean cell grid: cell (x, y) is set when [x, x+1) x [y, y+1) lies in some box."""
    m = np.zeros((size, size), dtype=bool)
    for x0, y0, x1, y1 in boxes:
        m[int(y0):int(y1), int(x0):int(x1)] = True
    return m


def grid_union_area(boxes, size=64) -> int:
    return int(grid_mask(boxes, size).sum())


def grid_iou(a, b, size=64) -> Fraction:
    ma, mb = grid_mask([a], size), grid_mask([b], size)
    union = int((ma | mb).sum())
    return Fraction(int((ma & mb).sum()), union) if union else Fraction(0)


def grid_coverage(preds, gts, size=64) -> Fraction:
    g = grid_mask(gts, size)
    total = int(g.sum())
    if total == 0:
        return Fraction(1)
    return Fraction(int((grid_mask(preds, size) & g).sum()), total)


def brute_max_assignment(w):
    """Best objective and lexicographically smallest optimal sorted pair list."""
    w = np.asarray(w, dtype=float)
    r, c = w.shape
    if r == 0 or c == 0:
        return 0.0, []
    best, best_pairs = None, None
    if r <= c:
        cands = ([(i, perm[i]) for i in range(r)] for perm in itertools.permutations(range(c), r))
    else:
        cands = (sorted((perm[j], j) for j in range(c)) for perm in itertools.permutations(range(r), c))
    for pairs in cands:
        s = sum(w[i, j] for i, j in pairs)
        if best is None or s > best + 1e-12 or (abs(s - best) <= 1e-12 and pairs < best_pairs):
            best, best_pairs = s, pairs
    return best, best_pairs


def brute_matched_iou(preds, gts, size=64) -> Fraction:
    """Exact rational matched IoU by enumerating every matching on the cell grid."""
    n, m = len(preds), len(gts)
    if n == 0 and m == 0:
        return Fraction(1)
    if n == 0 or m == 0:
        return Fraction(0)
    ious = [[grid_iou(p, g, size) for g in gts] for p in preds]
    best = Fraction(0)
    if n <= m:
        for perm in itertools.permutations(range(m), n):
            best = max(best, sum((ious[i][perm[i]] for i in range(n)), Fraction(0)))
    else:
        for perm in itertools.permutations(range(n), m):
            best = max(best, sum((ious[perm[j]][j] for j in range(m)), Fraction(0)))
    return best / max(n, m)


def dp_lcs(a, b) -> int:
    """Textbook O(len(a) * len(b)) LCS table."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def multiset_common(pred: list, gold: list) -> int:
    """Count shared tokens by crossing off matches one at a time."""
    remaining = list(gold)
    n = 0
    for t in pred:
        if t in remaining:
            remaining.remove(t)
            n += 1
    return n


def f1_reference(pred: list, gold: list) -> tuple[Fraction, Fraction, Fraction]:
    if not pred and not gold:
        return Fraction(1), Fraction(1), Fraction(1)
    if not pred or not gold:
        return Fraction(0), Fraction(0), Fraction(0)
    c = multiset_common(pred, gold)
    if c == 0:
        return Fraction(0), Fraction(0), Fraction(0)
    p, r = Fraction(c, len(pred)), Fraction(c, len(gold))
    return p, r, 2 * p * r / (p + r)
