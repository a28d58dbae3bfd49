"""Brute-force references: enumerate every segmentation and labeling.

Exponential time, test use only. Nothing here shares code with the DP
implementations; scores are read one entry at a time through
``ScoreLattice.score``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

from .lattice import ScoreLattice, Segmentation

MAX_PAIRS = 10**7


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EnumerationBudget:
    max_T: int = 8
    max_V: int = 4

    def check(self, T: int, V: int, L: int | None = None) -> None:
        if T > self.max_T:
            raise BudgetExceeded(f"T={T} exceeds enumeration budget max_T={self.max_T}")
        if V > self.max_V:
            raise BudgetExceeded(f"V={V} exceeds enumeration budget max_V={self.max_V}")
        pairs = count_labeled_segmentations(T, V, L if L is not None else T)
        if pairs > MAX_PAIRS:
            raise BudgetExceeded(f"{pairs} (y, E) pairs exceed the limit of {MAX_PAIRS}")


DEFAULT_BUDGET = EnumerationBudget()


def count_segmentations(T: int, L: int, J: int | None = None) -> int:
    """Segmentations of ``T`` frames with durations in ``[1, L]`` (exactly ``J`` parts if given)."""
    # N[t][j]: ways to cover t frames with j segments
    N = [[0] * (T + 1) for _ in range(T + 1)]
    N[0][0] = 1
    for t in range(1, T + 1):
        for j in range(1, t + 1):
            N[t][j] = sum(N[t - d][j - 1] for d in range(1, min(t, L) + 1))
    return sum(N[T]) if J is None else (N[T][J] if J <= T else 0)


def count_labeled_segmentations(T: int, V: int, L: int) -> int:
    """``N_full``: number of (labels, segmentation) pairs, ``sum_J N(T, J) V^J``."""
    return sum(count_segmentations(T, L, J) * V**J for J in range(1, T + 1))


def enumerate_segmentations(T: int, L: int | None = None, budget: EnumerationBudget = DEFAULT_BUDGET) -> Iterator[Segmentation]:
    L = T if L is None else L
    if T > budget.max_T:
        raise BudgetExceeded(f"T={T} exceeds enumeration budget max_T={budget.max_T}")
    for mask in itertools.product((False, True), repeat=T - 1):
        bounds = [0] + [i + 1 for i, cut in enumerate(mask) if cut] + [T]
        if all(b - a <= L for a, b in zip(bounds, bounds[1:])):
            yield Segmentation(bounds)


def _pairs(lattice: ScoreLattice, budget: EnumerationBudget):
    budget.check(lattice.T, lattice.V, lattice.L)
    for seg in enumerate_segmentations(lattice.T, lattice.L, budget):
        spans = seg.segments
        for labels in itertools.product(range(lattice.V), repeat=len(spans)):
            yield labels, seg, _path_score(lattice, labels, spans)


def _path_score(lattice: ScoreLattice, labels, spans) -> float:
    s = 0.0
    for y, (k, t) in zip(labels, spans):
        s += lattice.score(k, t, y)
    return s


def _lse(values: Sequence[float]) -> float:
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def brute_log_partition(lattice: ScoreLattice, budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    return _lse([s for _, _, s in _pairs(lattice, budget)])


def brute_log_clamped(lattice: ScoreLattice, labels: Sequence[int], budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    budget.check(lattice.T, lattice.V, lattice.L)
    labels = tuple(labels)
    scores = [
        _path_score(lattice, labels, seg.segments)
        for seg in enumerate_segmentations(lattice.T, lattice.L, budget)
        if len(seg) - 1 == len(labels)
    ]
    return _lse(scores)


def _tiebreak_key(labels, seg: Segmentation):
    # the DP keeps the smallest (start, label) at each end tag, read from the back
    spans = seg.segments
    return tuple(itertools.chain.from_iterable((k, y) for y, (k, _) in zip(reversed(labels), reversed(spans))))


def brute_argmax(lattice: ScoreLattice, budget: EnumerationBudget = DEFAULT_BUDGET) -> tuple[tuple[int, ...], Segmentation, float]:
    best = None
    for labels, seg, s in _pairs(lattice, budget):
        if best is None or s > best[2] or (s == best[2] and _tiebreak_key(labels, seg) < _tiebreak_key(best[0], best[1])):
            best = (labels, seg, s)
    return best


def brute_segment_posteriors(
    lattice: ScoreLattice, labels: Sequence[int] | None = None, budget: EnumerationBudget = DEFAULT_BUDGET
) -> dict[tuple[int, int, int], float]:
    """``P(segment <k, t> carries label y | X)``, or conditioned on ``labels`` too."""
    if labels is None:
        paths = [(ys, seg.segments, s) for ys, seg, s in _pairs(lattice, budget)]
    else:
        budget.check(lattice.T, lattice.V, lattice.L)
        ys = tuple(labels)
        paths = [
            (ys, seg.segments, _path_score(lattice, ys, seg.segments))
            for seg in enumerate_segmentations(lattice.T, lattice.L, budget)
            if len(seg) - 1 == len(ys)
        ]
    log_z = _lse([s for *_, s in paths])
    post = {(k, t, y): 0.0 for k, t, y, _ in lattice.entries()}
    for ys, spans, s in paths:
        p = math.exp(s - log_z)
        for y, (k, t) in zip(ys, spans):
            post[(k, t, y)] += p
    return post
