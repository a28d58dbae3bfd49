"""Joint Viterbi and marginal-hybrid decoding over a score lattice.

Both decoders are forward-only and read plain arrays from the lattice. Ties
go to the smaller start tag ``k``, then to the smaller label index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LabelSequence, ScoreLattice, Segmentation

JOINT = "joint"
MARGINAL_HYBRID = "marginal-hybrid"
MODES = (JOINT, MARGINAL_HYBRID)


@dataclass(frozen=True)
class DecodeResult:
    labels: LabelSequence
    segmentation: Segmentation | None
    score: float
    mode: str


def _best_labels(lattice: ScoreLattice) -> tuple[list[np.ndarray], list[np.ndarray]]:
    arrays = lattice.arrays()
    best_y = [np.argmax(a, axis=1) for a in arrays]
    best_f = [a[np.arange(a.shape[0]), y] for a, y in zip(arrays, best_y)]
    return best_f, best_y


def _backtrack(T: int, back: list[tuple[int, int]]) -> tuple[list[int], list[int]]:
    bounds, labels = [T], []
    t = T
    while t > 0:
        k, y = back[t]
        labels.append(y)
        bounds.append(k)
        t = k
    return bounds[::-1], labels[::-1]


def decode_joint(lattice: ScoreLattice) -> DecodeResult:
    """Exact ``argmax_{y, E}`` via the max-plus recursion with backpointers."""
    T, Lm = lattice.T, lattice.max_duration
    best_f, best_y = _best_labels(lattice)
    alpha = [0.0] * (T + 1)
    back: list[tuple[int, int]] = [(0, 0)] * (T + 1)
    for t in range(1, T + 1):
        best, arg = -math.inf, None
        for k in range(max(0, t - Lm), t):
            d = t - k
            cand = alpha[k] + float(best_f[d - 1][k])
            if cand > best:
                best, arg = cand, (k, int(best_y[d - 1][k]))
        alpha[t], back[t] = best, arg
    bounds, labels = _backtrack(T, back)
    return DecodeResult(LabelSequence(labels), Segmentation(bounds), alpha[T], JOINT)


def decode_marginal_hybrid(lattice: ScoreLattice) -> DecodeResult:
    """Sum over segmentations while taking the best label per segment.

    The recursion only defines a score; labels come from backtracking the
    predecessor with the largest summand. The segmentation found that way is
    reported too, but it is a heuristic by-product.
    """
    T, Lm = lattice.T, lattice.max_duration
    best_f, best_y = _best_labels(lattice)
    alpha = np.zeros(T + 1)
    back: list[tuple[int, int]] = [(0, 0)] * (T + 1)
    for t in range(1, T + 1):
        ks = np.arange(max(0, t - Lm), t)
        terms = np.array([alpha[k] + best_f[t - k - 1][k] for k in ks])
        m = terms.max()
        alpha[t] = m + math.log(np.exp(terms - m).sum())
        i = int(np.argmax(terms))
        k = int(ks[i])
        back[t] = (k, int(best_y[t - k - 1][k]))
    bounds, labels = _backtrack(T, back)
    return DecodeResult(LabelSequence(labels), Segmentation(bounds), float(alpha[T]), MARGINAL_HYBRID)


def decode(lattice: ScoreLattice, mode: str = JOINT) -> DecodeResult:
    if mode == JOINT:
        return decode_joint(lattice)
    if mode == MARGINAL_HYBRID:
        return decode_marginal_hybrid(lattice)
    raise ValueError(f"unknown decode mode {mode!r}; expected one of {MODES}")
