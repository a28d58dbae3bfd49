"""Label error rate by Levenshtein distance."""

from __future__ import annotations

from typing import Sequence


def edit_distance(hyp: Sequence, ref: Sequence) -> int:
    """Unit-cost substitutions, insertions and deletions."""
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, start=1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return prev[-1]


def per(hyp: Sequence, ref: Sequence) -> float:
    """Edits divided by reference length. Not symmetric in its arguments."""
    if len(ref) == 0:
        raise ValueError("reference must not be empty")
    return edit_distance(hyp, ref) / len(ref)


def corpus_per(pairs) -> float:
    """Total edits over total reference length for ``(hyp, ref)`` pairs."""
    edits = length = 0
    for hyp, ref in pairs:
        if len(ref) == 0:
            raise ValueError("reference must not be empty")
        edits += edit_distance(hyp, ref)
        length += len(ref)
    if length == 0:
        raise ValueError("no reference labels")
    return edits / length
