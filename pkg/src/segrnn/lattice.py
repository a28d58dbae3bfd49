"""Sequences, segmentations, vocabularies and score lattices.

Segments use half-open boundary tags: segment ``<k, t>`` covers frames
``k .. t-1`` and has duration ``t - k >= 1``. A segmentation of ``T`` frames
is the boundary list ``b_0 = 0 < b_1 < ... < b_J = T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .autodiff import Tensor


class Vocabulary:
    """Ordered set of label strings with a bijective index map."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if not tokens:
            raise ValueError("vocabulary must contain at least one token")
        for tok in tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid vocabulary token {tok!r}")
        if len(set(tokens)) != len(tokens):
            seen = set()
            dup = next(t for t in tokens if t in seen or seen.add(t))
            raise ValueError(f"duplicate vocabulary token {dup!r}")
        self.tokens = tokens
        self._index = {tok: i for i, tok in enumerate(tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __hash__(self) -> int:
        return hash(self.tokens)

    def __repr__(self) -> str:
        return f"Vocabulary({list(self.tokens)!r})"

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(f"unknown token {token!r}") from None

    def encode(self, tokens: Sequence[str]) -> "LabelSequence":
        return LabelSequence([self.index(t) for t in tokens], self.size)

    def decode(self, labels: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in labels]


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray
    frame_period_ms: float = 10.0

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"frames must be a non-empty T x D matrix, got shape {frames.shape}")
        if not np.isfinite(frames).all():
            raise ValueError("frames contain non-finite values")
        if not self.frame_period_ms > 0:
            raise ValueError("frame_period_ms must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]


class LabelSequence(tuple):
    """Immutable tuple of vocabulary indices, optionally checked against a size."""

    def __new__(cls, labels: Sequence[int], vocab_size: int | None = None):
        labels = tuple(int(x) for x in labels)
        if not labels:
            raise ValueError("label sequence must contain at least one label")
        for x in labels:
            if x < 0 or (vocab_size is not None and x >= vocab_size):
                raise ValueError(f"label index {x} outside vocabulary of size {vocab_size}")
        return super().__new__(cls, labels)

    @property
    def J(self) -> int:
        return len(self)


class Segmentation(tuple):
    """Boundary tags ``b_0 .. b_J``. Use :func:`validate_segmentation` to check."""

    def __new__(cls, boundaries: Sequence[int]):
        return super().__new__(cls, (int(b) for b in boundaries))

    @property
    def segments(self) -> list[tuple[int, int]]:
        return list(zip(self[:-1], self[1:]))

    @property
    def durations(self) -> list[int]:
        return [t - k for k, t in self.segments]


class Verdict(NamedTuple):
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_segmentation(seg: Sequence[int], T: int, L: int | None = None) -> Verdict:
    b = list(seg)
    if len(b) < 2:
        return Verdict(False, "need at least two boundaries")
    if b[0] != 0:
        return Verdict(False, f"first boundary is {b[0]}, expected 0")
    if b[-1] != T:
        return Verdict(False, f"last boundary is {b[-1]}, expected T={T}")
    for j in range(1, len(b)):
        if b[j] <= b[j - 1]:
            return Verdict(False, f"not strictly increasing at boundary {j} ({b[j - 1]} -> {b[j]})")
    if L is not None:
        for j in range(1, len(b)):
            d = b[j] - b[j - 1]
            if d > L:
                return Verdict(False, f"segment {j} has duration {d} > L={L}")
    return Verdict(True)


def collapse_labels(
    seq: Sequence[int], mapping: Mapping[int, int] | Sequence[int], merge_adjacent: bool = False
) -> LabelSequence:
    """Map every label through ``mapping``; optionally merge adjacent repeats."""
    out = []
    for x in seq:
        try:
            y = mapping[x]
        except (KeyError, IndexError):
            raise KeyError(f"label index {x} has no entry in the collapse mapping") from None
        if merge_adjacent and out and out[-1] == y:
            continue
        out.append(y)
    return LabelSequence(out)


def lattice_entry_count(T: int, L: int, V: int) -> int:
    if T < 1 or L < 1 or V < 1:
        raise ValueError("T, L and V must all be >= 1")
    return V * sum(min(t, L) for t in range(1, T + 1))


@dataclass(frozen=True)
class ClampConfig:
    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"clamp L must be >= 1, got {self.L}")


@dataclass
class ScoreLattice:
    """Log-domain segment scores grouped by duration.

    ``by_duration[d - 1]`` is a ``(T - d + 1, V)`` tensor whose row ``k`` holds
    ``f(y, <k, k + d>)`` for every label ``y``. Durations run from 1 to
    ``min(L, T)``; nothing outside the clamp is stored.
    """

    T: int
    L: int
    V: int
    by_duration: list[Tensor] = field(repr=False)

    def __post_init__(self):
        if self.T < 1 or self.L < 1 or self.V < 1:
            raise ValueError("lattice needs T, L, V >= 1")
        if len(self.by_duration) != self.max_duration:
            raise ValueError(
                f"expected {self.max_duration} duration blocks, got {len(self.by_duration)}"
            )
        for d, block in enumerate(self.by_duration, start=1):
            if not isinstance(block, Tensor):
                block = self.by_duration[d - 1] = Tensor(block)
            if block.shape != (self.T - d + 1, self.V):
                raise ValueError(
                    f"duration {d} block has shape {block.shape}, expected {(self.T - d + 1, self.V)}"
                )
            if not np.isfinite(block.value).all():
                raise ValueError(f"duration {d} block has non-finite scores")

    @property
    def max_duration(self) -> int:
        return min(self.L, self.T)

    @property
    def num_entries(self) -> int:
        return sum(b.value.size for b in self.by_duration)

    def score(self, k: int, t: int, y: int) -> float:
        d = t - k
        if not (0 <= k < t <= self.T) or d > self.L:
            raise IndexError(f"segment <{k}, {t}> is not admissible for T={self.T}, L={self.L}")
        return float(self.by_duration[d - 1].value[k, y])

    def entries(self) -> Iterator[tuple[int, int, int, float]]:
        for d, block in enumerate(self.by_duration, start=1):
            vals = block.value
            for k in range(vals.shape[0]):
                for y in range(self.V):
                    yield k, k + d, y, float(vals[k, y])

    def arrays(self) -> list[np.ndarray]:
        return [b.value for b in self.by_duration]

    def detached(self) -> "ScoreLattice":
        return ScoreLattice(self.T, self.L, self.V, [Tensor(b.value) for b in self.by_duration])

    def map_scores(self, fn: Callable[[int, int, np.ndarray], np.ndarray]) -> "ScoreLattice":
        """New lattice with ``fn(k_array, d, block)`` applied to every duration block."""
        blocks = []
        for d, block in enumerate(self.by_duration, start=1):
            ks = np.arange(block.shape[0])
            blocks.append(Tensor(fn(ks, d, block.value.copy())))
        return ScoreLattice(self.T, self.L, self.V, blocks)

    @classmethod
    def from_function(cls, T: int, L: int, V: int, f: Callable[[int, int, int], float]) -> "ScoreLattice":
        blocks = []
        for d in range(1, min(L, T) + 1):
            blocks.append(
                np.array([[f(k, k + d, y) for y in range(V)] for k in range(T - d + 1)], dtype=np.float64)
            )
        return cls(T, L, V, [Tensor(b) for b in blocks])

    @classmethod
    def random(
        cls, rng: np.random.Generator, T: int, L: int, V: int, scale: float = 1.0, requires_grad: bool = False
    ) -> "ScoreLattice":
        blocks = [
            Tensor(rng.normal(scale=scale, size=(T - d + 1, V)), requires_grad=requires_grad)
            for d in range(1, min(L, T) + 1)
        ]
        return cls(T, L, V, blocks)
