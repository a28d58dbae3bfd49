"""Synthetic segmental corpus: labelled runs of noisy per-label mean vectors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import write_frames, write_labels, write_manifest, write_vocab
from .lattice import Vocabulary


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 5
    dim: int = 8
    d_min: int = 2
    d_max: int = 6
    noise: float = 0.3
    j_min: int = 3
    j_max: int = 10
    num_utterances: int = 250
    num_valid: int = 50
    seed: int = 0
    allow_repeats: bool = False

    def __post_init__(self):
        if self.vocab_size < 1 or self.dim < 1:
            raise ValueError("vocab_size and dim must be >= 1")
        if not 1 <= self.d_min <= self.d_max:
            raise ValueError("need 1 <= d_min <= d_max")
        if not 1 <= self.j_min <= self.j_max:
            raise ValueError("need 1 <= j_min <= j_max")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0 <= self.num_valid < self.num_utterances:
            raise ValueError("need 0 <= num_valid < num_utterances")


def synth_vocab(size: int) -> Vocabulary:
    return Vocabulary([f"s{i}" for i in range(size)])


def label_means(config: SynthConfig) -> np.ndarray:
    return np.random.default_rng([config.seed, 0]).normal(size=(config.vocab_size, config.dim))


def draw_labels(rng: np.random.Generator, J: int, V: int, allow_repeats: bool) -> np.ndarray:
    """Uniform labels; unless ``allow_repeats``, each differs from its predecessor.

    Two adjacent segments with the same label share one mean vector, so the
    boundary between them is invisible in the frames.
    """
    if allow_repeats or V == 1:
        return rng.integers(0, V, size=J)
    steps = rng.integers(1, V, size=J)
    steps[0] = rng.integers(0, V)
    return np.cumsum(steps) % V


def generate(config: SynthConfig):
    """Yield ``(utt_id, frames, labels, boundaries)`` without touching disk."""
    means = label_means(config)
    rng = np.random.default_rng([config.seed, 1])
    for n in range(config.num_utterances):
        J = int(rng.integers(config.j_min, config.j_max + 1))
        labels = draw_labels(rng, J, config.vocab_size, config.allow_repeats)
        durs = rng.integers(config.d_min, config.d_max + 1, size=J)
        frames = np.repeat(means[labels], durs, axis=0)
        frames = frames + config.noise * rng.normal(size=frames.shape)
        bounds = np.concatenate([[0], np.cumsum(durs)])
        yield f"utt{n:05d}", frames.astype(np.float32), labels.tolist(), bounds.tolist()


def gen_synthetic(config: SynthConfig, out_dir) -> dict[str, Path]:
    """Write frames, labels, ground-truth segmentations, vocabulary and manifests.

    ``train.tsv`` takes the first ``num_utterances - num_valid`` utterances,
    ``valid.tsv`` the rest, ``all.tsv`` everything. Segmentations under
    ``segments/`` are diagnostics only.
    """
    out = Path(out_dir)
    for sub in ("frames", "labels", "segments"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    vocab = synth_vocab(config.vocab_size)
    write_vocab(out / "vocab.txt", vocab)
    entries = []
    for uid, frames, labels, bounds in generate(config):
        write_frames(out / "frames" / f"{uid}.srnf", frames)
        write_labels(out / "labels" / f"{uid}.txt", vocab.decode(labels))
        (out / "segments" / f"{uid}.txt").write_text(" ".join(map(str, bounds)) + "\n", encoding="utf-8")
        entries.append((uid, f"frames/{uid}.srnf", f"labels/{uid}.txt"))
    n_train = config.num_utterances - config.num_valid
    paths = {"all": out / "all.tsv", "train": out / "train.tsv", "valid": out / "valid.tsv", "vocab": out / "vocab.txt"}
    write_manifest(paths["all"], entries, vocab="vocab.txt")
    write_manifest(paths["train"], entries[:n_train], vocab="vocab.txt")
    write_manifest(paths["valid"], entries[n_train:], vocab="vocab.txt")
    return paths
