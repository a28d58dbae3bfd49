"""On-disk formats: frames, labels, vocabularies and dataset manifests.

Frames file (little-endian)::

    b"SRNF" | u32 version=1 | u32 T | u32 D | T*D float32, row-major

Labels file: UTF-8 text, whitespace-separated tokens, one utterance.
Manifest: UTF-8, one ``id<TAB>frames_path<TAB>labels_path`` line per
utterance; relative paths resolve against the manifest's directory. Lines
starting with ``#`` are directives (``#vocab<TAB>path``,
``#collapse<TAB>path``) or comments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import LabelSequence, Vocabulary

FRAMES_MAGIC = b"SRNF"
FRAMES_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def write_frames(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise FormatError(f"frames must be 2-D, got shape {frames.shape}")
    T, D = frames.shape
    if T < 1 or D < 1:
        raise FormatError(f"frames must have T >= 1 and D >= 1, got T={T}, D={D}")
    data = frames.astype("<f4")
    if not np.isfinite(data).all():
        raise FormatError("frames contain non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FRAMES_MAGIC, FRAMES_VERSION, T, D))
        fh.write(data.tobytes(order="C"))


def read_frames(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} of {_HEADER.size} bytes)")
    magic, version, T, D = _HEADER.unpack_from(raw)
    if magic != FRAMES_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FRAMES_MAGIC!r}")
    if version != FRAMES_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if T < 1 or D < 1:
        raise FormatError(f"{path}: invalid dimensions T={T}, D={D}")
    expected = _HEADER.size + 4 * T * D
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    frames = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(T, D)
    if not np.isfinite(frames).all():
        raise FormatError(f"{path}: non-finite frame values")
    return frames.astype(np.float32)


def write_labels(path, tokens) -> None:
    tokens = list(tokens)
    if not tokens:
        raise FormatError("label sequence must not be empty")
    Path(path).write_text(" ".join(tokens) + "\n", encoding="utf-8")


def read_label_tokens(path) -> list[str]:
    tokens = Path(path).read_text(encoding="utf-8").split()
    if not tokens:
        raise FormatError(f"{path}: empty label file (need at least one label)")
    return tokens


def read_labels(path, vocab: Vocabulary) -> LabelSequence:
    tokens = read_label_tokens(path)
    for tok in tokens:
        if tok not in vocab.tokens:
            raise FormatError(f"{path}: token {tok!r} is not in the vocabulary")
    return vocab.encode(tokens)


def write_vocab(path, vocab: Vocabulary) -> None:
    Path(path).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")


def read_vocab(path) -> Vocabulary:
    return Vocabulary([line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()])


def read_collapse_map(path, source: Vocabulary) -> tuple[dict[int, int], Vocabulary]:
    """Two-column ``src dst`` text map; returns index mapping and target vocabulary."""
    pairs = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise FormatError(f"{path}:{n}: expected 'source target', got {line!r}")
        pairs.append(parts)
    targets = list(dict.fromkeys(dst for _, dst in pairs))
    target_vocab = Vocabulary(targets)
    mapping = {}
    for src, dst in pairs:
        mapping[source.index(src)] = target_vocab.index(dst)
    missing = [source.tokens[i] for i in range(source.size) if i not in mapping]
    if missing:
        raise FormatError(f"{path}: no mapping for tokens {missing}")
    return mapping, target_vocab


@dataclass
class ManifestEntry:
    utt_id: str
    frames_path: Path
    labels_path: Path


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    vocab_path: Path | None = None
    collapse_path: Path | None = None
    path: Path | None = None

    @property
    def ids(self) -> list[str]:
        return [e.utt_id for e in self.entries]


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest {path} does not exist")
    base = path.parent
    entries, vocab_path, collapse_path, seen = [], None, None, set()
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line[1:].split("\t")
            if parts[0] == "vocab" and len(parts) == 2:
                vocab_path = base / parts[1]
            elif parts[0] == "collapse" and len(parts) == 2:
                collapse_path = base / parts[1]
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{n}: expected id<TAB>frames<TAB>labels")
        uid = parts[0]
        if uid in seen:
            raise FormatError(f"{path}:{n}: duplicate utterance id {uid!r}")
        seen.add(uid)
        entries.append(ManifestEntry(uid, base / parts[1], base / parts[2]))
    if vocab_path is None and (base / "vocab.txt").is_file():
        vocab_path = base / "vocab.txt"
    return DatasetManifest(entries, vocab_path, collapse_path, path)


def write_manifest(path, entries: list[tuple[str, str, str]], vocab: str | None = None, collapse: str | None = None) -> None:
    lines = []
    if vocab is not None:
        lines.append(f"#vocab\t{vocab}")
    if collapse is not None:
        lines.append(f"#collapse\t{collapse}")
    lines += ["\t".join(e) for e in entries]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass
class Utterance:
    utt_id: str
    frames: np.ndarray
    labels: LabelSequence | None = None


@dataclass
class Dataset:
    utterances: list[Utterance]
    vocab: Vocabulary
    manifest: DatasetManifest | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)


def load_dataset(manifest_path, vocab: Vocabulary | None = None, with_labels: bool = True) -> Dataset:
    manifest = read_manifest(manifest_path)
    if vocab is None:
        if manifest.vocab_path is None:
            raise FormatError(f"{manifest_path}: no vocabulary given and no vocab.txt beside the manifest")
        vocab = read_vocab(manifest.vocab_path)
    utts = []
    for e in manifest.entries:
        needed = [e.frames_path, e.labels_path] if with_labels else [e.frames_path]
        for p in needed:
            if not p.is_file():
                raise FileNotFoundError(f"{manifest_path}: {e.utt_id}: missing file {p}")
        frames = read_frames(e.frames_path)
        labels = read_labels(e.labels_path, vocab) if with_labels else None
        utts.append(Utterance(e.utt_id, frames, labels))
    return Dataset(utts, vocab, manifest)
