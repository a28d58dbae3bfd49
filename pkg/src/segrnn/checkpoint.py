"""Versioned model checkpoints.

Layout (little-endian)::

    b"SRNM" | u32 version | u32 header_len | header JSON (UTF-8, sorted keys)
    u32 n_tensors
    per tensor: u32 name_len | name | u32 ndim | u32 * ndim shape | float64 payload

The header carries the architecture hyperparameters, the input dimension and
the vocabulary, so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .lattice import Vocabulary
from .model import FeatureConfig, ModelConfig, SegmentalRNN

MAGIC = b"SRNM"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


def _header(model: SegmentalRNN, extra: dict | None) -> dict:
    return {
        "format_version": VERSION,
        "hyperparameters": model.config.hyperparameters(),
        "input_dim": model.input_dim,
        "vocabulary": list(model.vocab.tokens),
        "extra": extra or {},
    }


def save_checkpoint(path, model: SegmentalRNN, extra: dict | None = None) -> None:
    header = json.dumps(_header(model, extra), sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header]
    params = model.params()
    chunks.append(_U32.pack(len(params)))
    for name in sorted(params):
        value = params[name].value
        raw_name = name.encode("utf-8")
        chunks += [_U32.pack(len(raw_name)), raw_name, _U32.pack(value.ndim)]
        chunks += [_U32.pack(n) for n in value.shape]
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(r.take(r.u32()).decode("utf-8"))
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape)) if shape else 1
        value = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        if not np.isfinite(value).all():
            raise CheckpointError(f"{path}: tensor {name} has non-finite values")
        tensors[name] = value
    if r.pos != len(r.raw):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return header, tensors


def config_from_hyperparameters(hp: dict, dropout_rate: float = 0.0) -> ModelConfig:
    enc = EncoderConfig(
        num_layers=hp["encoder.num_layers"],
        hidden=hp["encoder.hidden"],
        subsample_after=tuple(hp["encoder.subsample_after"]),
        subsample_mode=hp["encoder.subsample_mode"],
        window=hp["encoder.window"],
        proj_dim=hp["encoder.proj_dim"],
        dropout_rate=dropout_rate,
    )
    feat = FeatureConfig(
        emb_dim=hp["features.emb_dim"],
        d_h=hp["features.d_h"],
        d_w=hp["features.d_w"],
        d_dur=hp["features.d_dur"],
        use_duration=hp["features.use_duration"],
    )
    return ModelConfig(enc, feat, hp["clamp.frames"])


def load_checkpoint(
    path,
    config: ModelConfig | None = None,
    vocab: Vocabulary | None = None,
    override: bool = False,
) -> tuple[SegmentalRNN, dict]:
    """Rebuild a model; reject disagreement with ``config``/``vocab`` unless ``override``."""
    header, tensors = read_checkpoint(path)
    saved_hp = header["hyperparameters"]
    saved_vocab = Vocabulary(header["vocabulary"])
    if not override:
        if config is not None:
            diff = {
                k: (saved_hp.get(k), v) for k, v in config.hyperparameters().items() if saved_hp.get(k) != v
            }
            if diff:
                detail = ", ".join(f"{k}: saved {a!r} vs running {b!r}" for k, (a, b) in sorted(diff.items()))
                raise CheckpointError(f"{path}: hyperparameter mismatch ({detail})")
        if vocab is not None and vocab != saved_vocab:
            raise CheckpointError(
                f"{path}: vocabulary mismatch (saved |Y|={saved_vocab.size}, running |Y|={vocab.size})"
            )
    model_config = config_from_hyperparameters(saved_hp)
    model = SegmentalRNN.init(model_config, saved_vocab, header["input_dim"], seed=0)
    model.load_snapshot(tensors)
    return model, header
