"""Encoder plus segmental CRF as one trainable model."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .decoder import JOINT, DecodeResult, decode
from .encoder import EncoderConfig, EncoderParams, encode
from .lattice import ScoreLattice, Vocabulary
from .segcrf import SegmentFeatureParams, build_score_lattice, lattice_nll


@dataclass(frozen=True)
class FeatureConfig:
    emb_dim: int = 32
    d_h: int = 64
    d_w: int = 64
    d_dur: int = 8
    use_duration: bool = True

    def __post_init__(self):
        for name in ("emb_dim", "d_h", "d_w", "d_dur"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    clamp_frames: int = 30

    def __post_init__(self):
        if self.clamp_frames < 1:
            raise ValueError("clamp_frames must be >= 1")

    @property
    def clamp_L(self) -> int:
        """Clamp in subsampled frames, rounded up."""
        return math.ceil(self.clamp_frames / self.encoder.factor)

    def hyperparameters(self) -> dict:
        enc, feat = self.encoder, self.features
        return {
            "encoder.num_layers": enc.num_layers,
            "encoder.hidden": enc.hidden,
            "encoder.subsample_after": list(enc.subsample_after),
            "encoder.subsample_mode": enc.subsample_mode,
            "encoder.window": enc.window,
            "encoder.proj_dim": enc.proj_dim,
            "features.emb_dim": feat.emb_dim,
            "features.d_h": feat.d_h,
            "features.d_w": feat.d_w,
            "features.d_dur": feat.d_dur,
            "features.use_duration": feat.use_duration,
            "clamp.frames": self.clamp_frames,
        }


def utterance_rng(seed: int, *keys) -> np.random.Generator:
    """Generator keyed by the global seed and e.g. (epoch, utterance id)."""
    words = [seed & 0xFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


class SegmentalRNN:
    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        input_dim: int,
        encoder_params: EncoderParams,
        feature_params: SegmentFeatureParams,
    ):
        self.config = config
        self.vocab = vocab
        self.input_dim = input_dim
        self.encoder_params = encoder_params
        self.feature_params = feature_params

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, input_dim: int, seed: int = 0) -> "SegmentalRNN":
        rng = np.random.default_rng(seed)
        enc = EncoderParams.init(rng, config.encoder, input_dim)
        feat = config.features
        crf = SegmentFeatureParams.init(
            rng,
            vocab.size,
            config.encoder.proj_dim,
            config.clamp_L,
            emb_dim=feat.emb_dim,
            d_h=feat.d_h,
            d_w=feat.d_w,
            d_dur=feat.d_dur,
            use_duration=feat.use_duration,
        )
        return cls(config, vocab, input_dim, enc, crf)

    def params(self) -> dict[str, Tensor]:
        out = dict(self.encoder_params.tensors())
        out.update(self.feature_params.tensors())
        return out

    def num_parameters(self) -> int:
        return sum(t.value.size for t in self.params().values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.params().items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(values) != set(params):
            raise KeyError("snapshot keys do not match model parameters")
        for k, t in params.items():
            if values[k].shape != t.shape:
                raise ValueError(f"{k}: shape {values[k].shape} != {t.shape}")
            t.value = np.array(values[k], dtype=np.float64)

    def encode(self, frames, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.input_dim:
            raise ad.ShapeError(f"frames shape {frames.shape} does not match input dim {self.input_dim}")
        H, _ = encode(frames, self.config.encoder, self.encoder_params, train=train, rng=rng)
        return H

    def lattice(self, frames, train: bool = False, rng: np.random.Generator | None = None) -> ScoreLattice:
        return build_score_lattice(self.encode(frames, train, rng), self.feature_params, self.config.clamp_L)

    def loss(self, frames, labels, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return lattice_nll(self.lattice(frames, train, rng), labels)

    def decode(self, frames, mode: str = JOINT) -> DecodeResult:
        with ad.no_tape():
            return decode(self.lattice(frames), mode)
