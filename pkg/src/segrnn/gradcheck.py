"""Compare reverse-mode gradients of the full loss with central differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import EncoderConfig
from .lattice import LabelSequence
from .model import FeatureConfig, ModelConfig, SegmentalRNN, utterance_rng
from .synth import synth_vocab

SIZES = {
    # name: (subsampled length T', vocabulary size, label count)
    "small": (5, 2, 2),
    "medium": (8, 3, 3),
}
TOLERANCE = 1e-4
STEP = 1e-4


@dataclass
class GradcheckResult:
    size: str
    seed: int
    errors: dict[str, float]
    num_parameters: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if scale < 1e-10 else float(diff / scale)


def build_problem(seed: int, size: str = "small"):
    """A tiny random model with dropout active, plus one feasible utterance."""
    T_sub, V, J = SIZES[size]
    rng = np.random.default_rng([seed, 7])
    enc = EncoderConfig(
        num_layers=2, hidden=3, subsample_after=(1,), subsample_mode="skip", window=2, dropout_rate=0.2, proj_dim=3
    )
    config = ModelConfig(enc, FeatureConfig(emb_dim=3, d_h=3, d_w=4, d_dur=2), clamp_frames=6)
    model = SegmentalRNN.init(config, synth_vocab(V), input_dim=4, seed=seed)
    for t in model.params().values():
        t.value = rng.uniform(-0.5, 0.5, size=t.shape)
    frames = rng.normal(size=(2 * T_sub, 4))
    labels = LabelSequence(rng.integers(0, V, size=J), V)
    return model, frames, labels


def loss_value(model: SegmentalRNN, frames, labels, seed: int) -> float:
    with ad.no_tape():
        return model.loss(frames, labels, train=True, rng=utterance_rng(seed, "gradcheck")).item()


def gradcheck(seed: int = 0, size: str = "small", h: float = STEP) -> GradcheckResult:
    if size not in SIZES:
        raise ValueError(f"unknown size {size!r}; choose from {sorted(SIZES)}")
    model, frames, labels = build_problem(seed, size)
    params = model.params()
    with ad.Tape() as tape:
        loss = model.loss(frames, labels, train=True, rng=utterance_rng(seed, "gradcheck"))
    grads = ad.backward(loss, tape, params.values())

    errors = {}
    for name, p in params.items():
        numeric = np.zeros(p.shape)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value(model, frames, labels, seed)
            flat[i] = orig - h
            down = loss_value(model, frames, labels, seed)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2 * h)
        errors[name] = relative_error(grads[p], numeric)
    return GradcheckResult(size, seed, errors, model.num_parameters())
