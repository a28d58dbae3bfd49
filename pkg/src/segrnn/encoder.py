"""Bidirectional LSTM encoder with hierarchical subsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SUBSAMPLE_MODES = ("skip", "concat", "add")
# weights get standard deviation INIT_GAIN / sqrt(fan_in); the gain offsets the
# halving by the output gate (h = o * tanh(c), o ~ 1/2 at init)
INIT_GAIN = 2.0


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform draw with standard deviation ``INIT_GAIN / sqrt(fan_in)``."""
    bound = INIT_GAIN * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class RecurrentLayerParams:
    """LSTM weights; gate blocks are ordered input, forget, output, candidate."""

    w_in: Tensor  # (D, 4H)
    w_rec: Tensor  # (H, 4H)
    bias: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_rec.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        return {"w_in": self.w_in, "w_rec": self.w_rec, "bias": self.bias}

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden: int) -> "RecurrentLayerParams":
        w_in = fan_in_uniform(rng, (input_dim, 4 * hidden), input_dim)
        w_rec = fan_in_uniform(rng, (hidden, 4 * hidden), hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        return cls(Tensor(w_in, True), Tensor(w_rec, True), Tensor(bias, True))


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 3
    hidden: int = 128
    subsample_after: tuple[int, ...] = (1,)
    subsample_mode: str = "skip"
    window: int = 2
    dropout_rate: float = 0.2
    proj_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "subsample_after", tuple(sorted(set(self.subsample_after))))
        if self.num_layers < 1 or self.hidden < 1 or self.proj_dim < 1:
            raise ValueError("num_layers, hidden and proj_dim must be >= 1")
        bad = [i for i in self.subsample_after if not 1 <= i <= self.num_layers - 1]
        if bad:
            raise ValueError(f"subsample_after entries {bad} outside 1..{self.num_layers - 1}")
        if self.subsample_mode not in SUBSAMPLE_MODES:
            raise ValueError(f"subsample_mode must be one of {SUBSAMPLE_MODES}, got {self.subsample_mode!r}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def factor(self) -> int:
        return self.window ** len(self.subsample_after)

    def layer_input_dims(self, input_dim: int) -> list[int]:
        dims, d = [], input_dim
        for layer in range(1, self.num_layers + 1):
            dims.append(d)
            d = 2 * self.hidden
            if layer in self.subsample_after and self.subsample_mode == "concat":
                d *= self.window
        return dims

    def output_length(self, T: int) -> int:
        for _ in self.subsample_after:
            T = math.ceil(T / self.window)
        return T


@dataclass
class EncoderParams:
    layers: list[tuple[RecurrentLayerParams, RecurrentLayerParams]]
    proj_w: Tensor  # (2H, proj_dim)
    proj_b: Tensor  # (proj_dim,)

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, (fwd, bwd) in enumerate(self.layers, start=1):
            for direction, p in (("fwd", fwd), ("bwd", bwd)):
                for k, t in p.tensors().items():
                    out[f"encoder.l{i}.{direction}.{k}"] = t
        out["encoder.proj.w"] = self.proj_w
        out["encoder.proj.b"] = self.proj_b
        return out

    @classmethod
    def init(cls, rng: np.random.Generator, config: EncoderConfig, input_dim: int) -> "EncoderParams":
        layers = []
        for d in config.layer_input_dims(input_dim):
            layers.append(
                (RecurrentLayerParams.init(rng, d, config.hidden), RecurrentLayerParams.init(rng, d, config.hidden))
            )
        proj_w = fan_in_uniform(rng, (2 * config.hidden, config.proj_dim), 2 * config.hidden)
        proj_b = np.zeros(config.proj_dim)
        return cls(layers, Tensor(proj_w, True), Tensor(proj_b, True))


def _cell_steps(pre: Tensor, w_rec: Tensor, order, h0: Tensor | None, c0: Tensor | None) -> dict[int, Tensor]:
    H = w_rec.shape[0]
    h, c = h0, c0
    states = {}
    for t in order:
        z = pre[t] if h is None else ad.add(pre[t], ad.matmul(h, w_rec))
        hc = ad.lstm_cell(z, c)
        h, c = hc[:H], hc[H:]
        states[t] = h
    return states


def recurrent_forward(
    params: RecurrentLayerParams,
    inputs: Tensor,
    initial: tuple[Tensor, Tensor] | None = None,
    reverse: bool = False,
) -> Tensor:
    """Run one LSTM over a ``(T, D)`` input; returns ``(T, H)`` hidden states.

    With ``reverse=True`` the recurrence runs from the last frame to the first
    and the output is stored at the original positions.
    """
    inputs = ad.as_tensor(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != params.input_dim:
        raise ad.ShapeError(f"recurrent input shape {inputs.shape} does not match input dim {params.input_dim}")
    T = inputs.shape[0]
    pre = ad.add(ad.matmul(inputs, params.w_in), params.bias)
    h0, c0 = initial if initial is not None else (None, None)
    order = range(T - 1, -1, -1) if reverse else range(T)
    states = _cell_steps(pre, params.w_rec, order, h0, c0)
    return ad.stack([states[t] for t in range(T)])


def bidirectional(fwd: RecurrentLayerParams, bwd: RecurrentLayerParams, inputs: Tensor) -> Tensor:
    if fwd.input_dim != bwd.input_dim:
        raise ad.ShapeError("forward and backward layers disagree on input dimension")
    return ad.concat([recurrent_forward(fwd, inputs), recurrent_forward(bwd, inputs, reverse=True)], axis=1)


def subsample(states: Tensor, window: int, mode: str) -> Tensor:
    """Merge non-overlapping windows of ``window`` states.

    An incomplete last window is padded by repeating its final state.
    """
    states = ad.as_tensor(states)
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("subsample needs a non-empty (T, D) input")
    T, D = states.shape
    n = math.ceil(T / window)
    if mode == "skip":
        last = np.minimum(np.arange(1, n + 1) * window - 1, T - 1)
        return ad.gather(states, last)
    idx = np.minimum(np.arange(n * window), T - 1).reshape(n, window)
    grouped = ad.gather(states, idx)  # (n, window, D)
    if mode == "add":
        return ad.sum_(grouped, axis=1)
    if mode == "concat":
        return ad.reshape(grouped, (n, window * D))
    raise ValueError(f"unknown subsample mode {mode!r}")


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def encode(
    X: np.ndarray | Tensor,
    config: EncoderConfig,
    params: EncoderParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, int]:
    """Stacked bidirectional layers, subsampling, then a linear projection.

    Dropout (train mode only) is applied to the input of every layer above the
    first and to the top output, never inside the recurrence.
    """
    x = ad.as_tensor(X)
    use_dropout = train and config.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    for layer, (fwd, bwd) in enumerate(params.layers, start=1):
        if layer > 1 and use_dropout:
            x = ad.dropout(x, dropout_mask(rng, x.shape, config.dropout_rate))
        x = bidirectional(fwd, bwd, x)
        if layer in config.subsample_after:
            x = subsample(x, config.window, config.subsample_mode)
    if use_dropout:
        x = ad.dropout(x, dropout_mask(rng, x.shape, config.dropout_rate))
    out = ad.add(ad.matmul(x, params.proj_w), params.proj_b)
    return out, config.factor
