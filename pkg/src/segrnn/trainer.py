"""Per-utterance SGD with validation-driven learning-rate halving."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .dataio import Utterance
from .decoder import decode_joint
from .model import SegmentalRNN, utterance_rng
from .scoring import corpus_per
from .segcrf import is_feasible, lattice_nll

log = logging.getLogger(__name__)


class NonFiniteGradient(FloatingPointError):
    def __init__(self, utt_id: str, name: str):
        super().__init__(f"non-finite gradient for {name} on utterance {utt_id}")
        self.utt_id = utt_id
        self.name = name


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 0.1
    decay_factor: float = 2.0
    max_epochs: int = 30
    patience: int = 1
    min_lr: float | None = None
    dropout_rate: float = 0.2
    seed: int = 0
    batch_size: int = 1
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.lr_init <= 0:
            raise ValueError("lr_init must be > 0")
        if self.decay_factor <= 1:
            raise ValueError("decay_factor must be > 1")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def stop_lr(self) -> float:
        return self.lr_init / 1024 if self.min_lr is None else self.min_lr


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_error: float
    lr: float
    wall_time: float
    skipped: int = 0


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_checkpoint: str | None = None
    clip_norm: float = 5.0
    stop_reason: str = ""

    def losses(self) -> list[tuple[float, float]]:
        return [(e.train_loss, e.valid_loss) for e in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)


def sgd_step(params: dict[str, ad.Tensor], grads: dict[str, np.ndarray], lr: float) -> None:
    """In-place ``p <- p - lr * g``."""
    if set(grads) != set(params):
        raise KeyError("gradients are not keyed like the parameters")
    for name, p in params.items():
        p.value = p.value - lr * grads[name]


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


def schedule_lr(
    errors: Sequence[float], lr: float, config: TrainConfig, since_decay: int | None = None
) -> tuple[float, bool]:
    """Return ``(new_lr, stop)``.

    The rate is divided by ``decay_factor`` when the last ``patience`` errors
    all fail to beat the best error before them. ``since_decay`` counts epochs
    since the previous decay so that each decay waits a fresh ``patience``.
    """
    if not errors:
        raise ValueError("schedule_lr needs at least one epoch of history")
    n, p = len(errors), config.patience
    recent = n if since_decay is None else since_decay
    if n > p and recent >= p and min(errors[-p:]) >= min(errors[: n - p]):
        lr = lr / config.decay_factor
    return lr, lr < config.stop_lr or n >= config.max_epochs


def utterance_grads(model: SegmentalRNN, utt: Utterance, rng: np.random.Generator | None, train: bool):
    params = model.params()
    with ad.Tape() as tape:
        loss = model.loss(utt.frames, utt.labels, train=train, rng=rng)
    grads = ad.backward(loss, tape, params.values())
    out = {name: grads[p] for name, p in params.items()}
    for name, g in out.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(utt.utt_id, name)
    return loss.item(), out


def evaluate(model: SegmentalRNN, data: Sequence[Utterance]) -> tuple[float, float]:
    """Mean validation loss and corpus label error rate of joint decoding."""
    losses, pairs = [], []
    with ad.no_tape():
        for utt in data:
            lattice = model.lattice(utt.frames)
            if is_feasible(lattice.T, lattice.L, len(utt.labels)):
                losses.append(lattice_nll(lattice, utt.labels).item())
            pairs.append((list(decode_joint(lattice).labels), list(utt.labels)))
    return (float(np.mean(losses)) if losses else math.nan), corpus_per(pairs)


def feasible(model: SegmentalRNN, utt: Utterance) -> bool:
    T = model.config.encoder.output_length(utt.frames.shape[0])
    return is_feasible(T, model.config.clamp_L, len(utt.labels))


def train(
    model: SegmentalRNN,
    config: TrainConfig,
    train_set: Sequence[Utterance],
    valid_set: Sequence[Utterance],
    on_epoch: Callable[[EpochRecord], None] | None = None,
    on_best: Callable[[SegmentalRNN, EpochRecord], None] | None = None,
) -> tuple[dict[str, np.ndarray], TrainReport]:
    """Train in place; return the best-validation parameter snapshot and the report."""
    if not train_set or not valid_set:
        raise ValueError("training and validation sets must be non-empty")
    usable = []
    skipped = 0
    for utt in train_set:
        if feasible(model, utt):
            usable.append(utt)
        else:
            skipped += 1
            log.warning("skipping infeasible utterance %s (%d labels)", utt.utt_id, len(utt.labels))
    if not usable:
        raise ValueError("no feasible training utterances")

    if model.config.encoder.dropout_rate != config.dropout_rate:
        model.config = replace(model.config, encoder=replace(model.config.encoder, dropout_rate=config.dropout_rate))
    params = model.params()
    report = TrainReport(clip_norm=config.clip_norm)
    lr = config.lr_init
    errors: list[float] = []
    best_error, best_snapshot = math.inf, model.snapshot()
    since_decay = 0
    train_mode = config.dropout_rate > 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(len(usable))
        total, pending, in_batch = 0.0, None, 0
        for i in order:
            utt = usable[i]
            rng = utterance_rng(config.seed, epoch, utt.utt_id) if train_mode else None
            loss, grads = utterance_grads(model, utt, rng, train_mode)
            total += loss
            pending = grads if pending is None else {k: pending[k] + grads[k] for k in grads}
            in_batch += 1
            if in_batch == config.batch_size:
                _apply(params, pending, in_batch, lr, config.clip_norm)
                pending, in_batch = None, 0
        if pending is not None:
            _apply(params, pending, in_batch, lr, config.clip_norm)

        valid_loss, valid_error = evaluate(model, valid_set)
        record = EpochRecord(
            epoch=epoch,
            train_loss=total / len(usable),
            valid_loss=valid_loss,
            valid_error=valid_error,
            lr=lr,
            wall_time=time.perf_counter() - start,
            skipped=skipped,
        )
        report.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if valid_error < best_error:
            best_error, best_snapshot = valid_error, model.snapshot()
            report.best_epoch = epoch
            if on_best is not None:
                on_best(model, record)
        errors.append(valid_error)
        since_decay += 1
        new_lr, stop = schedule_lr(errors, lr, config, since_decay)
        if new_lr != lr:
            since_decay = 0
        lr = new_lr
        if stop:
            report.stop_reason = "max_epochs" if epoch >= config.max_epochs else "min_lr"
            break
    return best_snapshot, report


def _apply(params, grads, count: int, lr: float, clip_norm: float) -> None:
    if count > 1:
        grads = {k: g / count for k, g in grads.items()}
    clip_gradients(grads, clip_norm)
    sgd_step(params, grads, lr)


def epoch_line(record: EpochRecord) -> str:
    return json.dumps(asdict(record), sort_keys=True)
