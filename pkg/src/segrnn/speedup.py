"""Cost of lattice construction plus the partition DP versus subsampling depth."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .lattice import lattice_entry_count
from .model import ModelConfig
from .segcrf import SegmentFeatureParams, build_score_lattice, log_partition

REFERENCE_SPEEDUP = {0: "1x", 1: "~3x", 2: "~10x"}


@dataclass
class SpeedupRow:
    layers: int
    T: int
    L: int
    cells: int
    seconds: float
    speedup: float = 1.0
    cell_ratio: float = 1.0

    @property
    def reference(self) -> str:
        return REFERENCE_SPEEDUP.get(self.layers, "-")


def _time_once(H: ad.Tensor, params: SegmentFeatureParams, L: int) -> float:
    start = time.perf_counter()
    with ad.no_tape():
        log_partition(build_score_lattice(H, params, L))
    return time.perf_counter() - start


def measure(
    config: ModelConfig, T: int = 512, vocab_size: int = 48, layers=(0, 1, 2), repeats: int = 3, seed: int = 0
) -> list[SpeedupRow]:
    """Best-of-``repeats`` wall time at each subsampling depth.

    The clamp is held fixed in original frames, so it shrinks with the
    subsampling factor (30 -> 15 -> 8 frames for window 2).
    """
    window = config.encoder.window
    feat = config.features
    rows = []
    for n in layers:
        factor = window**n
        T_sub = math.ceil(T / factor)
        L = math.ceil(config.clamp_frames / factor)
        rng = np.random.default_rng([seed, n])
        params = SegmentFeatureParams.init(
            rng, vocab_size, config.encoder.proj_dim, L, feat.emb_dim, feat.d_h, feat.d_w, feat.d_dur, feat.use_duration
        )
        H = ad.Tensor(rng.normal(size=(T_sub, config.encoder.proj_dim)))
        seconds = min(_time_once(H, params, L) for _ in range(repeats))
        rows.append(SpeedupRow(n, T_sub, L, lattice_entry_count(T_sub, L, vocab_size), seconds))
    base = rows[0]
    for r in rows:
        r.speedup = base.seconds / r.seconds
        r.cell_ratio = base.cells / r.cells
    return rows


def format_table(rows: list[SpeedupRow]) -> str:
    lines = [f"{'subsampling':<12}{'T':>6}{'L':>5}{'cells':>10}{'cell ratio':>12}{'seconds':>10}{'speedup':>9}{'reference':>11}"]
    for r in rows:
        name = "none" if r.layers == 0 else f"{r.layers} layer" + ("s" if r.layers > 1 else "")
        lines.append(
            f"{name:<12}{r.T:>6}{r.L:>5}{r.cells:>10}{r.cell_ratio:>12.3f}{r.seconds:>10.4f}{r.speedup:>8.2f}x{r.reference:>11}"
        )
    return "\n".join(lines)
