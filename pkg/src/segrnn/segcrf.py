"""Zeroth-order segmental CRF: segment features, score lattice, log-domain DPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import RecurrentLayerParams, fan_in_uniform
from .lattice import ClampConfig, ScoreLattice

# stand-in for log 0 inside masked DP cells; finite so the tape stays finite
LOG_ZERO = -1e30


class InfeasibleLabelsError(ValueError):
    """The label sequence admits no segmentation under the current clamp."""

    log_value = float("-inf")


@dataclass
class SegmentFeatureParams:
    embed: Tensor  # M: (V, emb_dim)
    seg_rnn: RecurrentLayerParams  # unidirectional, hidden d(h)
    duration: Tensor  # (L + 1, d_dur), row d for duration d
    w_h: Tensor  # (d_h, d_w)
    w_u: Tensor  # (emb_dim, d_w)
    w_d: Tensor  # (d_dur, d_w)
    b_hidden: Tensor  # (d_w,)
    w_out: Tensor  # (d_w, d_w)
    b_out: Tensor  # (d_w,)
    w: Tensor  # (d_w,)
    use_duration: bool = True

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def max_duration(self) -> int:
        return self.duration.shape[0] - 1

    def tensors(self) -> dict[str, Tensor]:
        out = {"crf.embed": self.embed}
        for k, t in self.seg_rnn.tensors().items():
            out[f"crf.seg_rnn.{k}"] = t
        out.update(
            {
                "crf.duration": self.duration,
                "crf.g.w_h": self.w_h,
                "crf.g.w_u": self.w_u,
                "crf.g.w_d": self.w_d,
                "crf.g.b_hidden": self.b_hidden,
                "crf.g.w_out": self.w_out,
                "crf.g.b_out": self.b_out,
                "crf.w": self.w,
            }
        )
        return out

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        vocab_size: int,
        input_dim: int,
        L: int,
        emb_dim: int = 32,
        d_h: int = 64,
        d_w: int = 64,
        d_dur: int = 8,
        use_duration: bool = True,
    ) -> "SegmentFeatureParams":
        def u(*shape, fan_in):
            return Tensor(fan_in_uniform(rng, shape, fan_in), True)

        def zeros(n):
            return Tensor(np.zeros(n), True)

        # lookup tables are scaled by their width, like a unit-variance input
        return cls(
            embed=u(vocab_size, emb_dim, fan_in=emb_dim),
            seg_rnn=RecurrentLayerParams.init(rng, input_dim, d_h),
            duration=u(L + 1, d_dur, fan_in=d_dur),
            w_h=u(d_h, d_w, fan_in=d_h),
            w_u=u(emb_dim, d_w, fan_in=emb_dim),
            w_d=u(d_dur, d_w, fan_in=d_dur),
            b_hidden=zeros(d_w),
            w_out=u(d_w, d_w, fan_in=d_w),
            b_out=zeros(d_w),
            w=u(d_w, fan_in=d_w),
            use_duration=use_duration,
        )


def segment_embeddings(H: Tensor, rnn: RecurrentLayerParams, max_duration: int) -> list[Tensor]:
    """Final segment-RNN states for every start and every duration up to the clamp.

    Runs all start positions as one batch; after step ``d`` the batch holds
    ``h_d`` for starts ``0 .. T-d``, so ``result[d-1][k]`` embeds ``<k, k+d>``.
    Each start shares its prefix, giving ``L`` batched steps in total.
    """
    H = ad.as_tensor(H)
    if H.ndim != 2 or H.shape[1] != rnn.input_dim:
        raise ad.ShapeError(f"segment input shape {H.shape} does not match input dim {rnn.input_dim}")
    T = H.shape[0]
    n_hidden = rnn.hidden
    pre = ad.add(ad.matmul(H, rnn.w_in), rnn.bias)
    out = []
    h = c = None
    for d in range(1, min(max_duration, T) + 1):
        n = T - d + 1
        x = pre[d - 1 :]
        if h is None:
            z = x
        else:
            z = ad.add(x, ad.matmul(h[:n], rnn.w_rec))
            c = c[:n]
        hc = ad.lstm_cell(z, c)
        h, c = hc[:, :n_hidden], hc[:, n_hidden:]
        out.append(h)
    return out


def segment_embedding(H: Tensor, k: int, t: int, rnn: RecurrentLayerParams, L: int | None = None) -> Tensor:
    T = ad.as_tensor(H).shape[0]
    if not 0 <= k < t <= T or (L is not None and t - k > L):
        raise ValueError(f"segment <{k}, {t}> is not admissible for T={T}, L={L}")
    return segment_embeddings(ad.as_tensor(H)[k:t], rnn, t - k)[-1][0]


def _duration_bias(params: SegmentFeatureParams, d: int) -> Tensor:
    if not params.use_duration:
        return params.b_hidden
    return ad.add(params.b_hidden, ad.matmul(params.duration[d], params.w_d))


def build_score_lattice(H: Tensor, params: SegmentFeatureParams, clamp: ClampConfig | int) -> ScoreLattice:
    """Score every admissible ``(k, t, y)``.

    ``f = w . (W_out^T tanh(W_h^T h_seg + W_u^T u_y + W_d^T dur(t-k) + b) + b_out)``.
    """
    L = clamp.L if isinstance(clamp, ClampConfig) else int(clamp)
    H = ad.as_tensor(H)
    T = H.shape[0]
    Lm = min(L, T)
    if params.use_duration and params.max_duration < Lm:
        raise ValueError(f"duration table covers {params.max_duration} steps but the clamp needs {Lm}")
    V, d_w = params.vocab_size, params.w.shape[0]
    embs = segment_embeddings(H, params.seg_rnn, Lm)
    label_part = ad.reshape(ad.matmul(params.embed, params.w_u), (1, V, d_w))
    # the two affine maps after tanh collapse to one vector
    out_vec = ad.matmul(params.w_out, params.w)
    out_bias = ad.matmul(params.b_out, params.w)
    blocks = []
    for d, emb in enumerate(embs, start=1):
        n = emb.shape[0]
        seg_part = ad.reshape(ad.matmul(emb, params.w_h), (n, 1, d_w))
        hidden = ad.tanh(ad.add(ad.add(seg_part, label_part), _duration_bias(params, d)))
        blocks.append(ad.add(ad.matmul(hidden, out_vec), out_bias))
    return ScoreLattice(T, L, V, blocks)


def score_segment(y: int, k: int, t: int, H: Tensor, params: SegmentFeatureParams, L: int | None = None) -> Tensor:
    h = segment_embedding(H, k, t, params.seg_rnn, L)
    u = params.embed[y]
    hidden = ad.tanh(
        ad.add(ad.add(ad.matmul(h, params.w_h), ad.matmul(u, params.w_u)), _duration_bias(params, t - k))
    )
    g = ad.add(ad.matmul(hidden, params.w_out), params.b_out)
    return ad.matmul(g, params.w)


def _flatten(lattice: ScoreLattice, blocks: list[Tensor]) -> tuple[Tensor, list[int]]:
    """Concatenate blocks with a trailing ``LOG_ZERO`` slot; return offsets per duration."""
    offsets, pos = [], 0
    for b in blocks:
        offsets.append(pos)
        pos += int(np.prod(b.shape))
    flat = ad.concat([ad.reshape(b, (-1,)) for b in blocks] + [Tensor(np.array([LOG_ZERO]))])
    return flat, offsets


def log_partition(lattice: ScoreLattice) -> Tensor:
    """``log Z(X)`` by the clamped forward recursion, entirely in log space."""
    T, Lm = lattice.T, lattice.max_duration
    per_segment = [ad.logsumexp(b, axis=1) for b in lattice.by_duration]
    flat, offsets = _flatten(lattice, per_segment)
    alpha = [Tensor(0.0)]
    for t in range(1, T + 1):
        ds = range(1, min(Lm, t) + 1)
        prev = ad.stack([alpha[t - d] for d in ds])
        seg = ad.gather(flat, np.array([offsets[d - 1] + (t - d) for d in ds]))
        alpha.append(ad.logsumexp(ad.add(prev, seg)))
    return alpha[T]


def is_feasible(T: int, L: int, J: int) -> bool:
    return 1 <= J <= T and J * min(L, T) >= T


def log_clamped(lattice: ScoreLattice, labels) -> Tensor:
    """``log Z(X, y)``: the forward recursion restricted to the observed labels."""
    T, Lm, V = lattice.T, lattice.max_duration, lattice.V
    labels = list(labels)
    J = len(labels)
    if not is_feasible(T, lattice.L, J):
        raise InfeasibleLabelsError(f"{J} labels cannot cover T'={T} frames with clamp L={lattice.L}")
    if any(not 0 <= y < V for y in labels):
        raise ValueError(f"label outside vocabulary of size {V}")
    flat, offsets = _flatten(lattice, lattice.by_duration)
    null = flat.shape[0] - 1
    ts = np.arange(T + 1)[:, None]
    ds = np.arange(1, Lm + 1)[None, :]
    starts = ts - ds
    valid = starts >= 0
    prev_idx = np.where(valid, starts, 0)
    beta = Tensor(np.where(np.arange(T + 1) == 0, 0.0, LOG_ZERO))
    for y in labels:
        score_idx = np.where(valid, np.array(offsets)[None, :] + prev_idx * V + y, null)
        terms = ad.add(ad.gather(beta, prev_idx), ad.gather(flat, score_idx))
        beta = ad.logsumexp(terms, axis=1)
    return beta[T]


def nll_loss(H: Tensor, params: SegmentFeatureParams, labels, clamp: ClampConfig | int) -> Tensor:
    """Negative marginal log-likelihood ``log Z(X) - log Z(X, y)``."""
    lattice = build_score_lattice(H, params, clamp)
    return lattice_nll(lattice, labels)


def lattice_nll(lattice: ScoreLattice, labels) -> Tensor:
    clamped = log_clamped(lattice, labels)
    return ad.sub(log_partition(lattice), clamped)
