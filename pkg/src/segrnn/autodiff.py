"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Operations are recorded on the innermost active :class:`Tape` whenever at
least one operand requires a gradient::

    w = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        y = w * Tensor(2.0)
    grads = backward(y, tape)      # {w: array(2.)}

Outside a tape every primitive is a plain forward computation.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


_tapes: list["Tape"] = []
_faults: dict[str, float] = {}


class Tensor:
    __slots__ = ("value", "requires_grad", "name", "__weakref__")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


class Tape:
    """Ordered record of primitive applications, consumed by one backward pass."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self) -> int:
        return len(self.nodes)


@contextlib.contextmanager
def no_tape():
    """Suspend recording, e.g. for evaluation inside a training loop."""
    saved = _tapes[:]
    _tapes.clear()
    try:
        yield
    finally:
        _tapes[:] = saved


@contextlib.contextmanager
def inject_fault(op: str, factor: float = 1.5):
    """Scale the pullback of primitive ``op`` to exercise gradient checkers."""
    _faults[op] = factor
    try:
        yield
    finally:
        _faults.pop(op, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op: str, value: np.ndarray, parents: tuple[Tensor, ...], pullback: Callable) -> Tensor:
    # a finite sum proves every entry finite; only an inf/nan sum needs the exact test
    if not math.isfinite(np.sum(value)) and not np.isfinite(value).all():
        raise NonFiniteError(f"{op} produced a non-finite value")
    out = Tensor(value)
    if _tapes and any(p.requires_grad for p in parents):
        out.requires_grad = True
        if op in _faults:
            factor, inner = _faults[op], pullback
            pullback = lambda g: tuple(None if x is None else factor * x for x in inner(g))  # noqa: E731
        _tapes[-1].nodes.append((out, parents, pullback))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return _emit(
        "mul", av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.value, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a constant scalar."""
    a = as_tensor(a)
    return _emit("scale", a.value * c, (a,), lambda g: (g * c,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.value)
    return _emit("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_cell(z, c_prev=None) -> Tensor:
    """One LSTM step from gate pre-activations.

    ``z`` has last axis ``4H`` in gate order [input, forget, output, candidate];
    ``c_prev`` is the previous cell (``None`` means zeros). Returns ``[h, c]``
    concatenated on the last axis.
    """
    z = as_tensor(z)
    H = z.shape[-1] // 4
    if z.shape[-1] != 4 * H or H == 0:
        raise ShapeError(f"lstm_cell: last axis {z.shape[-1]} is not a positive multiple of 4")
    parents = (z,) if c_prev is None else (z, as_tensor(c_prev))
    cp = np.zeros(z.shape[:-1] + (H,)) if c_prev is None else parents[1].value
    if cp.shape != z.shape[:-1] + (H,):
        raise ShapeError(f"lstm_cell: cell shape {cp.shape} does not match gates {z.shape}")
    gates = _sigmoid(z.value[..., : 3 * H])
    i, f, o = gates[..., :H], gates[..., H : 2 * H], gates[..., 2 * H :]
    g = np.tanh(z.value[..., 3 * H :])
    c = f * cp + i * g
    tc = np.tanh(c)
    h = o * tc

    def pullback(grad):
        gh, gc = grad[..., :H], grad[..., H:]
        gc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [gc * g * i * (1.0 - i), gc * cp * f * (1.0 - f), gh * tc * o * (1.0 - o), gc * i * (1.0 - g * g)],
            axis=-1,
        )
        return (dz,) if c_prev is None else (dz, gc * f)

    return _emit("lstm_cell", np.concatenate([h, c], axis=-1), parents, pullback)


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.value)
    return _emit("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x)
    return _emit("log", y, (a,), lambda g: (g / x,))


def dropout(a, mask: np.ndarray) -> Tensor:
    """Apply a precomputed (already rescaled) dropout mask."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ShapeError(f"dropout: mask shape {mask.shape} != input shape {a.shape}")
    return _emit("dropout", a.value * mask, (a,), lambda g: (g * mask,))


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and ``b`` of shape (k, n) or (k,)."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim < 1 or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    k = bv.shape[0]

    if bv.ndim == 2:
        n = bv.shape[1]

        def pullback(g):
            return g @ bv.T, av.reshape(-1, k).T @ g.reshape(-1, n)

    else:

        def pullback(g):
            return np.multiply.outer(g, bv), av.reshape(-1, k).T @ np.reshape(g, -1)

    return _emit("matmul", av @ bv, (a, b), pullback)


def matvec(m, v) -> Tensor:
    m, v = as_tensor(m), as_tensor(v)
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError(f"matvec: expected matrix and vector, got {m.shape} and {v.shape}")
    return matmul(m, v)


# -- structural -------------------------------------------------------------


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        y = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return _emit("reshape", y, (a,), lambda g: (g.reshape(old),))


def broadcast_to(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        y = np.broadcast_to(a.value, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {old} to {tuple(shape)}") from None
    return _emit("broadcast", y, (a,), lambda g: (_unbroadcast(g, old),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat: no inputs")
    try:
        y = np.concatenate([t.value for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _emit("concat", y, ts, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("stack: no inputs")
    try:
        y = np.stack([t.value for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None
    return _emit("stack", y, ts, lambda g: tuple(np.moveaxis(g, axis, 0)))


def slice_(a, index) -> Tensor:
    """Basic (view) indexing: integers, slices, ellipsis."""
    a = as_tensor(a)
    shape = a.shape
    try:
        y = a.value[index]
    except IndexError as exc:
        raise ShapeError(f"slice: {exc}") from None

    def pullback(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return _emit("slice", np.array(y, copy=True), (a,), pullback)


def gather(a, index) -> Tensor:
    """Advanced indexing with integer arrays; repeated indices accumulate."""
    a = as_tensor(a)
    shape = a.shape
    try:
        y = a.value[index]
    except IndexError as exc:
        raise ShapeError(f"gather: {exc}") from None

    def pullback(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _emit("gather", y, (a,), pullback)


# -- reductions -------------------------------------------------------------


def sum_(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    y = a.value.sum(axis=axis)

    def pullback(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", np.asarray(y), (a,), pullback)


def logsumexp(a, axis: int | None = None) -> Tensor:
    """Overflow-safe ``log(sum(exp(a)))`` via the max-shift identity."""
    a = as_tensor(a)
    x = a.value
    if x.size == 0:
        raise ShapeError("logsumexp: empty input")
    m = np.max(x, axis=axis, keepdims=True)
    shifted = np.exp(x - m)
    total = shifted.sum(axis=axis, keepdims=True)
    y = m + np.log(total)
    soft = shifted / total
    out = y if axis is None else np.squeeze(y, axis=axis)
    out = out.reshape(()) if axis is None else out

    def pullback(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _emit("logsumexp", out, (a,), pullback)


def max_(a, axis: int = -1) -> tuple[Tensor, np.ndarray]:
    """Max along ``axis`` with argmax; the subgradient goes to the first maximiser."""
    a = as_tensor(a)
    x = a.value
    if x.size == 0:
        raise ShapeError("max: empty input")
    idx = np.argmax(x, axis=axis)
    y = np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def pullback(g):
        out = np.zeros(x.shape)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(np.asarray(g), axis), axis=axis)
        return (out,)

    return _emit("max", y, (a,), pullback), idx


# -- backward ---------------------------------------------------------------


def backward(root: Tensor, tape: Tape, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar root.

    Returns a map from every leaf that received gradient (or from each entry
    of ``params``, which get zeros when unreachable) to its gradient array.
    """
    if root.value.shape not in ((), (1,)):
        raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
    if tape.consumed:
        raise TapeError("tape has already been consumed by a backward pass")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    produced = set()
    for out, parents, pullback in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, pg in zip(parents, pullback(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=np.float64)

    if params is None:
        leaves = {}
        for _, parents, _ in tape.nodes:
            for p in parents:
                if p.requires_grad and id(p) not in produced and id(p) in grads:
                    leaves[p] = grads[id(p)]
        if id(root) in grads and id(root) not in produced:
            leaves[root] = grads[id(root)]
        return leaves
    return {p: grads.get(id(p), np.zeros(p.shape)).reshape(p.shape) for p in params}
