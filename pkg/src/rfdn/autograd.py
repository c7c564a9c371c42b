"""Reverse-mode differentiation, L1 loss, Adam and the step-decay schedule.

Differentiable ops in this module accept either plain arrays or :class:`Node`
values. With plain arrays they defer straight to the kernels in
:mod:`rfdn.tensor`, so the same model code serves inference and training.
As soon as one input is a node, the op is appended to that node's
:class:`Tape` together with a closure that maps the output gradient to
input gradients.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import tensor as T
from .errors import ShapeError, UsageError
from .tensor import ConvWeights


class Node:
    __slots__ = ("value", "_tape", "parents", "grad_fn", "name", "index")

    def __init__(self, value, tape, parents=(), grad_fn=None, name=None):
        self.value = value
        # weak, so a dropped tape frees its nodes without waiting for the cycle collector
        self._tape = weakref.ref(tape)
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def tape(self) -> "Tape":
        tape = self._tape()
        if tape is None:
            raise UsageError("node outlived its tape")
        return tape

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node{label} #{self.index} shape={self.value.shape}>"


class Tape:
    """Ordered record of a forward computation.

    Nodes are appended as ops run, so list order is already topological.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, name: str | None = None) -> Node:
        return Node(np.asarray(value), self, name=name)

    def params(self, store: Mapping[str, np.ndarray]) -> dict[str, Node]:
        return {name: self.leaf(arr, name) for name, arr in store.items()}


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def value(x):
    return x.value if isinstance(x, Node) else x


def _record(tape, out, parents, grad_fn):
    return Node(out, tape, tuple(parents), grad_fn)


# --------------------------------------------------------------------------
# differentiable ops


def conv2d(x, w: ConvWeights, pad=None):
    tape = _tape_of(x, w.kernel, w.bias)
    xv, kv, bv = value(x), value(w.kernel), value(w.bias)
    if tape is None:
        return T.conv2d(xv, ConvWeights(kv, bv), pad)
    out, cols = T.conv2d_with_cols(xv, ConvWeights(kv, bv), pad)
    k = kv.shape[2]

    def grad_fn(g):
        n, c_out, h, wd = g.shape
        gm = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
        gk = (gm.T @ cols).reshape(c_out, k, k, -1).transpose(0, 3, 1, 2)
        gb = gm.sum(axis=0)
        # input gradient is the correlation with the flipped, transposed kernel
        flipped = np.ascontiguousarray(kv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gx = T.conv2d(g, ConvWeights(flipped, np.zeros(flipped.shape[0], g.dtype)))
        return gx, gk, gb

    return _record(tape, out, (x, w.kernel, w.bias), grad_fn)


def leaky_relu(x, slope: float = T.LEAKY_SLOPE):
    tape = _tape_of(x)
    xv = value(x)
    out = T.leaky_relu(xv, slope)
    if tape is None:
        return out
    scale = np.where(xv >= 0, 1.0, slope).astype(xv.dtype)
    return _record(tape, out, (x,), lambda g: (g * scale,))


def sigmoid(x):
    tape = _tape_of(x)
    out = T.sigmoid(value(x))
    if tape is None:
        return out
    return _record(tape, out, (x,), lambda g: (g * out * (1 - out),))


def add(x, y):
    tape = _tape_of(x, y)
    out = T.add(value(x), value(y))
    if tape is None:
        return out
    return _record(tape, out, (x, y), lambda g: (g, g))


def mul(x, y):
    """Broadcasting product; gradients are summed back to each input's shape."""
    tape = _tape_of(x, y)
    xv, yv = value(x), value(y)
    out = xv * yv
    if tape is None:
        return out
    return _record(tape, out, (x, y),
                   lambda g: (_unbroadcast(g * yv, xv.shape), _unbroadcast(g * xv, yv.shape)))


def _unbroadcast(g, shape):
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


def concat_channels(xs):
    xs = list(xs)
    tape = _tape_of(*xs)
    vals = [value(x) for x in xs]
    out = T.concat_channels(vals)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[1] for v in vals])

    def grad_fn(g):
        return tuple(g[:, a:b] for a, b in zip(bounds[:-1], bounds[1:]))

    return _record(tape, out, xs, grad_fn)


def slice_channels(x, start: int, stop: int):
    tape = _tape_of(x)
    xv = value(x)
    out = xv[:, start:stop].copy()
    if tape is None:
        return out

    def grad_fn(g):
        full = np.zeros_like(xv)
        full[:, start:stop] = g
        return (full,)

    return _record(tape, out, (x,), grad_fn)


def pixel_shuffle(x, r: int):
    tape = _tape_of(x)
    out = T.pixel_shuffle(value(x), r)
    if tape is None:
        return out
    return _record(tape, out, (x,), lambda g: (T.pixel_unshuffle(g, r),))


def channel_stats_pool(x):
    """Differentiable ``mean + std`` contrast statistic, shaped ``(n, c, 1, 1)``."""
    tape = _tape_of(x)
    xv = value(x)
    mean, std = T.channel_stats_pool(xv)
    out = mean + std
    if tape is None:
        return out
    hw = xv.shape[2] * xv.shape[3]

    def grad_fn(g):
        centered = xv - mean
        safe = np.where(std > 0, std, 1)
        dstd = np.where(std > 0, centered / (hw * safe), 0)
        return (g / hw + g * dstd,)

    return _record(tape, out, (x,), grad_fn)


def l1_loss(pred, target):
    """Mean absolute error over every element."""
    tape = _tape_of(pred, target)
    pv, tv = value(pred), value(target)
    if pv.shape != tv.shape:
        raise ShapeError(f"loss shapes differ: {pv.shape} vs {tv.shape}")
    diff = pv - tv
    out = np.abs(diff).mean(dtype=np.float64).astype(pv.dtype)
    if tape is None:
        return out
    n = diff.size

    def grad_fn(g):
        sg = np.sign(diff) * (g / n)
        return sg, -sg

    return _record(tape, np.asarray(out), (pred, target), grad_fn)


def weighted_sum(x, weights: np.ndarray):
    """Scalar ``sum(x * weights)`` for a constant ``weights`` array."""
    tape = _tape_of(x)
    xv = value(x)
    out = np.asarray(np.sum(xv * weights))
    if tape is None:
        return out
    return _record(tape, out, (x,), lambda g: (g * weights,))


# --------------------------------------------------------------------------


def backward(tape: Tape, loss: Node) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` for every named leaf on ``tape``.

    Named leaves the loss does not depend on receive exact zeros.
    """
    if loss.tape is not tape:
        raise UsageError("loss node does not belong to this tape")
    if loss.value.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = grads.pop(node.index, None) if node.grad_fn is not None else grads.get(node.index)
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if not isinstance(parent, Node):
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = pg
    out = {}
    for node in tape.nodes:
        if node.name is not None:
            g = grads.get(node.index)
            out[node.name] = np.zeros_like(node.value) if g is None else g.astype(node.value.dtype)
    return out


# --------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new params and a new state."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    new_params, m_all, v_all = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params[name] = (p - step).astype(p.dtype)
        m_all[name], v_all[name] = m, v
    return new_params, AdamState(m_all, v_all, t, b1, b2, state.eps)


@dataclass(frozen=True)
class LrSchedule:
    initial: float = 5e-4
    half_life: int = 200_000

    def __post_init__(self):
        if self.initial <= 0 or self.half_life < 1:
            raise ValueError("schedule needs a positive rate and half-life")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    return schedule.initial * 2.0 ** -(step // schedule.half_life)


# --------------------------------------------------------------------------
# finite differences


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (float64 expected)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x))
        flat[i] = orig - eps
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    a, n = np.asarray(analytic, np.float64), np.asarray(numeric, np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradcheck(fn: Callable[..., object], inputs: Mapping[str, np.ndarray], seed: int = 0,
              eps: float = 1e-6) -> dict[str, float]:
    """Worst relative error of tape gradients against central differences, per input.

    ``fn`` takes the inputs as keyword arguments and may return any shape; it
    is reduced to a scalar by a fixed random projection so that every output
    element contributes.
    """
    inputs = {k: np.asarray(v, np.float64) for k, v in inputs.items()}
    proj = np.random.default_rng(seed).standard_normal(np.shape(value(fn(**inputs))))
    tape = Tape()
    nodes = {k: tape.leaf(v, k) for k, v in inputs.items()}
    grads = backward(tape, weighted_sum(fn(**nodes), proj))
    errs = {}
    for name in inputs:
        def scalar(v, name=name):
            return float(np.sum(value(fn(**{**inputs, name: v})) * proj))
        errs[name] = max_rel_error(grads[name], numeric_grad(scalar, inputs[name], eps))
    return errs
