"""Dense 2-D float64 tensors with a reverse-mode tape.

Implements exactly the operations the attentive encoders and contrastive loss
need: affine maps, batch normalization, GLU, ReLU, sparsemax, row
normalization, elementwise arithmetic, the reductions used by the losses, and
a bias-corrected Adam step. Recording order is topological, so one reverse
sweep over the tape visits every node exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from contab import kernels


class NonFiniteError(ArithmeticError):
    """A forward operation produced NaN or Inf."""


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.isfinite(values).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


def _as_matrix(values) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError(f"tensors are strictly 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    """Immutable (rows, cols) float64 value, optionally recorded on a tape."""

    __slots__ = ("values", "tape", "node_id")

    def __init__(self, values, tape: "Tape | None" = None, node_id: int | None = None):
        self.values = _as_matrix(values)
        _check_finite(self.values, "tensor construction")
        self.tape = tape
        self.node_id = node_id

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError("item() requires a 1x1 tensor")
        return float(self.values[0, 0])

    def __repr__(self) -> str:
        taped = "" if self.tape is None else f", node={self.node_id}"
        return f"Tensor(shape={self.shape}{taped})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Gradients:
    """Gradient lookup for tensors recorded on one tape."""

    def __init__(self, by_id: dict[int, np.ndarray], shapes: list[tuple[int, int]]):
        self._by_id = by_id
        self._shapes = shapes

    def __getitem__(self, t: Tensor) -> np.ndarray:
        if t.node_id is None:
            raise KeyError("tensor was not recorded on a tape")
        g = self._by_id.get(t.node_id)
        if g is None:
            return np.zeros(self._shapes[t.node_id])
        return g


class Tape:
    """Reverse-mode record of tensor operations, in topological order."""

    def __init__(self):
        self._shapes: list[tuple[int, int]] = []
        self._records: list[tuple[int, tuple[int, ...], Callable]] = []

    def _new_node(self, shape: tuple[int, int]) -> int:
        self._shapes.append(shape)
        return len(self._shapes) - 1

    def _record(self, shape, input_ids, backward) -> int:
        node_id = self._new_node(shape)
        self._records.append((node_id, input_ids, backward))
        return node_id

    def leaf(self, values) -> Tensor:
        t = Tensor(values)
        t.tape = self
        t.node_id = self._new_node(t.shape)
        return t

    def backward(self, loss: Tensor) -> Gradients:
        if loss.tape is not self or loss.node_id is None:
            raise ValueError("loss tensor is not recorded on this tape")
        if loss.values.size != 1:
            raise ValueError("backward requires a scalar (1x1) loss")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
        for out_id, input_ids, backward in reversed(self._records):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for node_id, contrib in zip(input_ids, backward(g)):
                prev = grads.get(node_id)
                grads[node_id] = contrib if prev is None else prev + contrib
        return Gradients(grads, self._shapes)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full((1, 1), float(value)))


def _shared_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ValueError("operands are recorded on different tapes")
    return tape


def _emit(values: np.ndarray, op: str, inputs: tuple[Tensor, ...], grad_fns: tuple) -> Tensor:
    """Create the result tensor, recording grad_fns for tape-attached inputs."""
    _check_finite(values, op)
    tape = _shared_tape(*inputs)
    out = Tensor(values)
    if tape is not None:
        ids = []
        fns = []
        for t, fn in zip(inputs, grad_fns):
            if t.tape is not None and fn is not None:
                ids.append(t.node_id)
                fns.append(fn)
        def backward(g, fns=tuple(fns)):
            return [fn(g) for fn in fns]
        out.tape = tape
        out.node_id = tape._record(values.shape, tuple(ids), backward)
    return out


def _broadcast_pair(a: Tensor, b: Tensor, op: str) -> str:
    """Classify b against a: 'same', 'row' (1xc), 'col' (rx1), or 'scalar' (1x1)."""
    if b.shape == a.shape:
        return "same"
    if b.shape == (1, 1):
        return "scalar"
    if b.rows == 1 and b.cols == a.cols:
        return "row"
    if b.cols == 1 and b.rows == a.rows:
        return "col"
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_like(g: np.ndarray, kind: str) -> np.ndarray:
    if kind == "same":
        return g
    if kind == "scalar":
        return g.sum().reshape(1, 1)
    if kind == "row":
        return g.sum(axis=0, keepdims=True)
    return g.sum(axis=1, keepdims=True)


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, like=a)
    kind = _broadcast_pair(a, b, "add")
    values = a.values + b.values
    return _emit(values, "add", (a, b), (lambda g: g, lambda g: _reduce_like(g, kind)))


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, like=a)
    kind = _broadcast_pair(a, b, "sub")
    values = a.values - b.values
    return _emit(values, "sub", (a, b), (lambda g: g, lambda g: -_reduce_like(g, kind)))


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, like=a)
    kind = _broadcast_pair(a, b, "mul")
    values = a.values * b.values
    av, bv = a.values, b.values
    return _emit(
        values,
        "mul",
        (a, b),
        (lambda g: g * bv, lambda g: _reduce_like(g * av, kind)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    values = a.values @ b.values
    av, bv = a.values, b.values
    return _emit(values, "matmul", (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _emit(a.values.T.copy(), "transpose", (a,), (lambda g: g.T,))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0
    return _emit(np.where(mask, a.values, 0.0), "relu", (a,), (lambda g: g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    v = a.values
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return _emit(s, "sigmoid", (a,), (lambda g: g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        v = np.exp(a.values)
    return _emit(v, "exp", (a,), (lambda g: g * v,))


def log(a: Tensor) -> Tensor:
    if (a.values <= 0.0).any():
        raise ValueError("log requires strictly positive entries")
    av = a.values
    return _emit(np.log(av), "log", (a,), (lambda g: g / av,))


def row_sum(a: Tensor) -> Tensor:
    values = a.values.sum(axis=1, keepdims=True)
    cols = a.cols
    return _emit(values, "row_sum", (a,), (lambda g: np.repeat(g, cols, axis=1),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(
        a.values.sum().reshape(1, 1), "sum_all", (a,), (lambda g: np.full(shape, g[0, 0]),)
    )


def mean_all(a: Tensor) -> Tensor:
    size = a.values.size
    return mul(sum_all(a), 1.0 / size)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.cols):
        raise ValueError(f"slice_cols: invalid range [{start}, {stop}) for {a.cols} columns")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return full

    return _emit(a.values[:, start:stop].copy(), "slice_cols", (a,), (backward,))


def vstack(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.cols:
        raise ValueError(f"vstack: column counts differ, {a.shape} vs {b.shape}")
    na = a.rows
    return _emit(
        np.vstack([a.values, b.values]),
        "vstack",
        (a, b),
        (lambda g: g[:na], lambda g: g[na:]),
    )


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b, with b a 1 x out row vector."""
    return add(matmul(x, w), b)


def glu(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Gated linear unit: split the affine output in halves, a * sigmoid(g)."""
    if w.cols % 2 != 0:
        raise ValueError("glu: affine output width must be even")
    h = x.values @ w.values + b.values
    _check_finite(h, "glu affine")
    half = w.cols // 2
    a_half = h[:, :half]
    gate = h[:, half:]
    s = np.where(gate >= 0, 1.0 / (1.0 + np.exp(-np.abs(gate))), np.exp(-np.abs(gate)) / (1.0 + np.exp(-np.abs(gate))))
    values = a_half * s
    xv, wv = x.values, w.values

    def _dh(g):
        dh = np.empty_like(h)
        dh[:, :half] = g * s
        dh[:, half:] = g * a_half * s * (1.0 - s)
        return dh

    return _emit(
        values,
        "glu",
        (x, w, b),
        (
            lambda g: _dh(g) @ wv.T,
            lambda g: xv.T @ _dh(g),
            lambda g: _dh(g).sum(axis=0, keepdims=True),
        ),
    )


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Column-wise batch normalization with gradients through the batch stats.

    Population variance throughout; running buffers are updated in place in
    train mode and consumed unchanged in eval mode.
    """
    n = x.rows
    if train:
        if n < 2:
            raise ValueError("batch_norm: train mode requires at least 2 rows")
        mean = x.values.mean(axis=0)
        var = x.values.var(axis=0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mean) * inv
    values = gamma.values * xhat + beta.values
    gv = gamma.values

    if train:
        def dx(g):
            dxhat = g * gv
            return inv / n * (
                n * dxhat
                - dxhat.sum(axis=0)
                - xhat * (dxhat * xhat).sum(axis=0)
            )
    else:
        def dx(g):
            return g * gv * inv

    return _emit(
        values,
        "batch_norm",
        (x, gamma, beta),
        (
            dx,
            lambda g: (g * xhat).sum(axis=0, keepdims=True),
            lambda g: g.sum(axis=0, keepdims=True),
        ),
    )


def sparsemax(a: Tensor) -> Tensor:
    """Row-wise projection onto the probability simplex (sparse attention).

    At support boundaries the backward rule is the one-sided subgradient of
    the identified support.
    """
    if a.cols == 0:
        raise ValueError("sparsemax: empty rows")
    out, _ = kernels.sparsemax_forward(a.values)
    return _emit(out, "sparsemax", (a,), (lambda g: kernels.sparsemax_backward(out, g),))


def l2_normalize_rows(a: Tensor) -> Tensor:
    norms = np.linalg.norm(a.values, axis=1, keepdims=True)
    zero = np.nonzero(norms[:, 0] == 0.0)[0]
    if zero.size:
        raise ValueError(f"l2_normalize_rows: zero-norm row at index {int(zero[0])}")
    values = a.values / norms

    def backward(g):
        inner = (g * values).sum(axis=1, keepdims=True)
        return (g - values * inner) / norms

    return _emit(values, "l2_normalize_rows", (a,), (backward,))


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarities, rows of a against rows of b."""
    if a.cols != b.cols:
        raise ValueError(f"cosine_matrix: feature widths differ, {a.shape} vs {b.shape}")
    return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)))


@dataclass
class AdamState:
    """Per-parameter Adam moments with a shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns fresh parameter arrays."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    updated = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter shape {theta.shape} for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        updated[name] = theta - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return updated


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError("grad_check: h must lie in [1e-7, 1e-3]")
    x = _as_matrix(x)
    tape = Tape()
    leaf = tape.leaf(x)
    out = f(leaf)
    if out.values.size != 1:
        raise ValueError("grad_check: f must return a scalar (1x1) tensor")
    analytic = tape.backward(out)[leaf]

    worst = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            bumped = x.copy()
            bumped[i, j] = x[i, j] + h
            hi = f(Tensor(bumped)).item()
            bumped[i, j] = x[i, j] - h
            lo = f(Tensor(bumped)).item()
            numeric = (hi - lo) / (2.0 * h)
            err = abs(analytic[i, j] - numeric) / max(1.0, abs(analytic[i, j]))
            worst = max(worst, err)
    return worst
