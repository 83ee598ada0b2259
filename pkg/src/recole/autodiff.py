"""A small tape-based reverse-mode differentiation engine over dense float64 matrices.

Every tensor is 2-D. Ops record onto the thread's active tape whenever an
input requires grad; ``backward`` replays the tape in reverse and clears it.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    def __init__(self):
        self.records = []  # (output, inputs, backward_fn) in execution order

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records.clear()


_local = threading.local()


def current_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


def _recording() -> bool:
    return getattr(_local, "enabled", True)


@contextmanager
def no_grad():
    prev = _recording()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


@contextmanager
def fresh_tape():
    prev = getattr(_local, "tape", None)
    _local.tape = Tape()
    try:
        yield _local.tape
    finally:
        _local.tape = prev


def _check(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    return arr


def _make(data, inputs, backward, op):
    out = Tensor.__new__(Tensor)
    out.data = _check(data, op)
    out.grad = None
    out.name = None
    out.requires_grad = _recording() and any(getattr(i, "requires_grad", False) for i in inputs)
    if out.requires_grad:
        current_tape().records.append((out, inputs, backward))
    return out


def _accum(t, g):
    if isinstance(t, Tensor) and t.requires_grad:
        t.grad = g.copy() if t.grad is None else t.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- forward ops --------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), back, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a 1 x cols row broadcast over a's rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        def back(g):
            _accum(a, g)
            _accum(b, g)
    elif b.shape == (1, a.shape[1]):
        def back(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0, keepdims=True))
    else:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _make(a.data + b.data, (a, b), back, "add")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at the kink

    def back(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), back, "relu")


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows column mismatch: {a.shape} vs {b.shape}")
    k = a.shape[0]

    def back(g):
        _accum(a, g[:k])
        _accum(b, g[k:])

    return _make(np.vstack([a.data, b.data]), (a, b), back, "concat_rows")


def row(a: Tensor, i: int) -> Tensor:
    if not 0 <= i < a.shape[0]:
        raise ShapeError(f"row {i} out of range for shape {a.shape}")

    def back(g):
        full = np.zeros_like(a.data)
        full[i] = g[0]
        _accum(a, full)

    return _make(a.data[i:i + 1].copy(), (a,), back, "row")


def rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(a.data[idx], (a,), back, "rows")


def reshape(a: Tensor, shape: tuple[int, int]) -> Tensor:
    def back(g):
        _accum(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape).copy(), (a,), back, "reshape")


def flatten(a: Tensor) -> Tensor:
    """Row-major flattening to a 1 x size row."""
    return reshape(a, (1, a.data.size))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def back(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), back, "scale")


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, np.full_like(a.data, g[0, 0]))

    return _make(np.array([[a.data.sum()]]), (a,), back, "sum_all")


def add_scalars(xs) -> Tensor:
    xs = list(xs)
    for x in xs:
        if x.shape != (1, 1):
            raise ShapeError(f"add_scalars expects 1x1 tensors, got {x.shape}")

    def back(g):
        for x in xs:
            _accum(x, g)

    return _make(np.array([[sum(x.data[0, 0] for x in xs)]]), tuple(xs), back, "add_scalars")


def cosine_sim(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of the flattened inputs, as a 1x1 tensor. Zero vectors are rejected."""
    if u.data.size != v.data.size:
        raise ShapeError(f"cosine_sim size mismatch: {u.shape} vs {v.shape}")
    a, b = u.data.ravel(), v.data.ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroDivisionError("cosine_sim of a zero-norm vector")
    s = float(a @ b) / (na * nb)

    def back(g):
        gg = g[0, 0]
        _accum(u, (gg * (b / (na * nb) - s * a / na**2)).reshape(u.shape))
        _accum(v, (gg * (a / (na * nb) - s * b / nb**2)).reshape(v.shape))

    return _make(np.array([[s]]), (u, v), back, "cosine_sim")


def logsumexp_over(xs) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeError("logsumexp_over needs at least one input")
    vals = np.array([x.item() for x in xs])
    mx = vals.max()
    e = np.exp(vals - mx)
    tot = e.sum()
    w = e / tot

    def back(g):
        for x, wi in zip(xs, w):
            _accum(x, g * wi)

    return _make(np.array([[mx + np.log(tot)]]), tuple(xs), back, "logsumexp_over")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Tensor) -> Tensor:
    """ln(1 + e^x), evaluated without overflow."""
    x = a.data
    val = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def back(g):
        _accum(a, g * _sigmoid(x))

    return _make(val, (a,), back, "softplus")


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def back(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), back, "sigmoid")


def spmm(S, x: Tensor, S_T=None) -> Tensor:
    """Constant sparse matrix times dense tensor; ``S_T`` is an optional cached transpose."""
    if S.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {S.shape} @ {x.shape}")

    def back(g):
        St = S_T if S_T is not None else S.T
        _accum(x, np.asarray(St @ g))

    return _make(np.asarray(S @ x.data), (x,), back, "spmm")


# --- reverse pass ---------------------------------------------------------------

def backward(loss: Tensor, tape: Tape | None = None):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded tensor, then clear the tape."""
    tape = tape or current_tape()
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
    if not loss.requires_grad or not tape.records:
        tape.clear()
        raise ValueError("loss does not depend on any tensor requiring grad")
    loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
    try:
        for out, _, back in reversed(tape.records):
            g = out.grad
            if g is None:
                continue
            back(g)
            out.grad = None  # intermediates do not keep gradients
    finally:
        tape.clear()
