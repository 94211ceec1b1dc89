"""Dense 64-bit matrices with just enough reverse-mode autodiff for the heads.

A ``Matrix`` wraps a 2-D float64 numpy array. Differentiable operations are
module-level functions that optionally record a backward closure on a
``GradTape``; ``GradTape.backward`` replays the closures in exact reverse
execution order, accumulating into ``Matrix.grad``. Vectors are represented
as 1xN matrices throughout.

All training math is 64-bit; the 32-bit on-disk embedding format is widened
on load (see the data module).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, GradCheckError, ShapeError

PROB_FLOOR = 1e-12  # probabilities are floored here before any log
LAYER_NORM_EPS = 1e-5


class Matrix:
    """2-D float64 value, optionally carrying an accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data, validate: bool = True):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"Matrix must be 2-D, got ndim={arr.ndim}")
        if validate and not np.isfinite(arr).all():
            raise DataError("Matrix rejects non-finite entries")
        self.data = arr
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Matrix":
        """Adopt an internally computed array without copy or finite check."""
        m = cls.__new__(cls)
        m.data = arr
        m.grad = None
        return m

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def row(cls, values) -> "Matrix":
        """A 1xN matrix from a flat sequence."""
        return cls(np.asarray(values, dtype=np.float64).reshape(1, -1))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def copy(self) -> "Matrix":
        return Matrix._wrap(self.data.copy())

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


class GradTape:
    """Ordered record of executed differentiable operations.

    The reverse pass visits records in exact reverse execution order;
    gradients for shared inputs accumulate additively.
    """

    def __init__(self):
        self._records: list[Callable[[], None]] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, backward: Callable[[], None]) -> None:
        self._records.append(backward)

    def backward(self, loss: Matrix) -> None:
        if loss.data.shape != (1, 1):
            raise ShapeError(f"backward expects a 1x1 loss, got {loss.shape}")
        g = loss.ensure_grad()
        g[0, 0] += 1.0
        for fn in reversed(self._records):
            fn()


# ---------------------------------------------------------------------------
# differentiable operations


def matmul(a: Matrix, b: Matrix, tape: GradTape | None = None) -> Matrix:
    """Matrix product. d/da = g @ b.T, d/db = a.T @ g."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.rows}x{a.cols} @ {b.rows}x{b.cols}"
        )
    out = Matrix._wrap(a.data @ b.data)
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            a.ensure_grad()
            a.grad += g @ b.data.T
            b.ensure_grad()
            b.grad += a.data.T @ g
        tape.record(backward)
    return out


def transpose(a: Matrix, tape: GradTape | None = None) -> Matrix:
    out = Matrix._wrap(np.ascontiguousarray(a.data.T))
    if tape is not None:
        def backward(a=a, out=out):
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad.T
        tape.record(backward)
    return out


def add(a: Matrix, b: Matrix, tape: GradTape | None = None) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")
    out = Matrix._wrap(a.data + b.data)
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            a.ensure_grad()
            a.grad += g
            b.ensure_grad()
            b.grad += g
        tape.record(backward)
    return out


def add_row(m: Matrix, v: Matrix, tape: GradTape | None = None) -> Matrix:
    """Add a 1xC row vector to every row of m (bias add)."""
    if v.rows != 1 or v.cols != m.cols:
        raise ShapeError(f"add_row: {m.shape} + {v.shape}")
    out = Matrix._wrap(m.data + v.data)
    if tape is not None:
        def backward(m=m, v=v, out=out):
            g = out.grad
            if g is None:
                return
            m.ensure_grad()
            m.grad += g
            v.ensure_grad()
            v.grad += g.sum(axis=0, keepdims=True)
        tape.record(backward)
    return out


def scale(a: Matrix, c: float, tape: GradTape | None = None) -> Matrix:
    out = Matrix._wrap(a.data * c)
    if tape is not None:
        def backward(a=a, c=c, out=out):
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += c * out.grad
        tape.record(backward)
    return out


def softmax_rows(m: Matrix, temperature: float, tape: GradTape | None = None) -> Matrix:
    """Row-wise softmax at the given temperature.

    Computed as softmax(m / temperature) with max-subtraction, so
    softmax_rows(m, t) and softmax_rows(m / t, 1) follow the identical
    floating-point path.
    """
    if not temperature > 0:
        raise ConfigError(f"softmax temperature must be > 0, got {temperature}")
    z = m.data / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Matrix._wrap(y)
    if tape is not None:
        def backward(m=m, out=out, temperature=temperature):
            g = out.grad
            if g is None:
                return
            y = out.data
            inner = (g * y).sum(axis=1, keepdims=True)
            m.ensure_grad()
            m.grad += y * (g - inner) / temperature
        tape.record(backward)
    return out


def layer_norm_rows(m: Matrix, eps: float = LAYER_NORM_EPS,
                    tape: GradTape | None = None) -> Matrix:
    """Normalize each row to mean 0 / variance 1 (no learnable affine)."""
    if m.cols < 1:
        raise DataError("layer_norm on empty vectors")
    mu = m.data.mean(axis=1, keepdims=True)
    centered = m.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv
    out = Matrix._wrap(y)
    if tape is not None:
        def backward(m=m, out=out, inv=inv):
            g = out.grad
            if g is None:
                return
            y = out.data
            gm = g.mean(axis=1, keepdims=True)
            gy = (g * y).mean(axis=1, keepdims=True)
            m.ensure_grad()
            m.grad += inv * (g - gm - y * gy)
        tape.record(backward)
    return out


def dropout(m: Matrix, p: float, rng: np.random.Generator, training: bool,
            tape: GradTape | None = None) -> Matrix:
    """Inverted dropout: zero entries with probability p, scale survivors.

    Draw order: in training mode with p > 0, exactly one uniform per entry,
    row-major. Eval mode (and p == 0) is the exact identity and consumes no
    draws.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return m
    u = rng.random(size=m.shape)
    keep = (u >= p) / (1.0 - p)
    out = Matrix._wrap(m.data * keep)
    if tape is not None:
        def backward(m=m, out=out, keep=keep):
            if out.grad is None:
                return
            m.ensure_grad()
            m.grad += out.grad * keep
        tape.record(backward)
    return out


def mean_pool_rows(m: Matrix, tape: GradTape | None = None) -> Matrix:
    """Arithmetic mean over rows, returned as a 1xD matrix."""
    if m.rows < 1:
        raise DataError("mean_pool_rows on a matrix with zero rows")
    out = Matrix._wrap(m.data.mean(axis=0, keepdims=True))
    if tape is not None:
        def backward(m=m, out=out):
            if out.grad is None:
                return
            m.ensure_grad()
            m.grad += out.grad / m.rows
        tape.record(backward)
    return out


def concat_cols(a: Matrix, b: Matrix, tape: GradTape | None = None) -> Matrix:
    """Horizontal concatenation [a || b]; order is part of the contract."""
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    out = Matrix._wrap(np.hstack([a.data, b.data]))
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            a.ensure_grad()
            a.grad += g[:, : a.cols]
            b.ensure_grad()
            b.grad += g[:, a.cols:]
        tape.record(backward)
    return out


def take_row(m: Matrix, index: int, tape: GradTape | None = None) -> Matrix:
    if not 0 <= index < m.rows:
        raise DataError(f"take_row: index {index} out of range for {m.rows} rows")
    out = Matrix._wrap(m.data[index: index + 1].copy())
    if tape is not None:
        def backward(m=m, out=out, index=index):
            if out.grad is None:
                return
            m.ensure_grad()
            m.grad[index] += out.grad[0]
        tape.record(backward)
    return out


def cross_entropy(probs: Matrix, label: int, tape: GradTape | None = None) -> Matrix:
    """-log p[label] in nats, probability floored at PROB_FLOOR. 1xC input."""
    if probs.rows != 1:
        raise ShapeError(f"cross_entropy expects a 1xC row, got {probs.shape}")
    if not 0 <= label < probs.cols:
        raise DataError(f"label {label} out of range for {probs.cols} classes")
    p = probs.data[0, label]
    out = Matrix._wrap(np.array([[-math.log(max(p, PROB_FLOOR))]]))
    if tape is not None:
        def backward(probs=probs, out=out, label=label, p=p):
            if out.grad is None:
                return
            probs.ensure_grad()
            if p > PROB_FLOOR:
                probs.grad[0, label] += -out.grad[0, 0] / p
        tape.record(backward)
    return out


def soft_cross_entropy(student: Matrix, target: np.ndarray,
                       tape: GradTape | None = None) -> Matrix:
    """-sum_c target[c] * log student[c], with the same flooring.

    The target distribution is a constant: no gradient flows into it.
    """
    if student.rows != 1:
        raise ShapeError(f"soft_cross_entropy expects a 1xC row, got {student.shape}")
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if t.shape[0] != student.cols:
        raise DataError(
            f"target length {t.shape[0]} != student classes {student.cols}")
    s = student.data[0]
    floored = np.maximum(s, PROB_FLOOR)
    out = Matrix._wrap(np.array([[-float(np.dot(t, np.log(floored)))]]))
    if tape is not None:
        def backward(student=student, out=out, t=t, s=s):
            if out.grad is None:
                return
            student.ensure_grad()
            live = s > PROB_FLOOR
            student.grad[0, live] += -out.grad[0, 0] * t[live] / s[live]
        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(loss_fn: Callable[[GradTape | None], Matrix],
               params: Sequence[Matrix], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn(tape)`` must rebuild the 1x1 loss from the current contents of
    ``params`` (recording on ``tape`` when given). Error per entry is
    |analytic - central| / max(1, |central|); the max over all entries of all
    params is returned. Non-finite values raise GradCheckError naming the
    location.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ConfigError(f"grad_check eps must be in [1e-6, 1e-4], got {eps}")
    tape = GradTape()
    for p in params:
        p.zero_grad()
    loss = loss_fn(tape)
    if not np.isfinite(loss.data).all():
        raise GradCheckError("non-finite loss in analytic pass")
    tape.backward(loss)
    analytic = []
    for i, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise GradCheckError(f"non-finite analytic gradient in param {i}")
        analytic.append(g.copy())
        p.zero_grad()

    worst = 0.0
    for i, p in enumerate(params):
        flat = p.data.reshape(-1)
        for j in range(flat.shape[0]):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(None).item()
            flat[j] = orig - eps
            down = loss_fn(None).item()
            flat[j] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise GradCheckError(
                    f"non-finite perturbed loss at param {i}, entry {j}")
            central = (up - down) / (2.0 * eps)
            err = abs(analytic[i].reshape(-1)[j] - central) / max(1.0, abs(central))
            worst = max(worst, err)
    return worst
