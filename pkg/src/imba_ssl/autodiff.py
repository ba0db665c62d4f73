"""Reverse-mode automatic differentiation over small dense float64 arrays.

Values are eagerly computed numpy arrays (rank 0, 1 or 2); every operation
records a backward closure so gradients can be accumulated by a single
reverse-topological sweep. Deliberately small: exactly the operations the
classifier and the loss functions need, nothing more.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

PROB_FLOOR = 1e-12  # floor applied inside logarithms of probabilities


class Tensor:
    """A node in the computation graph.

    value      -- float64 ndarray (scalar, vector or matrix)
    grad       -- accumulated d(loss)/d(value), same shape; None until touched
    stop_grad  -- if set, backward() does not propagate into this node's parents
    """

    __slots__ = ("value", "grad", "stop_grad", "_parents", "_backward_fn")

    def __init__(self, value, parents: tuple = (), stop_grad: bool = False,
                 backward_fn: Callable[[np.ndarray], None] | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.stop_grad = stop_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self) -> None:
        backward(self)

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Tensor):
            c = float(other)
            out = Tensor(self.value + c, parents=(self,))
            out._backward_fn = lambda g: self.accumulate(g)
            return out
        if self.value.shape != other.value.shape:
            raise ShapeError(f"add: {self.value.shape} vs {other.value.shape}")
        out = Tensor(self.value + other.value, parents=(self, other))

        def back(g):
            self.accumulate(g)
            other.accumulate(g)

        out._backward_fn = back
        return out

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            c = float(other)
            out = Tensor(self.value * c, parents=(self,))
            out._backward_fn = lambda g: self.accumulate(g * c)
            return out
        if self.value.shape != other.value.shape:
            raise ShapeError(f"mul: {self.value.shape} vs {other.value.shape}")
        out = Tensor(self.value * other.value, parents=(self, other))

        def back(g):
            self.accumulate(g * other.value)
            other.accumulate(g * self.value)

        out._backward_fn = back
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return self + (other * -1.0)
        return self + (-float(other))

    def __rsub__(self, other):
        return (self * -1.0) + float(other)

    def __pow__(self, exponent):
        e = float(exponent)
        out = Tensor(self.value ** e, parents=(self,))

        def back(g):
            if e == 0.0:  # derivative is identically 0; avoid 0 * x**-1
                return
            self.accumulate(g * e * self.value ** (e - 1.0))

        out._backward_fn = back
        return out

    def sum(self) -> "Tensor":
        out = Tensor(self.value.sum(), parents=(self,))
        out._backward_fn = lambda g: self.accumulate(np.full_like(self.value, float(g)))
        return out

    def mean(self) -> "Tensor":
        n = self.value.size
        out = Tensor(self.value.mean(), parents=(self,))
        out._backward_fn = lambda g: self.accumulate(np.full_like(self.value, float(g) / n))
        return out

    def __repr__(self):
        return f"Tensor(value={self.value!r}, stop_grad={self.stop_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- primitive operations --------------------------------------------------


def linear(weights: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """W.x + b for a rank-1 input, or x.W^T + b row-wise for a rank-2 batch."""
    w, b = weights, bias
    if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
        raise ShapeError(f"linear: weights {w.shape} incompatible with bias {b.shape}")
    if x.ndim == 1:
        if x.shape[0] != w.shape[1]:
            raise ShapeError(f"linear: input {x.shape} incompatible with weights {w.shape}")
        out = Tensor(w.value @ x.value + b.value, parents=(w, b, x))

        def back(g):
            w.accumulate(np.outer(g, x.value))
            b.accumulate(g)
            x.accumulate(w.value.T @ g)

    elif x.ndim == 2:
        if x.shape[1] != w.shape[1]:
            raise ShapeError(f"linear: input {x.shape} incompatible with weights {w.shape}")
        out = Tensor(x.value @ w.value.T + b.value, parents=(w, b, x))

        def back(g):
            w.accumulate(g.T @ x.value)
            b.accumulate(g.sum(axis=0))
            x.accumulate(g @ w.value)

    else:
        raise ShapeError(f"linear: input must be rank 1 or 2, got rank {x.ndim}")
    out._backward_fn = back
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""
    mask = x.value > 0.0
    out = Tensor(np.where(mask, x.value, 0.0), parents=(x,))
    out._backward_fn = lambda g: x.accumulate(g * mask)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Probabilities along the last axis, computed with max-subtraction."""
    v = logits.value
    if v.shape[-1] < 2:
        raise ShapeError(f"softmax: need at least 2 classes, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError("softmax: logits contain NaN/Inf")
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, parents=(logits,))

    def back(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        logits.accumulate(p * (g - dot))

    out._backward_fn = back
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.value), parents=(x,))
    out._backward_fn = lambda g: x.accumulate(g / x.value)
    return out


def clip_min(x: Tensor, lo: float) -> Tensor:
    """max(x, lo) elementwise; clamped entries receive zero gradient."""
    mask = x.value >= lo
    out = Tensor(np.where(mask, x.value, lo), parents=(x,))
    out._backward_fn = lambda g: x.accumulate(g * mask)
    return out


def pick(x: Tensor, index: int) -> Tensor:
    """Scalar x[index] from a rank-1 tensor."""
    if x.ndim != 1:
        raise ShapeError(f"pick: need rank-1 input, got rank {x.ndim}")
    i = int(index)
    if not 0 <= i < x.shape[0]:
        raise IndexError(f"pick: index {i} out of range for length {x.shape[0]}")
    out = Tensor(x.value[i], parents=(x,))

    def back(g):
        buf = np.zeros_like(x.value)
        buf[i] = g
        x.accumulate(buf)

    out._backward_fn = back
    return out


def row(x: Tensor, index: int) -> Tensor:
    """Rank-1 slice x[index, :] of a rank-2 tensor."""
    if x.ndim != 2:
        raise ShapeError(f"row: need rank-2 input, got rank {x.ndim}")
    i = int(index)
    out = Tensor(x.value[i], parents=(x,))

    def back(g):
        buf = np.zeros_like(x.value)
        buf[i] = g
        x.accumulate(buf)

    out._backward_fn = back
    return out


def kl_div(target: Tensor, pred: Tensor) -> Tensor:
    """sum_i target_i * ln(target_i / pred_i) with 0*ln(0/q) = 0.

    Probabilities are floored at PROB_FLOOR inside the logarithms. Gradient
    flows into both arguments unless one carries stop_grad.
    """
    t, q = target.value, pred.value
    if t.shape != q.shape or t.ndim != 1:
        raise ShapeError(f"kl_div: need matching rank-1 inputs, got {t.shape} vs {q.shape}")
    tf = np.maximum(t, PROB_FLOOR)
    qf = np.maximum(q, PROB_FLOOR)
    active = t > 0.0
    val = np.where(active, t * np.log(tf / qf), 0.0).sum()
    out = Tensor(val, parents=(target, pred))

    def back(g):
        target.accumulate(g * np.where(active, np.log(tf / qf) + 1.0, 0.0))
        pred.accumulate(g * np.where(active & (q >= PROB_FLOOR), -t / qf, 0.0))

    out._backward_fn = back
    return out


def stop_gradient(x: Tensor) -> Tensor:
    """Identity on the value; backward() never crosses this node."""
    return Tensor(x.value, parents=(x,), stop_grad=True)


# -- graph traversal --------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if not node.stop_grad:
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into .grad over every reachable node.

    Repeated calls without zero_grad() keep accumulating.
    """
    if loss.ndim != 0:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    loss.accumulate(np.ones(()))
    for node in reversed(_topo_order(loss)):
        if node.stop_grad or node._backward_fn is None or node.grad is None:
            continue
        node._backward_fn(node.grad)


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if eps <= 0:
        raise ValueError("finite_diff_grad: eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        bumped = x.copy()
        bumped[idx] = x[idx] + eps
        hi = f(bumped)
        bumped[idx] = x[idx] - eps
        lo = f(bumped)
        grad[idx] = (hi - lo) / (2.0 * eps)
    return grad
