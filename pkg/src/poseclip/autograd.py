"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a C-contiguous numpy array and optionally records the
operation that produced it.  Calling ``backward()`` on a scalar result
walks the recorded graph in reverse topological order and accumulates
gradients into every tensor created with ``requires_grad=True``.

The operation set is deliberately small: matrix products, elementwise
arithmetic, tanh/exp, row softmax, row L2-normalization, and a fused
mean cross-entropy.  Everything the encoders need (patch projection,
token embedding lookup, masked mean-pooling) is expressed as a matmul
against a constant matrix, which keeps the engine tiny and easy to
verify against finite differences.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError

NORM_EPS = 1e-12


class Tensor:
    """Immutable dense array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_needs_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        self._init_from(arr, requires_grad, (), None)

    @classmethod
    def _from_op(cls, arr: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        # np.ascontiguousarray would promote 0-d results to 1-d; keep scalars 0-d.
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        out = cls.__new__(cls)
        out._init_from(arr, False, parents, backward)
        return out

    def _init_from(self, arr, requires_grad, parents, backward):
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (found NaN or Inf)")
        arr.flags.writeable = False
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(p for p in parents if p._needs_grad)
        self._needs_grad = requires_grad or bool(self._parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a 1-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        Only defined for scalar (1-element) tensors.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-D matrix product with gradient support."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul requires 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(g @ b.data.T)
        if b._needs_grad:
            b._accumulate(a.data.T @ g)

    return Tensor._from_op(a.data @ b.data, (a, b), backward)


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; also accepts a scalar or a row bias for a 2-D left operand."""
    a, b = as_tensor(a), as_tensor(b)
    row_bias = a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]
    if not (a.shape == b.shape or _is_scalar(b) or _is_scalar(a) or row_bias):
        raise ShapeError(f"add shapes incompatible: {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(g if a.shape == g.shape else np.sum(g).reshape(a.shape))
        if b._needs_grad:
            if b.shape == g.shape:
                b._accumulate(g)
            elif row_bias:
                b._accumulate(np.sum(g, axis=0))
            else:
                b._accumulate(np.sum(g).reshape(b.shape))

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; either operand may be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if not (a.shape == b.shape or _is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"mul shapes incompatible: {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            ga = g * b.data
            a._accumulate(ga if a.shape == ga.shape else np.sum(ga).reshape(a.shape))
        if b._needs_grad:
            gb = g * a.data
            b._accumulate(gb if b.shape == gb.shape else np.sum(gb).reshape(b.shape))

    return Tensor._from_op(a.data * b.data, (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._from_op(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(g * out_data)

    return Tensor._from_op(out_data, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    a = as_tensor(a)

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(np.full_like(a.data, float(g.reshape(()))))

    return Tensor._from_op(np.asarray(np.sum(a.data)), (a,), backward)


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose requires a 2-D tensor, got {a.shape}")

    def backward(g: np.ndarray) -> None:
        if a._needs_grad:
            a._accumulate(g.T)

    return Tensor._from_op(a.data.T, (a,), backward)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, computed with max-subtraction for stability."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows requires a 2-D tensor, got {x.shape}")
    p = np.exp(_log_softmax(x.data))

    def backward(g: np.ndarray) -> None:
        if x._needs_grad:
            # d softmax: p * (g - <g, p>) per row
            inner = np.sum(g * p, axis=1, keepdims=True)
            x._accumulate(p * (g - inner))

    return Tensor._from_op(p, (x,), backward)


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm below NORM_EPS pass through /NORM_EPS."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"l2_normalize_rows requires a 2-D tensor, got {x.shape}")
    norms = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    denom = np.maximum(norms, NORM_EPS)
    y = x.data / denom

    def backward(g: np.ndarray) -> None:
        if not x._needs_grad:
            return
        # Where the norm is above the floor: (g - y <g,y>) / ||x||.
        # Below the floor the map is x/eps, a plain scaling.
        live = norms >= NORM_EPS
        inner = np.sum(g * y, axis=1, keepdims=True)
        grad = np.where(live, (g - y * inner) / denom, g / denom)
        x._accumulate(grad)

    return Tensor._from_op(y, (x,), backward)


def cross_entropy_mean(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean of -log softmax(row)[target] over rows."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_mean requires 2-D logits, got {logits.shape}")
    n, c = logits.shape
    idx = np.asarray(list(targets), dtype=np.int64)
    if idx.shape != (n,):
        raise ShapeError(f"expected {n} targets, got {idx.shape}")
    if np.any(idx < 0) or np.any(idx >= c):
        bad = int(idx[(idx < 0) | (idx >= c)][0])
        raise IndexError(f"target index {bad} out of range for {c} classes")
    log_p = _log_softmax(logits.data)
    loss = -np.mean(log_p[np.arange(n), idx])

    def backward(g: np.ndarray) -> None:
        if logits._needs_grad:
            p = np.exp(log_p)
            p[np.arange(n), idx] -= 1.0
            logits._accumulate(p * (float(g.reshape(())) / n))

    return Tensor._from_op(np.asarray(loss), (logits,), backward)
