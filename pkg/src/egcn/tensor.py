"""Dense float64 tensors with a minimal reverse-mode autodiff tape.

Every operation allocates a fresh node; the tape is implicit in the
parent links and is rebuilt for every sample, so there is no graph
reuse and no hidden state between forward passes. All math is IEEE
double precision. Any NaN or Inf aborts the current step immediately
instead of propagating.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericalError(RuntimeError):
    """A NaN or Inf appeared in a forward or backward computation."""


def _check_finite(arr: np.ndarray, op: str) -> None:
    # NaN and Inf both survive a sum, so one cheap reduction screens the
    # whole array; magnitudes here are far too small for the sum itself to
    # overflow spuriously
    if not math.isfinite(arr.sum()):
        raise NumericalError(f"non-finite values produced by '{op}'")


# Gradients accumulate into a per-thread sink rather than onto the tensors
# themselves, so independent samples can run forward+backward concurrently
# against shared (read-only) parameters.
_BACKWARD_STATE = threading.local()


class Tensor:
    """A 0-, 1- or 2-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are at most 2-D, got shape {arr.shape}")
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        _check_finite(g, "backward")
        sink: dict[int, np.ndarray] = _BACKWARD_STATE.sink
        key = id(self)
        if key in sink:
            sink[key] = sink[key] + g
        else:
            sink[key] = np.array(g, dtype=np.float64)

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss; fills .grad on every reachable tensor."""
        order, sink = _run_backward(self)
        for node in order:
            node.grad = sink.get(id(node))

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _run_backward(loss: Tensor) -> tuple[list[Tensor], dict[int, np.ndarray]]:
    if loss.data.shape != ():
        raise ShapeError("backward requires a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    sink: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    _BACKWARD_STATE.sink = sink
    try:
        for node in reversed(order):
            g = sink.get(id(node))
            if g is None or node._backward is None:
                continue
            node._backward(g)
    finally:
        _BACKWARD_STATE.sink = None
    return order, sink


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Per-parameter gradients of a scalar loss, without touching .grad.

    Safe to call from several threads at once over shared parameters.
    """
    _, sink = _run_backward(loss)
    return {name: sink[id(p)] for name, p in params.items() if id(p) in sink}


def tensor(data) -> Tensor:
    """A constant (non-tracked) tensor."""
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


def _node(data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def back(g):
        a._accumulate(g)
        b._accumulate(g)

    return _node(a.data + b.data, "add", (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def back(g):
        a._accumulate(g)
        b._accumulate(-g)

    return _node(a.data - b.data, "sub", (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly (no broadcasting)."""
    _same_shape(a, b, "mul")

    def back(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return _node(a.data * b.data, "mul", (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    def back(g):
        a._accumulate(g * s)

    return _node(a.data * s, "scale", (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def back(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _node(a.data @ b.data, "matmul", (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")

    def back(g):
        a._accumulate(g.T)

    return _node(a.data.T.copy(), "transpose", (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    # exp(-logaddexp(0, -x)) is the overflow-free form of 1/(1+exp(-x))
    out = np.exp(-np.logaddexp(0.0, -a.data))

    def back(g):
        a._accumulate(g * out * (1.0 - out))

    return _node(out, "sigmoid", (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def back(g):
        a._accumulate(g * (1.0 - out * out))

    return _node(out, "tanh", (a,), back)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat of nothing")
    sizes = [p.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def back(g):
        offset = 0
        for p, size in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + size)
            p._accumulate(g[tuple(idx)])
            offset += size

    return _node(data, "concat", tuple(parts), back)


def split(a: Tensor, sizes: list[int], axis: int = 0) -> list[Tensor]:
    """Inverse of concat: cut a into consecutive chunks along axis."""
    if sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover axis of length {a.shape[axis]}")
    outs = []
    offset = 0
    for size in sizes:
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(offset, offset + size)
        sel = tuple(idx)

        def back(g, sel=sel):
            buf = np.zeros_like(a.data)
            buf[sel] = g
            a._accumulate(buf)

        outs.append(_node(a.data[sel].copy(), "split", (a,), back))
        offset += size
    return outs


def gather_rows(a: Tensor, idx) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("gather_rows expects a matrix")
    index = np.asarray(idx, dtype=np.intp)

    def back(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        a._accumulate(buf)

    return _node(a.data[index].copy(), "gather_rows", (a,), back)


def gather(a: Tensor, idx) -> Tensor:
    if a.ndim != 1:
        raise ShapeError("gather expects a vector")
    index = np.asarray(idx, dtype=np.intp)

    def back(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        a._accumulate(buf)

    return _node(a.data[index].copy(), "gather", (a,), back)


def repeat_rows(v: Tensor, n: int) -> Tensor:
    if v.ndim != 1:
        raise ShapeError("repeat_rows expects a vector")

    def back(g):
        v._accumulate(g.sum(axis=0))

    return _node(np.tile(v.data, (n, 1)), "repeat_rows", (v,), back)


def sum_rows(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("sum_rows expects a matrix")
    n = a.shape[0]

    def back(g):
        a._accumulate(np.tile(g, (n, 1)))

    return _node(a.data.sum(axis=0), "sum_rows", (a,), back)


def mean(parts: list[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors."""
    if not parts:
        raise ShapeError("mean of nothing")
    for p in parts[1:]:
        _same_shape(parts[0], p, "mean")
    inv = 1.0 / len(parts)

    def back(g):
        for p in parts:
            p._accumulate(g * inv)

    return _node(sum(p.data for p in parts) * inv, "mean", tuple(parts), back)


def reduce_max(a: Tensor) -> tuple[Tensor, int]:
    """Max over a vector; returns (scalar, argmax). Ties resolve to the first index."""
    if a.ndim != 1 or a.shape[0] == 0:
        raise ShapeError("reduce_max expects a non-empty vector")
    arg = int(np.argmax(a.data))

    def back(g):
        buf = np.zeros_like(a.data)
        buf[arg] = g
        a._accumulate(buf)

    return _node(a.data[arg].copy(), "reduce_max", (a,), back), arg


def stack_scalars(parts: list[Tensor]) -> Tensor:
    for p in parts:
        if p.shape != ():
            raise ShapeError("stack_scalars expects scalars")

    def back(g):
        for i, p in enumerate(parts):
            p._accumulate(g[i])

    return _node(np.array([p.data for p in parts]), "stack_scalars", tuple(parts), back)


def pick(a: Tensor, i: int) -> Tensor:
    if a.ndim != 1:
        raise ShapeError("pick expects a vector")

    def back(g):
        buf = np.zeros_like(a.data)
        buf[i] = g
        a._accumulate(buf)

    return _node(a.data[i].copy(), "pick", (a,), back)


def flatten(a: Tensor) -> Tensor:
    """Row-major flattening to a vector."""
    shape = a.shape

    def back(g):
        a._accumulate(g.reshape(shape))

    return _node(a.data.reshape(-1).copy(), "flatten", (a,), back)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def log_softmax(a: Tensor) -> Tensor:
    if a.ndim != 1:
        raise ShapeError("log_softmax expects a vector")
    shifted = a.data - a.data.max()
    out = shifted - np.log(np.exp(shifted).sum())

    def back(g):
        a._accumulate(g - np.exp(out) * g.sum())

    return _node(out, "log_softmax", (a,), back)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout: kept units scale by 1/(1-rate); identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def back(g):
        a._accumulate(g * mask)

    return _node(a.data * mask, "dropout", (a,), back)


@dataclass
class AffineBlock:
    """A trainable affine map y = W x + b (rows of a matrix input map independently)."""

    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("affine block needs a weight matrix and a bias vector")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"weight rows {self.weight.shape[0]} != bias length {self.bias.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "AffineBlock":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(parameter(w), parameter(np.zeros(out_dim)))


def affine(block: AffineBlock, x: Tensor) -> Tensor:
    """Apply an affine block to a vector, or row-wise to a matrix."""
    w, b = block.weight, block.bias
    if x.ndim == 1:
        if x.shape[0] != block.in_dim:
            raise ShapeError(f"affine: input dim {x.shape[0]} != {block.in_dim}")
        out = w.data @ x.data + b.data

        def back(g):
            w._accumulate(np.outer(g, x.data))
            b._accumulate(g)
            x._accumulate(w.data.T @ g)

        return _node(out, "affine", (w, b, x), back)
    if x.ndim == 2:
        if x.shape[1] != block.in_dim:
            raise ShapeError(f"affine: input dim {x.shape[1]} != {block.in_dim}")
        out = x.data @ w.data.T + b.data

        def back(g):
            w._accumulate(g.T @ x.data)
            b._accumulate(g.sum(axis=0))
            x._accumulate(g @ w.data)

        return _node(out, "affine", (w, b, x), back)
    raise ShapeError("affine expects a vector or matrix input")


class Adam:
    """Bias-corrected Adam over a named parameter set."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """One update; the step counter increments before bias correction."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            _check_finite(p.data, "adam_step")


def clear_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
