"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation builds its output eagerly and, when any input requires a
gradient, attaches a closure mapping the output gradient to input gradients.
``backward`` orders the reachable records topologically and walks them in
reverse, summing contributions for tensors consumed more than once.

Shapes are explicit: elementwise operations require identical shapes, with
the single exception of scalar (0-d or Python number) operands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

Number = Union[int, float]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class GradientError(RuntimeError):
    """Raised when a backward pass is requested on an invalid graph."""


class Tensor:
    """An n-dimensional float64 array with an attached gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = ""):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Optional[BackwardFn] = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def node_id(self) -> int:
        return id(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a graph-free view sharing the same values."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op or 'leaf'!r})"

    # operator sugar -------------------------------------------------------
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


TensorLike = Union[Tensor, Number, np.ndarray]


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    """Leaf tensor that requires a gradient."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(data: np.ndarray, parents: Sequence[Tensor], fn: BackwardFn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=fn, op=op)
    return Tensor(data, op=op)


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only scalar broadcasting is allowed, so the reduction is all-or-nothing
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# elementwise arithmetic ---------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)

    def fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _make(a.data + b.data, (a, b), fn, "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)

    def fn(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _make(a.data - b.data, (a, b), fn, "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)

    def fn(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), fn, "mul")


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n row vector ``b`` to every row of an (m, n) matrix."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"bias_add: incompatible shapes {x.shape} and {b.shape}")

    def fn(g):
        return g, g.sum(axis=0)

    return _make(x.data + b.data, (x, b), fn, "bias_add")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def fn(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), fn, "matmul")


# nonlinearities -----------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def fn(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0.0), (x,), fn, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)

    def fn(g):
        return (g * s * (1.0 - s),)

    return _make(s, (x,), fn, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)

    def fn(g):
        return (g * (1.0 - t * t),)

    return _make(t, (x,), fn, "tanh")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), evaluated as logaddexp(0, x) so it never overflows."""
    x = as_tensor(x)

    def fn(g):
        return (g * _sigmoid(x.data),)

    return _make(np.logaddexp(0.0, x.data), (x,), fn, "softplus")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def fn(g):
        return (g / x.data,)

    return _make(np.log(x.data), (x,), fn, "log")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)

    def fn(g):
        return (g * e,)

    return _make(e, (x,), fn, "exp")


# reductions and structure -------------------------------------------------

def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), fn, "sum")


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]

    def fn(g):
        if axis is None:
            return (np.full(x.shape, float(g) / n),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape) / n,)

    return _make(np.asarray(x.data.mean(axis=axis)), (x,), fn, "mean")


def logsumexp(x: Tensor, axis: int = 1) -> Tensor:
    """Row-wise log-sum-exp with max shifting."""
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = (np.log(total) + m).squeeze(axis)
    soft = shifted / total

    def fn(g):
        return (np.expand_dims(g, axis) * soft,)

    return _make(out, (x,), fn, "logsumexp")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        other = [d for i, d in enumerate(t.shape) if i != axis % ndim]
        first = [d for i, d in enumerate(tensors[0].shape) if i != axis % ndim]
        if t.data.ndim != ndim or other != first:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, fn, "concat")


def slice(x: Tensor, start: int, stop: int, axis: int = 1) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice: range [{start}, {stop}) invalid for shape {x.shape} on axis {axis}")
    index = [np.s_[:]] * x.data.ndim
    index[axis] = np.s_[start:stop]
    index = tuple(index)

    def fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(x.data[index].copy(), (x,), fn, "slice")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")

    def fn(g):
        return (g.reshape(x.shape),)

    return _make(x.data.reshape(shape), (x,), fn, "reshape")


def one_hot(labels, num_classes: int) -> Tensor:
    """Constant (n, num_classes) indicator matrix for integer labels."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"one_hot: labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"one_hot: labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels.astype(np.int64)] = 1.0
    return Tensor(out, op="one_hot")


# backward -----------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor.

    Raises:
        GradientError: if ``loss`` is not a single-element tensor or does not
            require a gradient.
    """
    if loss.data.size != 1:
        raise GradientError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("backward: loss does not depend on any tensor requiring grad")
    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else np.array(pg, dtype=np.float64)
    for node in order:
        g = grads.get(id(node), np.zeros_like(node.data))
        node.grad = g.copy() if node.grad is None else node.grad + g


# finite-difference checking -----------------------------------------------

@dataclass
class GradCheckReport:
    """Per-coordinate comparison of analytic and central-difference gradients."""

    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    nonsmooth: np.ndarray
    tol: float
    max_rel_error: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        smooth = ~self.nonsmooth
        self.max_rel_error = float(self.rel_error[smooth].max()) if smooth.any() else 0.0
        self.passed = self.max_rel_error <= self.tol


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from dominating."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(f: Callable[[Tensor], Tensor], point, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare ``backward`` against central differences at ``point``.

    A coordinate whose one-sided difference quotients disagree by more than
    ``sqrt(h)`` (relative) is treated as a kink and excluded from pass/fail.
    """
    x0 = np.array(point, dtype=np.float64)
    x = Tensor(x0.copy(), requires_grad=True)
    out = f(x)
    backward(out)
    analytic = x.grad.copy()

    def value(arr):
        return Tensor(f(Tensor(arr)).data).item()

    f0 = value(x0)
    numeric = np.zeros_like(x0)
    nonsmooth = np.zeros(x0.shape, dtype=bool)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += h
        minus[i] -= h
        fp, fm = value(plus.reshape(x0.shape)), value(minus.reshape(x0.shape))
        numeric.flat[i] = (fp - fm) / (2 * h)
        right, left = (fp - f0) / h, (f0 - fm) / h
        nonsmooth.flat[i] = abs(right - left) > np.sqrt(h) * max(1.0, abs(numeric.flat[i]))
    return GradCheckReport(analytic, numeric, relative_error(analytic, numeric), nonsmooth, tol)
