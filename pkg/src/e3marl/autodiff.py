"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every op called while recording is enabled returns a Tensor that remembers its
inputs and a closure mapping the output gradient to input gradients. Tensors
carry a monotonically increasing creation id, so reverse creation order is a
valid topological order for the backward sweep.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError, ShapeError

EPS_NORM = 1e-12

# differentiable ops, by the name recorded in Tensor.op
OPS = ("add", "sub", "neg", "multiply", "div", "relu", "tanh", "sigmoid", "matmul", "sum",
       "mean", "l2_norm", "l2_norm_rows", "reshape", "concat", "slice", "gather_rows",
       "scatter_add_rows")

_ids = itertools.count()
_recording = [True]


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (used for acting, targets and evaluation)."""
    prev = _recording[0]
    _recording[0] = False
    try:
        yield
    finally:
        _recording[0] = prev


def is_recording() -> bool:
    return _recording[0]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "_id")
    __array_priority__ = 1000  # make ndarray <op> Tensor dispatch to the Tensor side

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __deepcopy__(self, memo):
        # copies must get a fresh creation id; ids key the backward sweep
        new = object.__new__(type(self))
        for cls in type(self).__mro__:
            for slot in getattr(cls, "__slots__", ()):
                if hasattr(self, slot):
                    object.__setattr__(new, slot, getattr(self, slot))
        new.data = self.data.copy()
        new.grad = None if self.grad is None else self.grad.copy()
        new._id = next(_ids)
        memo[id(self)] = new
        return new

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return multiply(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, index):
        return slice_(self, index)


class Parameter(Tensor):
    """Trainable leaf; gradients accumulate into ``grad`` until reset."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True,
                         op="parameter")
        self.name = name


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if _recording[0] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                            _unbroadcast(g, b.shape) if b.requires_grad else None), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                            -_unbroadcast(g, b.shape) if b.requires_grad else None), "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "multiply")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None),
                 "multiply")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at the kink
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a, b) -> Tensor:
    """``a`` of shape (..., k) times ``b`` of shape (k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    # flatten leading axes so numpy hands one 2-D product to BLAS
    a2 = a.data.reshape(-1, a.shape[-1])
    out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, b.shape[1])
        ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
        return ga, (a2.T @ g2 if b.requires_grad else None)

    return _make(out, (a, b), backward, "matmul")


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return multiply(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def l2_norm(a, axis: int = -1, keepdims: bool = False, eps: float = EPS_NORM) -> Tensor:
    """sqrt(sum(x^2) + eps) along ``axis``; finite gradient at the origin."""
    a = as_tensor(a)
    n = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True) + eps)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * a.data / n,)

    return _make(n if keepdims else np.squeeze(n, axis=axis), (a,), backward, "l2_norm")


def l2_norm_rows(a, eps: float = EPS_NORM) -> Tensor:
    return l2_norm(a, axis=-1, eps=eps)


# ---------------------------------------------------------------------------
# structural

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def slice_(a, index) -> Tensor:
    """Basic (non-advanced) indexing; use :func:`gather_rows` for index arrays."""
    a = as_tensor(a)
    out = a.data[index]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[index] = g
        return (ga,)

    return _make(out, (a,), backward, "slice")


def _segment_sum(values: np.ndarray, idx: np.ndarray, num_rows: int) -> np.ndarray:
    """out[idx[k]] += values[k] as a sparse product (much faster than ufunc.at)."""
    k = len(idx)
    m = sparse.csr_matrix((np.ones(k), (idx, np.arange(k))), shape=(num_rows, k))
    flat = values.reshape(k, -1)
    return np.asarray(m @ flat).reshape((num_rows,) + values.shape[1:])


def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {a.shape[0]} rows")

    return _make(a.data[idx], (a,), lambda g: (_segment_sum(g, idx, a.shape[0]),), "gather_rows")


def scatter_add_rows(a, idx, num_rows: int) -> Tensor:
    """out[idx[k]] += a[k]; the adjoint of :func:`gather_rows`."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != a.shape[0]:
        raise ShapeError(f"scatter_add_rows: {idx.shape[0]} indices for {a.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise ShapeError(f"scatter_add_rows: index out of range for {num_rows} rows")
    out = _segment_sum(a.data, idx, num_rows)
    return _make(out, (a,), lambda g: (g[idx],), "scatter_add_rows")


# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf that requires grad."""
    if loss.data.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes, seen, stack = [], {loss._id}, [loss]
    while stack:
        t = stack.pop()
        nodes.append(t)
        for p in t._parents:
            if p.requires_grad and p._id not in seen:
                seen.add(p._id)
                stack.append(p)
    nodes.sort(key=lambda t: t._id, reverse=True)
    grads = {loss._id: np.ones_like(loss.data)}
    for t in nodes:
        g = grads.pop(t._id, None)
        if g is None:
            continue
        if t._backward is None:
            t.grad += g
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if not p.requires_grad:
                continue
            if p._id in grads:
                grads[p._id] = grads[p._id] + pg
            else:
                grads[p._id] = pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def grad_vector(params: Iterable[Tensor]) -> np.ndarray:
    return np.concatenate([p.grad.reshape(-1) for p in params])


# ---------------------------------------------------------------------------
# checkpoints: name -> array, stored as .npz (exact float64 round trip)

def save_parameters(path, params: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, **{k: np.asarray(v, dtype=np.float64) for k, v in params.items()})


def load_parameters(path) -> dict[str, np.ndarray]:
    with np.load(path) as z:
        return {k: z[k].copy() for k in z.files}
