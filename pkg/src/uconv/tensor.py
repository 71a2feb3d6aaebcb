"""Dense float64 tensors with a dynamic reverse-mode tape.

Every op builds its output eagerly and, when any input requires a gradient,
records a closure mapping the output cotangent to one cotangent per parent.
There is no broadcasting: operands of binary ops must have equal shapes.
The few places that need a row-vector bias or a scalar multiplier use the
dedicated ``bias_add`` and ``scale`` ops.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Tensor",
    "DimensionError",
    "ContractError",
    "tensor",
    "no_grad",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_scalar",
    "bias_add",
    "sum",
    "mean",
    "concat",
    "stack",
    "slice",
    "take",
    "reshape",
    "transpose",
    "abs",
    "exp",
    "log",
    "relu",
    "tanh",
    "sigmoid",
    "gelu",
    "elu",
    "square",
    "window_matmul",
    "cross_entropy_logits",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording on the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, other)
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, -other)
        return sub(self, other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("tensor division only supports python scalars")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice(self, key)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    # -- autodiff ----------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _toposort(self)
        cotangents: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = cotangents.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in cotangents:
                    cotangents[key] = cotangents[key] + pg
                else:
                    cotangents[key] = pg


def _toposort(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(data, requires_grad: bool = False) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- linear algebra ------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), backward, "matmul")


def window_matmul(x, weights, rows: np.ndarray, cols: np.ndarray, n_rows: int) -> Tensor:
    """Contract ``x`` against a sparse matrix whose nonzeros are ``weights``.

    Computes ``x @ A.T`` where ``A[rows[m], cols[m]] = weights[m]`` has shape
    ``(n_rows, x.shape[1])``. (row, col) pairs must be unique. This is the
    "convolve" step of a continuous convolution: rows index outputs, columns
    index inputs, and weights are kernel samples.
    """
    x, weights = _wrap(x), _wrap(weights)
    if x.ndim != 2:
        raise DimensionError(f"window_matmul: x must be 2-D, got {x.shape}")
    w = weights.data.reshape(-1)
    if w.shape[0] != len(rows) or len(rows) != len(cols):
        raise DimensionError(
            f"window_matmul: {w.shape[0]} weights for {len(rows)} rows / {len(cols)} cols"
        )
    n_cols = x.shape[1]
    A = sp.csr_matrix((w, (rows, cols)), shape=(n_rows, n_cols))
    xd = x.data
    wshape = weights.shape

    def backward(g):
        gx = np.asarray(A.T @ g.T).T if x.requires_grad else None
        gw = None
        if weights.requires_grad:
            gw = np.einsum("bm,bm->m", g[:, rows], xd[:, cols]).reshape(wshape)
        return gx, gw

    out = np.asarray(A @ xd.T).T
    return _make(np.ascontiguousarray(out), (x, weights), backward, "window_matmul")


# -- elementwise arithmetic ------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, s) -> Tensor:
    """Multiply by a python scalar or a 0-d / single-element tensor."""
    a = _wrap(a)
    if isinstance(s, Tensor):
        if s.size != 1:
            raise DimensionError(f"scale: multiplier must be a scalar, got {s.shape}")
        ad, sv, sshape = a.data, s.data.reshape(()), s.shape

        def backward(g):
            return g * sv, np.array(np.sum(g * ad)).reshape(sshape)

        return _make(ad * sv, (a, s), backward, "scale")
    c = float(s)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a, c: float) -> Tensor:
    a = _wrap(a)
    return _make(a.data + float(c), (a,), lambda g: (g,), "add_scalar")


def bias_add(x, b) -> Tensor:
    """Add a vector of length ``x.shape[-1]`` along the last axis."""
    x, b = _wrap(x), _wrap(b)
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias_add: bias {b.shape} does not match {x.shape}")
    axes = tuple(range(x.ndim - 1))
    return _make(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)), "bias_add")


# -- reductions ---------------------------------------------------------------
def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = _wrap(a)
    shape = a.shape
    if axis is None:
        return _make(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, g),), "sum")

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), backward, "sum")


def mean(a, axis=None) -> Tensor:
    a = _wrap(a)
    if a.size == 0:
        raise ContractError("mean of an empty tensor")
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


# -- structural ---------------------------------------------------------------
def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ContractError("concat of nothing")
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, backward, "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in ts]
    return concat(expanded, axis=axis)


def slice(a, key) -> Tensor:  # noqa: A001
    """Basic (non-fancy) indexing: ints, slices and ellipsis."""
    a = _wrap(a)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[key] = g
        return (out,)

    return _make(np.array(a.data[key]), (a,), backward, "slice")


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in the backward."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, (np.s_[:],) * (axis % len(shape)) + (idx,), g)
        return (out,)

    return _make(np.take(a.data, idx, axis=axis), (a,), backward, "take")


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _make(data, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(
        np.ascontiguousarray(np.transpose(a.data, axes)),
        (a,),
        lambda g: (np.transpose(g, inv),),
        "transpose",
    )


# -- pointwise nonlinearities -----------------------------------------------------
def abs(a) -> Tensor:  # noqa: A001
    a = _wrap(a)
    sgn = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sgn,), "abs")


def square(a) -> Tensor:
    a = _wrap(a)
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _wrap(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_K = 0.044715


def gelu(a) -> Tensor:
    """tanh-approximate GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    a = _wrap(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_K * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make(out, (a,), backward, "gelu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = _wrap(a)
    x = a.data
    neg_part = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg_part)
    dx = np.where(x > 0, 1.0, neg_part + alpha)
    return _make(out, (a,), lambda g: (g * dx,), "elu")


def cross_entropy_logits(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of ``logits`` (B x K) against integer labels."""
    logits = _wrap(logits)
    y = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    n = logits.shape[0]
    if n == 0:
        raise ContractError("cross_entropy on an empty batch")
    if y.shape != (n,):
        raise DimensionError(f"cross_entropy: {y.shape} labels for {n} rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), y]))

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), y] -= 1.0
        return (p * (g / n),)

    return _make(np.array(loss), (logits,), backward, "cross_entropy")
