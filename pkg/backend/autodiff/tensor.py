"""
Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` records the primitive that produced it together with one
vector-Jacobian product per parent. ``Tensor.backward`` walks the recorded
graph in reverse topological order and accumulates adjoints.

Every primitive accepts plain numpy inputs as well: when no argument is a
``Tensor`` the primitive returns the plain numpy result, so the same model
code (forward kinematics, projection) runs untraced when no gradient is
needed.
"""

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractViolationError, NonFiniteError

ArrayLike = Union["Tensor", np.ndarray, float, int]


class Tensor:
    """A node of the differentiation graph wrapping a float64 array."""

    # Makes numpy defer to the reflected operators below (ndarray + Tensor).
    __array_ufunc__ = None

    def __init__(
        self,
        value,
        parents: Tuple["Tensor", ...] = (),
        vjps: Tuple[Callable[[np.ndarray], np.ndarray], ...] = (),
        op: str = "leaf",
        requires_grad: bool = False,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad: Optional[np.ndarray] = None

    # --- array protocol -------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    def item(self) -> float:
        return float(self.value)

    # --- operators ------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    # --- backward pass --------------------------------------------------
    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(self)/d(leaf) into ``grad`` of every leaf requiring grad.

        Args:
            seed: Upstream adjoint; defaults to ones (scalar losses).
        """
        if seed is None:
            seed = np.ones_like(self.value)
        order = _topological_order(self)
        adjoints = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if not parent.requires_grad:
                    continue
                pg = vjp(g)
                if not np.all(np.isfinite(pg)):
                    raise NonFiniteError(f"{node.op} (backward)")
                key = id(parent)
                adjoints[key] = pg if key not in adjoints else adjoints[key] + pg


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _traced(*args) -> bool:
    return any(isinstance(a, Tensor) for a in args)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(value: np.ndarray, op: str, parents: Sequence, vjps: Sequence) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(op)
    parents = tuple(_lift(p) for p in parents)
    return Tensor(value, parents=parents, vjps=tuple(vjps), op=op)


# --- elementwise binary ---------------------------------------------------

def add(a: ArrayLike, b: ArrayLike):
    if not _traced(a, b):
        return np.add(a, b)
    av, bv = _value(a), _value(b)
    return _make(
        av + bv, "add", (a, b),
        (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(g, bv.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike):
    if not _traced(a, b):
        return np.subtract(a, b)
    av, bv = _value(a), _value(b)
    return _make(
        av - bv, "sub", (a, b),
        (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(-g, bv.shape)),
    )


def mul(a: ArrayLike, b: ArrayLike):
    if not _traced(a, b):
        return np.multiply(a, b)
    av, bv = _value(a), _value(b)
    return _make(
        av * bv, "mul", (a, b),
        (lambda g: _unbroadcast(g * bv, av.shape), lambda g: _unbroadcast(g * av, bv.shape)),
    )


def div(a: ArrayLike, b: ArrayLike):
    if not _traced(a, b):
        return np.divide(a, b)
    av, bv = _value(a), _value(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _make(
        out, "div", (a, b),
        (
            lambda g: _unbroadcast(g / bv, av.shape),
            lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape),
        ),
    )


def neg(a: ArrayLike):
    if not _traced(a):
        return np.negative(a)
    return _make(-_value(a), "neg", (a,), (lambda g: -g,))


def power(a: ArrayLike, exponent: float):
    """``a ** exponent`` for a constant exponent."""
    if isinstance(exponent, Tensor):
        raise ContractViolationError("power only supports constant exponents")
    if not _traced(a):
        return np.power(a, exponent)
    av = _value(a)
    return _make(
        np.power(av, exponent), "power", (a,),
        (lambda g: g * exponent * np.power(av, exponent - 1),),
    )


def maximum(a: ArrayLike, floor: float):
    """Elementwise ``max(a, floor)`` against a constant floor."""
    if not _traced(a):
        return np.maximum(a, floor)
    av = _value(a)
    mask = (av > floor).astype(np.float64)
    return _make(np.maximum(av, floor), "maximum", (a,), (lambda g: g * mask,))


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike):
    """Select from ``a`` where the constant ``condition`` holds, else ``b``."""
    condition = np.asarray(condition, dtype=bool)
    if not _traced(a, b):
        return np.where(condition, a, b)
    av, bv = _value(a), _value(b)
    return _make(
        np.where(condition, av, bv), "where", (a, b),
        (
            lambda g: _unbroadcast(np.where(condition, g, 0.0), av.shape),
            lambda g: _unbroadcast(np.where(condition, 0.0, g), bv.shape),
        ),
    )


# --- elementwise unary ----------------------------------------------------

def sin(a: ArrayLike):
    if not _traced(a):
        return np.sin(a)
    av = _value(a)
    return _make(np.sin(av), "sin", (a,), (lambda g: g * np.cos(av),))


def cos(a: ArrayLike):
    if not _traced(a):
        return np.cos(a)
    av = _value(a)
    return _make(np.cos(av), "cos", (a,), (lambda g: -g * np.sin(av),))


def tanh(a: ArrayLike):
    if not _traced(a):
        return np.tanh(a)
    out = np.tanh(_value(a))
    return _make(out, "tanh", (a,), (lambda g: g * (1.0 - out * out),))


def exp(a: ArrayLike):
    if not _traced(a):
        return np.exp(a)
    with np.errstate(over="ignore"):
        out = np.exp(_value(a))
    return _make(out, "exp", (a,), (lambda g: g * out,))


def log(a: ArrayLike):
    if not _traced(a):
        return np.log(a)
    av = _value(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _make(out, "log", (a,), (lambda g: g / av,))


def sqrt(a: ArrayLike):
    if not _traced(a):
        return np.sqrt(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(_value(a))
    return _make(out, "sqrt", (a,), (lambda g: g * 0.5 / out,))


def sigmoid(a: ArrayLike):
    if not _traced(a):
        return _np_sigmoid(np.asarray(a, dtype=np.float64))
    out = _np_sigmoid(_value(a))
    return _make(out, "sigmoid", (a,), (lambda g: g * out * (1.0 - out),))


def _np_sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so neither branch overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- reductions and shape ops ---------------------------------------------

def tsum(a: ArrayLike, axis=None, keepdims: bool = False):
    if not _traced(a):
        return np.sum(a, axis=axis, keepdims=keepdims)
    av = _value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _make(out, "sum", (a,), (vjp,))


def mean(a: ArrayLike, axis=None, keepdims: bool = False):
    av = _value(a)
    count = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) / float(count)


def reshape(a: ArrayLike, shape):
    if not _traced(a):
        return np.reshape(a, shape)
    av = _value(a)
    return _make(av.reshape(shape), "reshape", (a,), (lambda g: g.reshape(av.shape),))


def transpose(a: ArrayLike, axes=None):
    if not _traced(a):
        return np.transpose(a, axes)
    av = _value(a)
    inverse = None if axes is None else np.argsort(axes)
    return _make(
        np.transpose(av, axes), "transpose", (a,),
        (lambda g: np.transpose(g, inverse),),
    )


def swapaxes(a: ArrayLike, axis1: int, axis2: int):
    if not _traced(a):
        return np.swapaxes(a, axis1, axis2)
    return _make(
        np.swapaxes(_value(a), axis1, axis2), "swapaxes", (a,),
        (lambda g: np.swapaxes(g, axis1, axis2),),
    )


def getitem(a: ArrayLike, index):
    if not _traced(a):
        return np.asarray(a)[index]
    av = _value(a)
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)

    def vjp(g):
        full = np.zeros_like(av)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return full

    return _make(av[index], "getitem", (a,), (vjp,))


def stack(items: Sequence[ArrayLike], axis: int = 0):
    if not _traced(*items):
        return np.stack([np.asarray(i, dtype=np.float64) for i in items], axis=axis)
    values = [_value(i) for i in items]
    out = np.stack(values, axis=axis)
    vjps = [
        (lambda g, k=k: np.take(g, k, axis=axis))
        for k in range(len(values))
    ]
    return _make(out, "stack", items, vjps)


def concatenate(items: Sequence[ArrayLike], axis: int = 0):
    if not _traced(*items):
        return np.concatenate([np.asarray(i, dtype=np.float64) for i in items], axis=axis)
    values = [_value(i) for i in items]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])
    vjps = []
    for k in range(len(values)):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(bounds[k], bounds[k + 1])
        vjps.append(lambda g, sl=tuple(sl): g[sl])
    return _make(out, "concatenate", items, vjps)


# --- linear algebra -------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike):
    """Batched matrix product; both operands must be at least 2-D."""
    if not _traced(a, b):
        return np.matmul(a, b)
    av, bv = _value(a), _value(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ContractViolationError(
            "matmul operands must be at least 2-D", shapes=[av.shape, bv.shape]
        )
    return _make(
        np.matmul(av, bv), "matmul", (a, b),
        (
            lambda g: _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape),
            lambda g: _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape),
        ),
    )


def value_of(x: ArrayLike) -> np.ndarray:
    """Plain numpy value of a traced or untraced quantity."""
    return _value(x)


PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "power": power,
    "maximum": maximum, "where": where, "sin": sin, "cos": cos, "tanh": tanh,
    "exp": exp, "log": log, "sqrt": sqrt, "sigmoid": sigmoid, "sum": tsum,
    "mean": mean, "reshape": reshape, "transpose": transpose, "swapaxes": swapaxes,
    "getitem": getitem, "stack": stack, "concatenate": concatenate, "matmul": matmul,
}
