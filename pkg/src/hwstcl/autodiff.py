"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its parents and a backward rule on the output
tensor; ``Tensor.backward`` walks the recorded graph in reverse topological
order and accumulates gradients into leaves that require them.

Broadcasting is limited to scalar-with-tensor and equal shapes. Row-wise
bias addition goes through :func:`linear`.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Tensor",
    "SparsePattern",
    "tensor",
    "zeros",
    "ones",
    "no_grad",
    "is_grad_enabled",
    "elementwise",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "relu",
    "sigmoid",
    "tanh",
    "square",
    "sqrt",
    "clamp",
    "matmul",
    "linear",
    "reduce",
    "sum",
    "mean",
    "max",
    "reshape",
    "swapaxes",
    "getitem",
    "concat",
    "take",
    "l2_normalize_rows",
    "sparse_matmul",
    "check_finite",
    "grad",
]

EPS_NORM = 1e-12

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A node in the differentiation graph.

    ``data`` is always a C-contiguous float64 ndarray. ``grad`` is populated
    by :meth:`backward` for leaves with ``requires_grad=True`` and accumulates
    across calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    # -- metadata -----------------------------------------------------
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

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    # -- backward -----------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -----------------------------------------------
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def _topo_order(root: Tensor) -> list[Tensor]:
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


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    # t is a scalar broadcast against a larger operand
    return np.asarray(g.sum()).reshape(t.shape)


def _binary_data(a: Tensor, b: Tensor) -> tuple[np.ndarray, np.ndarray]:
    # size-1 tensors of any rank act as scalars
    ad = a.data.reshape(()) if _is_scalar(a) and a.shape != b.shape else a.data
    bd = b.data.reshape(()) if _is_scalar(b) and a.shape != b.shape else b.data
    return ad, bd


# -- elementwise --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    ad, bd = _binary_data(a, b)
    return _make(ad + bd, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    ad, bd = _binary_data(a, b)
    return _make(ad - bd, (a, b), lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = _binary_data(a, b)

    def backward(g):
        return (
            _unbroadcast(g * bd, a) if a.requires_grad else None,
            _unbroadcast(g * ad, b) if b.requires_grad else None,
        )

    return _make(ad * bd, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    ad, bd = _binary_data(a, b)
    if np.any(bd == 0.0):
        raise ZeroDivisionError("div: divisor contains zeros")
    out = ad / bd

    def backward(g):
        return (
            _unbroadcast(g / bd, a) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, b) if b.requires_grad else None,
        )

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: argument has non-positive entries")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def square(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise ValueError("sqrt: argument has negative entries")
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; gradient is zero where clipping is active."""
    a = _as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


_UNARY = {
    "exp": exp,
    "log": log,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "square": square,
    "sqrt": sqrt,
    "neg": neg,
}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch a pointwise operation by name."""
    if op in _UNARY:
        (x,) = args
        return _UNARY[op](x)
    if op in _BINARY:
        a, b = args
        return _BINARY[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


# -- linear algebra -----------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; leading batch dimensions must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return (
            g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None,
            np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None,
        )

    return _make(ad @ bd, (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` with ``b`` added to every row. ``x`` is (..., in)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.shape[-1] != w.shape[0] or w.ndim != 2:
        raise ValueError(f"linear: shape mismatch {x.shape} @ {w.shape}")
    xd = x.data.reshape(-1, x.shape[-1])
    out = xd @ w.data
    parents: tuple[Tensor, ...] = (x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ValueError(f"linear: bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b.data
        parents = (x, w, b)
    out_shape = x.shape[:-1] + (w.shape[1],)

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = xd.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0) if b.requires_grad else None

    return _make(out.reshape(out_shape), parents, backward)


# -- reductions ---------------------------------------------------------


def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    return tuple(sorted(set(out)))


def reduce(op: str, t, axes=None) -> Tensor:
    t = _as_tensor(t)
    axes_n = _norm_axes(axes, t.ndim)
    for ax in axes_n:
        if t.shape[ax] == 0:
            raise ValueError(f"{op}: empty reduction axis {ax}")
    kept = tuple(1 if i in axes_n else n for i, n in enumerate(t.shape))
    if op == "sum":
        out = t.data.sum(axis=axes_n)
        return _make(out, (t,), lambda g: (np.broadcast_to(g.reshape(kept), t.shape).copy(),))
    if op == "mean":
        count = int(np.prod([t.shape[a] for a in axes_n])) if axes_n else 1
        out = t.data.mean(axis=axes_n)
        return _make(
            out, (t,), lambda g: (np.broadcast_to(g.reshape(kept) / count, t.shape).copy(),)
        )
    if op == "max":
        out = t.data.max(axis=axes_n)
        hit = t.data == out.reshape(kept)
        share = hit / hit.sum(axis=axes_n, keepdims=True)
        return _make(out, (t,), lambda g: (g.reshape(kept) * share,))
    raise ValueError(f"unknown reduction {op!r}")


def sum(t, axis=None) -> Tensor:  # noqa: A001
    return reduce("sum", t, axis)


def mean(t, axis=None) -> Tensor:
    return reduce("mean", t, axis)


def max(t, axis=None) -> Tensor:  # noqa: A001
    return reduce("max", t, axis)


# -- shape manipulation -------------------------------------------------


def reshape(t, shape) -> Tensor:
    t = _as_tensor(t)
    src = t.shape
    return _make(t.data.reshape(shape), (t,), lambda g: (g.reshape(src),))


def swapaxes(t, a1: int, a2: int) -> Tensor:
    t = _as_tensor(t)
    return _make(
        np.ascontiguousarray(np.swapaxes(t.data, a1, a2)),
        (t,),
        lambda g: (np.swapaxes(g, a1, a2),),
    )


def getitem(t, idx) -> Tensor:
    """Basic (slice/integer) indexing."""
    t = _as_tensor(t)
    out = np.ascontiguousarray(t.data[idx])

    def backward(g):
        full = np.zeros_like(t.data)
        full[idx] = g
        return (full,)

    return _make(out, (t,), backward)


def concat(ts: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in ts]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in ts], axis=axis)
    return _make(out, tuple(ts), lambda g: tuple(np.split(g, splits, axis=axis)))


def take(t, index) -> Tensor:
    """Gather rows ``t[index]`` along axis 0 (repeats allowed)."""
    t = _as_tensor(t)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= t.shape[0]):
        raise IndexError("take: index out of range")

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(t.data[index], (t,), backward)


# -- composite ----------------------------------------------------------


def l2_normalize_rows(t, eps: float = EPS_NORM) -> Tensor:
    """Divide each row by ``sqrt(sum(row**2) + eps)``; zero rows stay zero."""
    t = _as_tensor(t)
    x = t.data
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True) + eps)
    out = x / norm

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - out * dot) / norm,)

    return _make(out, (t,), backward)


class SparsePattern:
    """Fixed COO sparsity structure with a cached CSR layout.

    Values are supplied per call so learnable edge weights do not require
    rebuilding indices.
    """

    def __init__(self, rows, cols, shape: tuple[int, int]):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows and cols must be 1-D arrays of equal length")
        n_rows, n_cols = shape
        if rows.size and (
            rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols
        ):
            raise IndexError("sparse index out of range")
        self.rows = rows
        self.cols = cols
        self.shape = (int(n_rows), int(n_cols))
        self._perm = np.lexsort((cols, rows))
        self._indices = cols[self._perm].astype(np.int32)
        self._indptr = np.searchsorted(rows[self._perm], np.arange(n_rows + 1)).astype(np.int32)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def csr(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix(
            (values[self._perm], self._indices, self._indptr), shape=self.shape, copy=False
        )

    def dense(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), values)
        return out


def sparse_matmul(pattern: SparsePattern, values, d) -> Tensor:
    """Product of the sparse matrix ``(pattern, values)`` with dense ``d``.

    Differentiable with respect to both ``values`` and ``d``. Duplicate
    coordinates are summed.
    """
    values, d = _as_tensor(values), _as_tensor(d)
    if values.shape != (pattern.nnz,):
        raise ValueError(f"values shape {values.shape} != ({pattern.nnz},)")
    if d.ndim != 2 or d.shape[0] != pattern.shape[1]:
        raise ValueError(f"sparse_matmul: shape mismatch {pattern.shape} @ {d.shape}")
    mat = pattern.csr(values.data)
    out = np.asarray(mat @ d.data)

    def backward(g):
        gv = None
        if values.requires_grad:
            gv = np.einsum("ij,ij->i", g[pattern.rows], d.data[pattern.cols])
        gd = np.asarray(mat.T @ g) if d.requires_grad else None
        return gv, gd

    return _make(out, (values, d), backward)


def check_finite(t, what: str = "tensor") -> Tensor:
    """Raise ``FloatingPointError`` if ``t`` holds NaN or Inf."""
    t = _as_tensor(t)
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"non-finite values in {what}")
    return t


def grad(loss: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` for ``leaves`` without touching their ``.grad``.

    Unreachable leaves get zeros.
    """
    leaves = list(leaves)
    saved = [leaf.grad for leaf in leaves]
    for leaf in leaves:
        leaf.grad = None
    try:
        loss.backward()
        return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    finally:
        for leaf, g in zip(leaves, saved):
            leaf.grad = g
