"""Dense float tensors with tape-based reverse-mode differentiation.

The model's training loss is a scalar over many parameters, so every
differentiable op records its inputs and a backward closure on a tape
(the implicit graph of ``_parents`` links).  Calling :meth:`Tensor.backward`
on a scalar walks that graph once in reverse topological order and
accumulates gradients into the ``grad`` buffers of leaf tensors.

Tensors hold float32 data by default; float64 is used for gradient
verification.  Ops never change dtype: mixing float32 and float64
operands is a bug and raises.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording (forward-only mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float array plus an optional gradient buffer and tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # Leaf parameters keep a persistent, zero-initialised gradient buffer.
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

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
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    # -- reverse pass ---------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        ``self`` must be a scalar (the loss).
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.data.shape}")
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:  # already reverse-topological
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                # Never mutate in place: backward closures may alias the
                # upstream gradient across several parents.
                grads[id(parent)] = pg if acc is None else acc + pg

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return slice_(self, idx)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse-topological order of the graph below ``root`` (iterative)."""
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
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _check_dtypes(*tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"mixed tensor dtypes {sorted(d.name for d in dtypes)}")


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None  # interior node: grads live in the backward dict
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic -----------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b)
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        return (-g,)

    return _node(-a.data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy leading-dim broadcasting."""
    _check_dtypes(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires tensors of rank >= 2")

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _node(np.matmul(a.data, b.data), (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = a.data**p

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return _node(out, (a,), backward)


# -- shape manipulation ----------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(a.shape),)

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inv),)

    return _node(a.data.transpose(axes), (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    def backward(g):
        return (np.swapaxes(g, ax1, ax2),)

    return _node(np.swapaxes(a.data, ax1, ax2), (a,), backward)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        return (_unbroadcast(g, a.shape),)

    return _node(np.broadcast_to(a.data, shape).copy(), (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [t for t in tensors]
    _check_dtypes(*tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def slice_(a: Tensor, idx) -> Tensor:
    """Basic (view) slicing; fancy indexing is not supported on the tape."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx].copy(), (a,), backward)


# -- reductions -------------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- pointwise nonlinearities -------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _node(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Stable two-sided formulation; exp only ever sees non-positive inputs.
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = out.astype(x.dtype)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), backward)


_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU; smooth everywhere, so finite differences behave."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    cdf = cdf.astype(x.dtype)

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf.astype(x.dtype)),)

    return _node(x * cdf, (a,), backward)


# -- structured ops -------------------------------------------------------------------


def masked_softmax(scores: Tensor, additive_mask: np.ndarray | Tensor) -> Tensor:
    """Row-wise softmax over the last axis after adding a {0, -inf} mask.

    Rows that are entirely masked come back as all zeros: the zero row is
    the sentinel for "no visible positions" and propagates a zero vector
    through downstream weighted sums.
    """
    m = additive_mask.data if isinstance(additive_mask, Tensor) else additive_mask
    if m.shape != scores.shape:
        raise ValueError(f"mask shape {m.shape} != scores shape {scores.shape}")
    masked = scores.data + m
    # Max-shift per row; fully masked rows would produce -inf maxima.
    row_max = np.max(masked, axis=-1, keepdims=True)
    alive = np.isfinite(row_max)
    shift = np.where(alive, row_max, 0.0)
    e = np.exp(masked - shift)
    e[~np.isfinite(masked)] = 0.0
    denom = e.sum(axis=-1, keepdims=True)
    safe = np.where(denom > 0.0, denom, 1.0)
    out = (e / safe).astype(scores.dtype)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (scores,), backward)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _node(out.astype(x.dtype), (a,), backward)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` for a 2-D table; ids may have any shape.

    Backward scatter-adds into the table gradient (np.add.at), so repeated
    ids accumulate correctly and deterministically.
    """
    if table.ndim != 2:
        raise ValueError("gather_rows expects a 2-D table")
    ids = np.asarray(ids)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _node(table.data[ids], (table,), backward)


def take_flat(a: Tensor, idx: np.ndarray) -> Tensor:
    """Element lookup ``a.reshape(-1)[idx]``; backward scatter-adds."""
    idx = np.asarray(idx)
    flat = a.data.reshape(-1)

    def backward(g):
        gf = np.zeros_like(flat)
        np.add.at(gf, idx.reshape(-1), g.reshape(-1))
        return (gf.reshape(a.shape),)

    return _node(flat[idx], (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / np.asarray(1.0 - rate, dtype=a.dtype)
    return mul(a, Tensor(keep))


# -- composite helpers ------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T (+ b)`` with ``w`` stored as (out_features, in_features)."""
    out = matmul(x, swapaxes(w, -1, -2))
    if b is not None:
        out = add(out, b)
    return out


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then affine."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    rstd = power(add(var, eps), -0.5)
    return add(mul(mul(xc, rstd), scale), shift)


def cosine_similarity(a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> float:
    """Plain (non-differentiable) cosine; 0.0 when either vector is ~zero."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < tol or nb < tol:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
