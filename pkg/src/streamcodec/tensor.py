"""Reverse-mode automatic differentiation on numpy arrays.

This is the numerical core of the package: a small tape-free graph engine in
which every op returns a new Tensor holding its forward value and a closure
that routes the output gradient to the op's inputs. Calling backward() on a
scalar walks the recorded graph once, in reverse topological order, so
gradients are deterministic: the same inputs always produce bit-identical
gradients within a process.

Numeric policy, applied uniformly:

* storage is float32 by default (float64 tensors are supported and are what
  gradcheck uses); constants adopt the dtype of the tensor they combine with;
* dot products and reductions accumulate in float64 before rounding back to
  the storage dtype;
* every op output is checked for NaN/Inf and a ContractError is raised on the
  spot, so a poisoned value cannot propagate silently.

Gradient conventions worth knowing: abs has derivative 0 at exactly 0,
straight_through copies the downstream gradient to its input unchanged, and
masked positions of masked_softmax receive exactly zero probability and zero
gradient.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError

_GRAD_ENABLED = True
_FINITE_CHECKS = True

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, metric eval)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    """Override the per-op NaN/Inf guard inside the block."""
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if _FINITE_CHECKS and not np.isfinite(arr).all():
        raise ContractError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "version")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        # ascontiguousarray would silently lift 0-d arrays to shape (1,).
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr
        _check_finite(self.data, "tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None
        # Bumped by in-place parameter updates; lets caches notice staleness.
        self.version = 0

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    # -- graph plumbing ------------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return stop_gradient(self)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable leaf.

        The graph is walked once: an iterative depth-first pass produces a
        topological order, then each node's backward closure runs exactly once
        in reverse. Gradients add into .grad, so call zero_grad between steps.
        """
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar root")
        if not self.requires_grad:
            raise ContractError("backward() on a tensor with no graph")
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean_(self, axis=axis, keepdims=keepdims)


def constant(data, dtype=np.float32) -> Tensor:
    """A leaf tensor that never receives gradients."""
    return Tensor(data, requires_grad=False, dtype=dtype)


def parameter(data, dtype=np.float32) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(data, requires_grad=True, dtype=dtype)


def _make(data: np.ndarray, parents: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], None] | None, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.version = 0
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting.

    Reductions run in float64 regardless of the storage dtype.
    """
    if grad.shape == shape:
        return grad
    dtype = grad.dtype
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)), dtype=np.float64)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True, dtype=np.float64)
    return grad.astype(dtype, copy=False)


def _accum(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(grad, t.data.shape).astype(t.data.dtype, copy=False)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _peer(x, like: Tensor) -> Tensor:
    """Wrap a scalar or array as a constant with the peer tensor's dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=False, dtype=like.data.dtype)


# -- elementwise arithmetic ----------------------------------------------add--


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _peer(b, a)

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _peer(a, b)
    b = _peer(b, a)

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _peer(b, a)
    ad, bd = a.data, b.data

    def bw(g):
        _accum(a, g * bd)
        _accum(b, g * ad)

    return _make(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _peer(a, b)
    b = _peer(b, a)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        _accum(a, g / bd)
        _accum(b, -g * out / bd)

    return _make(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bw, "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bw(g):
        _accum(a, g * out)

    return _make(out, (a,), bw, "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data

    def bw(g):
        _accum(a, g / ad)

    return _make(np.log(ad), (a,), bw, "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * (0.5 / out))

    return _make(out, (a,), bw, "sqrt")


def square(a: Tensor) -> Tensor:
    ad = a.data

    def bw(g):
        _accum(a, g * (2.0 * ad))

    return _make(ad * ad, (a,), bw, "square")


def absolute(a: Tensor) -> Tensor:
    ad = a.data

    def bw(g):
        # sign(0) == 0, so the derivative at exactly 0 is taken to be 0.
        _accum(a, g * np.sign(ad))

    return _make(np.abs(ad), (a,), bw, "abs")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), bw, "tanh")


def gelu(a: Tensor) -> Tensor:
    """Exact gaussian-error-linear unit, 0.5 * x * (1 + erf(x / sqrt(2)))."""
    ad = a.data
    cdf = 0.5 * (1.0 + erf(ad * _INV_SQRT2))
    out = (ad * cdf).astype(ad.dtype, copy=False)

    def bw(g):
        pdf = np.exp(-0.5 * ad * ad) * _INV_SQRT2PI
        _accum(a, g * (cdf + ad * pdf))

    return _make(out, (a,), bw, "gelu")


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    ad = a.data
    pos = ad >= 0

    def bw(g):
        _accum(a, g * np.where(pos, 1.0, slope).astype(ad.dtype))

    return _make(np.where(pos, ad, slope * ad).astype(ad.dtype), (a,), bw, "leaky_relu")


# -- linear algebra -----------------------------------------------------------


def _mm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matmul with float64 accumulation, rounded back to float32 storage."""
    if x.dtype == np.float64 and y.dtype == np.float64:
        return x @ y
    return (x.astype(np.float64) @ y.astype(np.float64)).astype(np.float32)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes.

    Either operand may carry extra leading batch axes; a plain 2-d operand
    broadcasts across them and its gradient is reduced back in float64.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    ad, bd = a.data, b.data

    def bw(g):
        if a.requires_grad:
            ga = _mm(g, _swap(bd))
            _accum(a, ga)
        if b.requires_grad:
            if bd.ndim == 2 and g.ndim > 2:
                # Merge batch axes so the reduction happens inside one gemm.
                k = ad.shape[-1]
                n = g.shape[-1]
                gb = _mm(_swap(ad.reshape(-1, k)[None])[0], g.reshape(-1, n))
            else:
                gb = _unbroadcast(_mm(_swap(ad), g), bd.shape)
            _accum(b, gb)

    return _make(_mm(ad, bd), (a, b), bw, "matmul")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(int(i) for i in np.argsort(axes))

    def bw(g):
        _accum(a, np.ascontiguousarray(np.transpose(g, inv)))

    return _make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), bw, "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape

    def bw(g):
        _accum(a, g.reshape(old))

    return _make(np.ascontiguousarray(a.data.reshape(shape)), (a,), bw, "reshape")


def concat(parts: Iterable[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    rest = [p.data.shape[:axis] + p.data.shape[axis + 1:] if axis >= 0
            else p.data.shape[:axis % p.ndim] + p.data.shape[axis % p.ndim + 1:]
            for p in parts]
    if any(r != rest[0] for r in rest):
        raise ShapeError(f"concat shapes disagree off axis {axis}: "
                         f"{[p.shape for p in parts]}")
    sizes = [p.data.shape[axis] for p in parts]
    edges = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, edges[:-1], edges[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            _accum(p, g[tuple(sl)])

    return _make(np.concatenate([p.data for p in parts], axis=axis),
                 tuple(parts), bw, "concat")


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def bw(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        _accum(a, full)

    return _make(np.ascontiguousarray(a.data[sl]), (a,), bw, "slice")


# -- reductions ----------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    out = ad.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(ad.dtype)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, ad.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, ad.shape).copy())

    return _make(np.asarray(out), (a,), bw, "sum")


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    out = ad.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(ad.dtype)
    count = ad.size if axis is None else ad.shape[axis]

    def bw(g):
        scale = 1.0 / count
        if axis is None:
            _accum(a, np.broadcast_to(g * scale, ad.shape).copy())
            return
        gg = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg * scale, ad.shape).copy())

    return _make(np.asarray(out), (a,), bw, "mean")


# -- structured ops --------------------------------------------------------------


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup table[ids]; backward scatter-adds into the table rows."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ContractError("gather_rows ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ContractError("gather_rows id out of range")

    def bw(g):
        acc = np.zeros(table.data.shape, dtype=np.float64)
        np.add.at(acc, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
        _accum(table, acc.astype(table.data.dtype))

    return _make(np.ascontiguousarray(table.data[ids]), (table,), bw, "gather_rows")


def stop_gradient(a: Tensor) -> Tensor:
    """Forward identity; the graph is cut here and no gradient flows back."""
    return _make(a.data, (), None, "stop_gradient")


def straight_through(cont: Tensor, values: np.ndarray) -> Tensor:
    """Forward returns `values`; backward copies the gradient to `cont` as is."""
    vals = np.ascontiguousarray(np.asarray(values, dtype=cont.data.dtype))
    if vals.shape != cont.data.shape:
        raise ShapeError("straight_through value shape must match the input")

    def bw(g):
        _accum(cont, g)

    return _make(vals, (cont,), bw, "straight_through")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    shift = np.max(a.data, axis=axis, keepdims=True)
    e = exp(sub(a, constant(shift, dtype=a.data.dtype)))
    return div(e, sum_(e, axis=axis, keepdims=True))


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to positions where mask is True.

    Disallowed positions get exactly zero probability and zero gradient. The
    mask is applied before the row max, so disallowed scores never influence
    the result; every row must keep at least one allowed position.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.data.shape)
    if not mask.any(axis=-1).all():
        raise ContractError("masked_softmax row with no allowed positions")
    sd = scores.data
    shifted = np.where(mask, sd, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    tot = e.sum(axis=-1, keepdims=True, dtype=np.float64)
    probs = (e / tot).astype(sd.dtype)

    def bw(g):
        inner = (g * probs).sum(axis=-1, keepdims=True, dtype=np.float64)
        _accum(scores, (probs * (g - inner)).astype(sd.dtype))

    return _make(probs, (scores,), bw, "masked_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    mu = mean_(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean_(square(centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)


# -- signal-shaped ops ------------------------------------------------------------


def reflect_pad(a: Tensor, pad: int) -> Tensor:
    """Reflect-pad the last axis by `pad` on each side (no edge repeat)."""
    n = a.data.shape[-1]
    if pad >= n:
        raise ContractError("reflect_pad needs pad < length")
    idx = np.concatenate([np.arange(pad, 0, -1),
                          np.arange(n),
                          np.arange(n - 2, n - 2 - pad, -1)])

    def bw(g):
        acc = np.zeros(a.data.shape, dtype=np.float64)
        acc += g[..., pad:pad + n]
        if pad:
            acc[..., 1:pad + 1] += g[..., :pad][..., ::-1]
            acc[..., n - pad - 1:n - 1] += g[..., n + pad:][..., ::-1]
        _accum(a, acc.astype(a.data.dtype))

    return _make(np.ascontiguousarray(a.data[..., idx]), (a,), bw, "reflect_pad")


def frame(a: Tensor, size: int, hop: int) -> Tensor:
    """Slice the last axis into overlapping frames: (..., N) -> (..., F, size)."""
    n = a.data.shape[-1]
    if n < size:
        raise ContractError("frame needs length >= frame size")
    count = 1 + (n - size) // hop
    idx = hop * np.arange(count)[:, None] + np.arange(size)[None, :]

    def bw(g):
        acc = np.zeros(a.data.shape, dtype=np.float64)
        for f in range(count):
            acc[..., f * hop:f * hop + size] += g[..., f, :]
        _accum(a, acc.astype(a.data.dtype))

    return _make(np.ascontiguousarray(a.data[..., idx]), (a,), bw, "frame")


def rfft_magnitude(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Magnitude of the real FFT of the last axis, sqrt(re^2 + im^2 + eps).

    The transform runs in float64 and the result is rounded to the storage
    dtype. The backward pass is the exact adjoint of the half-spectrum real
    DFT, evaluated with an inverse FFT.
    """
    size = a.data.shape[-1]
    spec = np.fft.rfft(a.data.astype(np.float64), axis=-1)
    re, im = spec.real, spec.imag
    mag = np.sqrt(re * re + im * im + eps)
    out = mag.astype(a.data.dtype)

    def bw(g):
        g64 = g.astype(np.float64)
        gspec = (g64 * re / mag) + 1j * (g64 * im / mag)
        # Interior bins represent two conjugate frequencies; halving them makes
        # size * irfft the exact adjoint of rfft viewed as a real-linear map.
        if size % 2 == 0:
            gspec[..., 1:-1] *= 0.5
        else:
            gspec[..., 1:] *= 0.5
        dx = size * np.fft.irfft(gspec, n=size, axis=-1)
        _accum(a, dx.astype(a.data.dtype))

    return _make(out, (a,), bw, "rfft_magnitude")
