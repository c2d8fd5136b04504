"""Reverse-mode automatic differentiation over dense numpy arrays.

A `Tape` records primitive operations in creation order (which is a valid
topological order for a define-by-run graph); `backward` walks the record in
reverse exactly once, accumulating adjoints into a transient map and flushing
them into the `.grad` of leaf tensors. Clearing the tape releases all cached
intermediates, so a training loop that reuses one tape does not grow memory
across iterations.

Only float32/float64 dense tensors are supported. Broadcasting follows numpy
rules; backward sums gradients over broadcast axes.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested primitive."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of the primitive."""


class GraphError(RuntimeError):
    """The computation graph cannot support the requested traversal."""


class Node:
    __slots__ = ("outs", "inputs", "fn")

    def __init__(self, outs, inputs, fn):
        self.outs = outs
        self.inputs = inputs
        self.fn = fn


class Tape:
    """Ordered record of primitive ops; single-threaded, one per train step."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def clear(self):
        """Release every recorded node and its cached intermediates."""
        self._nodes.clear()

    def backward(self, loss: "Tensor"):
        if loss.data.size != 1:
            raise GraphError(f"backward expects a scalar loss, got shape {loss.shape}")
        adjoint = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            gs = [adjoint.pop(id(o), None) for o in node.outs]
            if all(g is None for g in gs):
                continue
            grads = node.fn(*gs)
            for inp, gi in zip(node.inputs, grads):
                if gi is None:
                    continue
                if inp._node is not None:
                    key = id(inp)
                    acc = adjoint.get(key)
                    adjoint[key] = gi if acc is None else acc + gi
                elif inp.requires_grad:
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += gi


_TAPE_STACK: list[Tape | None] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_grad:
    """Context manager suspending tape recording."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class Tensor:
    """Dense n-dimensional value with an optional gradient-tracking handle."""

    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, dtype=None, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._node = None

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._node = None
        return t

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        if self._node is None:
            raise GraphError("tensor is not attached to a tape")
        tape = active_tape()
        if tape is None:
            raise GraphError("backward requires an active tape")
        tape.backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, grad={self.requires_grad})"

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def tensor(data, dtype=None, requires_grad=False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def _tracked(t: Tensor) -> bool:
    return t._node is not None or t.requires_grad


def _bare(data: np.ndarray) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out._node = None
    return out


def _emit(data: np.ndarray, inputs, fn) -> Tensor:
    """Wrap `data`; record a node when a tape is active and any input is live."""
    out = _bare(data)
    tape = active_tape()
    if tape is not None and any(_tracked(t) for t in inputs):
        node = Node((out,), inputs, fn)
        out._node = node
        tape._nodes.append(node)
    return out


def _emit_multi(datas, inputs, fn):
    """Multi-output variant of _emit; fn receives one adjoint per output."""
    outs = tuple(_bare(d) for d in datas)
    tape = active_tape()
    if tape is not None and any(_tracked(t) for t in inputs):
        node = Node(outs, inputs, fn)
        for o in outs:
            o._node = node
        tape._nodes.append(node)
    return outs


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic primitives ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _emit(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    ad, bd = a.data, b.data

    def bwd(g):
        ga = g / bd
        gb = -g * ad / (bd * bd)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit(out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _emit(out, (a, b), bwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b in one node; the workhorse of every MLP layer."""
    if x.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: incompatible shapes {x.shape} x {w.shape}")
    out = x.data @ w.data
    out += b.data
    xd, wd = x.data, w.data

    def bwd(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _emit(out, (x, w, b), bwd)


# -- elementwise nonlinearities ----------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive input")
    out = np.log(a.data)
    ad = a.data
    return _emit(out, (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _emit(out, (a,), lambda g: (g * (0.5 / np.maximum(out, 1e-12)),))


def sin(a: Tensor) -> Tensor:
    out = np.sin(a.data)
    ad = a.data
    return _emit(out, (a,), lambda g: (g * np.cos(ad),))


def cos(a: Tensor) -> Tensor:
    out = np.cos(a.data)
    ad = a.data
    return _emit(out, (a,), lambda g: (-g * np.sin(ad),))


def absolute(a: Tensor) -> Tensor:
    out = np.abs(a.data)
    ad = a.data
    return _emit(out, (a,), lambda g: (g * np.sign(ad),))


def square(a: Tensor) -> Tensor:
    out = a.data * a.data
    ad = a.data
    return _emit(out, (a,), lambda g: (g * (2.0 * ad),))


def max0(a: Tensor) -> Tensor:
    """relu; zero gradient on the clamped side."""
    out = np.maximum(a.data, 0.0)
    mask = a.data > 0.0

    def bwd(g):
        return (g * mask,)

    return _emit(out, (a,), bwd)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: branch-free, avoids subnormal exp() outputs that trigger
    # the slow fp-assist path on large arrays
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _softplus_raw(x: np.ndarray, beta: float) -> np.ndarray:
    # exp argument clamped away from the subnormal range; exp(-30) ~ 1e-13
    # is far below float32 resolution of log1p(e)/beta + relu(x)
    e = np.exp(np.maximum(-np.abs(beta * x), -30.0))
    return (np.log1p(e) / beta + np.maximum(x, 0.0)).astype(x.dtype, copy=False)


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return _emit(out, (a,), lambda g: (g * (out * (1.0 - out)),))


def softplus(a: Tensor, beta: float = 1.0) -> Tensor:
    out = _softplus_raw(a.data, beta)
    sig = _stable_sigmoid(beta * a.data)
    return _emit(out, (a,), lambda g: (g * sig,))


def softplus_and_sigmoid(a: Tensor, beta: float = 1.0):
    """(softplus_beta(x), sigmoid(beta x)) sharing the elementwise pass.

    Both outputs live on the tape: the sigmoid output is the activation's
    first derivative and is consumed by forward-mode tangent chains, so its
    own backward (the second derivative path) must stay differentiable.
    """
    sp = _softplus_raw(a.data, beta)
    sig = _stable_sigmoid(beta * a.data)

    sp_t = _emit(sp, (a,), lambda g: (g * sig,))
    sig_t = _emit(sig, (a,), lambda g: (g * (beta * sig * (1.0 - sig)),))
    return sp_t, sig_t


def clamp(a: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi

    def bwd(g):
        return (g * inside,)

    return _emit(out, (a,), bwd)


# -- reductions & shape ops ---------------------------------------------------


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).astype(a.dtype, copy=True),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).astype(a.dtype, copy=True),)

    return _emit(np.asarray(out), (a,), bwd)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    n = a.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            gg = np.broadcast_to(g, shape)
        else:
            gg = np.broadcast_to(g if keepdims else np.expand_dims(g, axis), shape)
        return ((gg / n).astype(a.dtype, copy=False),)

    return _emit(np.asarray(out), (a,), bwd)


def cumsum(a: Tensor, axis: int) -> Tensor:
    out = np.cumsum(a.data, axis=axis)

    def bwd(g):
        rev = np.flip(g, axis=axis)
        return (np.flip(np.cumsum(rev, axis=axis), axis=axis),)

    return _emit(out, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    orig = a.shape
    return _emit(out, (a,), lambda g: (g.reshape(orig),))


def concat(tensors, axis: int = 0) -> Tensor:
    arrs = [t.data for t in tensors]
    out = np.concatenate(arrs, axis=axis)
    sizes = [arr.shape[axis] for arr in arrs]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _emit(out, tuple(tensors), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = np.ascontiguousarray(a.data[idx])
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _emit(out, (a,), bwd)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    out = a.data[index]
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _emit(out, (a,), bwd)


def tile_rows(a: Tensor, k: int) -> Tensor:
    """Stack k copies of `a` along axis 0; backward sums the copies."""
    out = np.tile(a.data, (k,) + (1,) * (a.data.ndim - 1))
    n = a.shape[0]

    def bwd(g):
        return (g.reshape((k, n) + g.shape[1:]).sum(axis=0),)

    return _emit(out, (a,), bwd)


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose2d expects a 2-d tensor")
    out = np.ascontiguousarray(a.data.T)
    return _emit(out, (a,), lambda g: (np.ascontiguousarray(g.T),))


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))
    return _emit(out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


# -- fused forward-mode layers -------------------------------------------------
#
# These carry an MLP activation together with a stack of k directional
# tangents through one layer as a single tape node. Functionally identical to
# composing affine/softplus/mul, but with far fewer temporaries: the tangent
# stack is the dominant memory traffic of the SDF gradient path.


def affine_softplus_jvp(h: Tensor, th: Tensor, w: Tensor, b: Tensor, beta: float):
    """One hidden layer of (value, tangent-stack) propagation.

    h: (N,d); th: (k,N,d); returns (softplus_beta(h@w+b) (N,e), tangents (k,N,e)).
    """
    hd, thd, wd = h.data, th.data, w.data
    y = hd @ wd
    y += b.data
    sig = _stable_sigmoid(beta * y)
    out = _softplus_raw(y, beta)
    ty = thd @ wd
    tout = sig[None, :, :] * ty

    def bwd(g, gt):
        dy = None
        dth = None
        gw_t = None
        if gt is not None:
            dty = sig[None, :, :] * gt
            k, n, e = dty.shape
            dty2 = dty.reshape(k * n, e)
            dth = (dty2 @ wd.T).reshape(thd.shape)
            gw_t = thd.reshape(k * n, -1).T @ dty2
            dsig = np.einsum("kne,kne->ne", ty, gt)
            dy = (beta * sig * (1.0 - sig)) * dsig
        if g is not None:
            gy = g * sig
            dy = gy if dy is None else dy + gy
        dh = dy @ wd.T
        gw = hd.T @ dy
        if gw_t is not None:
            gw += gw_t
        return dh, dth, gw, dy.sum(axis=0)

    return _emit_multi((out, tout), (h, th, w, b), bwd)


def affine_jvp(h: Tensor, th: Tensor, w: Tensor, b: Tensor):
    """Linear output layer of (value, tangent-stack) propagation."""
    hd, thd, wd = h.data, th.data, w.data
    y = hd @ wd
    y += b.data
    ty = thd @ wd

    def bwd(g, gt):
        dh = gw = db = dth = None
        if g is not None:
            dh = g @ wd.T
            gw = hd.T @ g
            db = g.sum(axis=0)
        if gt is not None:
            k, n, e = gt.shape
            gt2 = np.ascontiguousarray(gt).reshape(k * n, e)
            dth = (gt2 @ wd.T).reshape(thd.shape)
            gw2 = thd.reshape(k * n, -1).T @ gt2
            gw = gw2 if gw is None else gw + gw2
        return dh, dth, gw, db

    return _emit_multi((y, ty), (h, th, w, b), bwd)
