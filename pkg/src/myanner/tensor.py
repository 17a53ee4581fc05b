"""A small reverse-mode autodiff core over float64 numpy arrays.

Operations record themselves on the innermost active :class:`Tape` (or a
process-wide default tape) whenever one of their inputs requires a gradient.
:func:`backward` replays the tape in reverse.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(w * w)
    ...     tape.backward(loss)
    >>> w.grad
    array([2., 4.])
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Sequence

import numpy as np

DEBUG = bool(os.environ.get("MYANNER_DEBUG"))


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_tape", "_gen")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._tape: Tape | None = None
        self._gen = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{rg})"

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to scope one training step.  A tape can be
    replayed once; recording after :meth:`backward` starts a fresh
    generation, while replaying an already-consumed loss raises
    :class:`TapeError`.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.generation = 0
        self.consumed = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def reset(self) -> None:
        self.nodes = []
        self.generation += 1
        self.consumed = False

    def record(self, node: Tensor) -> None:
        if self.consumed:
            self.reset()
        node._tape = self
        node._gen = self.generation
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self or loss._gen != self.generation:
            raise TapeError("loss was not recorded on the current generation of this tape")
        if self.consumed:
            raise TapeError("backward already ran on this tape; call reset() first")
        self.consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            node._backward(g)
            node.grad = None
        self.nodes = []


_DEFAULT_TAPE = Tape()
_TAPES: list[Tape] = []
_GRAD_ENABLED = [True]


def current_tape() -> Tape:
    return _TAPES[-1] if _TAPES else _DEFAULT_TAPE


@contextlib.contextmanager
def no_grad():
    """Disable recording; every result is a constant."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def backward(loss: Tensor) -> None:
    tape = loss._tape
    if tape is None:
        raise TapeError("loss does not depend on any tensor that requires grad")
    tape.backward(loss)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    # grads are never updated in place, so sharing arrays between nodes is safe
    t.grad = g if t.grad is None else t.grad + g


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if DEBUG and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a tensor op")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._tape = None
    out._gen = -1
    if _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        current_tape().record(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


# ----------------------------------------------------------------------------
# elementwise


def _is_bias(big: tuple, small: tuple) -> bool:
    return len(small) < len(big) and big[len(big) - len(small):] == small


def _binary_shapes(a: Tensor, b: Tensor, op: str, allow_bias: bool):
    if a.shape == b.shape:
        return None
    if allow_bias:
        if _is_bias(a.shape, b.shape):
            return "b"
        if _is_bias(b.shape, a.shape):
            return "a"
    raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))) if lead else g


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias broadcast over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add", allow_bias=True)
    sa, sb = a.shape, b.shape

    def back(g):
        if a.requires_grad:
            _accum(a, _reduce_to(g, sa))
        if b.requires_grad:
            _accum(b, _reduce_to(g, sb))

    return _result(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub", allow_bias=True)
    sa, sb = a.shape, b.shape

    def back(g):
        if a.requires_grad:
            _accum(a, _reduce_to(g, sa))
        if b.requires_grad:
            _accum(b, -_reduce_to(g, sb))

    return _result(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    if isinstance(a, (int, float)):
        return scale(b, float(a))
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul", allow_bias=False)

    def back(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), back)


def scale(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)

    def back(g):
        _accum(x, g * c)

    return _result(x.data * c, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def back(g):
        _accum(x, g * y * (1.0 - y))

    return _result(y, (x,), back)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def back(g):
        _accum(x, g * (1.0 - y * y))

    return _result(y, (x,), back)


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def back(g):
        _accum(x, g * y)

    return _result(y, (x,), back)


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: ``add``, ``mul``, ``sigmoid`` or ``tanh``."""
    fn = {"add": add, "mul": mul, "sigmoid": sigmoid, "tanh": tanh, "sub": sub}.get(op)
    if fn is None:
        raise ValueError(f"unknown elementwise op {op!r}")
    return fn(*args)


# ----------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), back)


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def back(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), shape).copy())

    return _result(np.asarray(x.data.sum(axis=axis)), (x,), back)


def mean(x: Tensor) -> Tensor:
    return scale(sum_(x), 1.0 / x.size)


def log_sum_exp(x: Tensor, axis: int = -1) -> Tensor:
    """Stable ``log(sum(exp(x)))`` along ``axis``."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("log_sum_exp over an empty axis")
    m = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - m)
    s = shifted.sum(axis=axis, keepdims=True)
    y = m + np.log(s)

    def back(g):
        _accum(x, np.expand_dims(g, axis) * (shifted / s))

    return _result(np.squeeze(y, axis=axis), (x,), back)


def max_(x: Tensor, axis: int) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal entry."""
    x = as_tensor(x)
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    y = np.take_along_axis(x.data, idx, axis=axis)

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        _accum(x, gx)

    return _result(np.squeeze(y, axis=axis), (x,), back)


# ----------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    old = x.shape

    def back(g):
        _accum(x, g.reshape(old))

    return _result(x.data.reshape(shape).copy(), (x,), back)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))

    def back(g):
        _accum(x, g.transpose(inv))

    return _result(x.data.transpose(axes).copy(), (x,), back)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of singleton axes (ranks must match)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.ndim != len(shape):
        raise ValueError(f"broadcast_to: rank mismatch {x.shape} -> {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s != t)
    for i in axes:
        if x.shape[i] != 1:
            raise ValueError(f"broadcast_to: cannot expand {x.shape} to {shape}")

    def back(g):
        _accum(x, g.sum(axis=axes, keepdims=True) if axes else g)

    return _result(np.broadcast_to(x.data, shape).copy(), (x,), back)


def _has_array(key) -> bool:
    if isinstance(key, tuple):
        return any(isinstance(k, (np.ndarray, list)) for k in key)
    return isinstance(key, (np.ndarray, list))


def getitem(x: Tensor, key) -> Tensor:
    """Numpy-style indexing; repeated fancy indices accumulate gradients."""
    x = as_tensor(x)
    fancy = _has_array(key)
    y = x.data[key]
    if not fancy:
        y = y.copy()

    def back(g):
        gx = np.zeros_like(x.data)
        if fancy:
            np.add.at(gx, key, g)
        else:
            gx[key] = g
        _accum(x, gx)

    return _result(np.asarray(y), (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty list")
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax
        ):
            raise ValueError("concat: incompatible shapes " + str([t.shape for t in tensors]))
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                _accum(t, g[tuple(sl)].copy())

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("stack of an empty list")
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ValueError("stack: shape mismatch")
    ax = axis % (len(shape) + 1)

    def back(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accum(t, np.take(g, i, axis=ax))

    return _result(np.stack([t.data for t in tensors], axis=ax), tensors, back)


# ----------------------------------------------------------------------------
# embedding and regularization


def embedding_lookup(table: Tensor, indices, padding_idx: int | None = None) -> Tensor:
    """Gather rows of ``table``; gradients scatter-add back into the rows.

    The row ``padding_idx``, when given, never receives gradient.
    """
    idx = np.asarray(indices, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"embedding index out of range for table of {n} rows")

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        if padding_idx is not None:
            gt[padding_idx] = 0.0
        _accum(table, gt)

    return _result(table.data[idx], (table,), back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when not training or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))


# ----------------------------------------------------------------------------
# gradient checking


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    eps: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    analytic: Sequence[np.ndarray] | None = None,
    floor: float = 1e-6,
    masks: Sequence[np.ndarray | None] | None = None,
) -> float:
    """Largest relative error between analytic and central-difference grads.

    ``f`` is called with no arguments and must be deterministic.  For large
    parameters a random subset of ``max_coords`` coordinates (at least 100)
    is checked.  ``analytic`` overrides the tape gradients, which is how
    tests inject faults.  ``masks`` optionally restricts each parameter to
    the coordinates marked True (frozen padding rows are not parameters).
    """
    params = list(params)
    if analytic is None:
        for p in params:
            p.zero_grad()
        with Tape() as tape:
            loss = f()
            tape.backward(loss)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
        for p in params:
            p.zero_grad()
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    masks = masks if masks is not None else [None] * len(params)
    for p, ga, mk in zip(params, analytic, masks):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size) if mk is None else np.flatnonzero(np.asarray(mk).reshape(-1))
        if max_coords is not None and coords.size > max(max_coords, 100):
            coords = rng.choice(coords, size=max(max_coords, 100), replace=False)
        gflat = np.asarray(ga).reshape(-1)
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                fp = f().item()
                flat[i] = orig - eps
                fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            err = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), floor)
            worst = max(worst, err)
    return worst
