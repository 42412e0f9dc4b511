"""Dense tensors with reverse-mode differentiation on an explicit tape.

Values are numpy arrays (float64 by default, float32 selectable for speed
runs).  Operations executed while a :class:`Tape` is recording append an
entry holding the inputs, the output, and a backward rule; ``Tape.backward``
replays the entries in reverse and accumulates gradients into ``.grad`` of
every tensor that requires them.

Only the broadcasting patterns used by the model are supported; this is not
a general array library.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ShapeError, TapeError

DEFAULT_DTYPE = np.float64

_tls = threading.local()


def active_tape() -> Optional["Tape"]:
    """The tape currently recording on this thread, if any."""
    return getattr(_tls, "tape", None)


class TapeEntry:
    """One recorded operation: kind, inputs, output, backward rule."""

    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind: str, inputs: tuple, output: "Tensor",
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations for one reverse pass.

    A tape is single-threaded and owned by one model instance.  After
    ``backward`` it must be ``reset`` before recording again.
    """

    def __init__(self):
        self._entries: list[TapeEntry] = []
        self._spent = False

    def __len__(self) -> int:
        return len(self._entries)

    @contextmanager
    def recording(self):
        if self._spent:
            raise TapeError("tape already consumed by backward(); call reset() first")
        prev = active_tape()
        _tls.tape = self
        try:
            yield self
        finally:
            _tls.tape = prev

    def _append(self, entry: TapeEntry) -> int:
        self._entries.append(entry)
        return len(self._entries) - 1

    def backward(self, loss: "Tensor") -> None:
        """Populate ``.grad`` for every requires_grad tensor reachable from ``loss``."""
        if self._spent:
            raise TapeError("backward() already ran on this tape; reset() first")
        if loss.values.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        if loss.tape_id is None:
            raise TapeError("loss was not recorded on this tape")
        self._spent = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        for entry in reversed(self._entries):
            g_out = grads.pop(id(entry.output), None)
            if g_out is None:
                continue
            for tensor, g_in in zip(entry.inputs, entry.backward(g_out)):
                if g_in is None or not isinstance(tensor, Tensor):
                    continue
                if not tensor.requires_grad and tensor.tape_id is None:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g_in
                else:
                    grads[key] = g_in
        # Every requires_grad leaf seen by the tape gets a grad; unreachable
        # leaves get zeros so callers can rely on the shape invariant.
        for entry in self._entries:
            for tensor in entry.inputs:
                if isinstance(tensor, Tensor) and tensor.requires_grad and tensor.tape_id is None:
                    g = grads.get(id(tensor))
                    tensor.grad = np.zeros_like(tensor.values) if g is None else g.reshape(tensor.shape)

    def reset(self) -> None:
        self._entries.clear()
        self._spent = False


class Tensor:
    """A dense array participating (optionally) in reverse-mode differentiation."""

    __slots__ = ("values", "requires_grad", "grad", "tape_id")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape_id: Optional[int] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar ----------------------------------------------------
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean_(self, axis=axis, keepdims=keepdims)

    def abs(self) -> "Tensor":
        return abs_(self)

    def sqrt(self) -> "Tensor":
        return sqrt_(self)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _apply(kind: str, out_values: np.ndarray, inputs: Sequence,
           backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    tape = active_tape()
    track = tape is not None and any(
        isinstance(t, Tensor) and (t.requires_grad or t.tape_id is not None) for t in inputs
    )
    out = Tensor(out_values)
    if track:
        out.tape_id = tape._append(TapeEntry(kind, tuple(inputs), out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _vals(x) -> np.ndarray:
    return x.values if isinstance(x, Tensor) else np.asarray(x)


# Elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    av, bv = _vals(a), _vals(b)
    ash, bsh = av.shape, bv.shape

    def backward(g):
        return (_unbroadcast(g, ash), _unbroadcast(g, bsh))

    return _apply("add", av + bv, (a, b), backward)


def sub(a, b) -> Tensor:
    av, bv = _vals(a), _vals(b)
    ash, bsh = av.shape, bv.shape

    def backward(g):
        return (_unbroadcast(g, ash), _unbroadcast(-g, bsh))

    return _apply("sub", av - bv, (a, b), backward)


def mul(a, b) -> Tensor:
    av, bv = _vals(a), _vals(b)
    ash, bsh = av.shape, bv.shape

    def backward(g):
        return (_unbroadcast(g * bv, ash), _unbroadcast(g * av, bsh))

    return _apply("mul", av * bv, (a, b), backward)


def div(a, b) -> Tensor:
    av, bv = _vals(a), _vals(b)
    ash, bsh = av.shape, bv.shape

    def backward(g):
        return (_unbroadcast(g / bv, ash), _unbroadcast(-g * av / (bv * bv), bsh))

    return _apply("div", av / bv, (a, b), backward)


def neg(a) -> Tensor:
    def backward(g):
        return (-g,)

    return _apply("neg", -_vals(a), (a,), backward)


def abs_(a) -> Tensor:
    av = _vals(a)
    sign = np.sign(av)  # subgradient 0 at exact ties

    def backward(g):
        return (g * sign,)

    return _apply("abs", np.abs(av), (a,), backward)


def sqrt_(a) -> Tensor:
    out = np.sqrt(_vals(a))

    def backward(g):
        return (g * (0.5 / out),)

    return _apply("sqrt", out, (a,), backward)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    """Elementwise max(x, slope*x); backward passes 1 for x >= 0 else slope."""
    xv = _vals(x)
    factor = np.where(xv >= 0, 1.0, slope)

    def backward(g):
        return (g * factor,)

    return _apply("leaky_relu", xv * factor, (x,), backward)


# Linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b`` with 2-D ``b``; ``a`` may carry leading batch axes."""
    av, bv = _vals(a), _vals(b)
    if av.ndim < 2 or bv.ndim != 2:
        raise ShapeError(f"matmul expects a with ndim>=2 and 2-D b, got {av.shape} @ {bv.shape}")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {av.shape} @ {bv.shape}")

    def backward(g):
        grad_a = g @ bv.T
        grad_b = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return (grad_a, grad_b)

    return _apply("matmul", av @ bv, (a, b), backward)


def transpose(a, axes=None) -> Tensor:
    av = _vals(a)
    if axes is None:
        axes = tuple(reversed(range(av.ndim)))
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inv),)

    return _apply("transpose", av.transpose(axes), (a,), backward)


def reshape(a, shape) -> Tensor:
    av = _vals(a)
    orig = av.shape

    def backward(g):
        return (g.reshape(orig),)

    return _apply("reshape", av.reshape(shape), (a,), backward)


# Reductions --------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    av = _vals(a)
    axes = _norm_axis(axis, av.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _apply("sum", av.sum(axis=axes, keepdims=keepdims), (a,), backward)


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    av = _vals(a)
    axes = _norm_axis(axis, av.ndim)
    count = int(np.prod([av.shape[ax] for ax in axes])) or 1

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, av.shape).copy(),)

    return _apply("mean", av.mean(axis=axes, keepdims=keepdims), (a,), backward)
