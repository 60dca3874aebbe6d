"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations executed inside a ``with Tape():`` block are recorded as graph
nodes in execution order, so every node's parents precede it and a single
reverse sweep propagates gradients while visiting each node exactly once.
Outside a tape the same operations run as plain numpy computations, which
is the cheap path used for evaluation.

Shapes are strict: the one permitted broadcast is adding a bias vector to
every row of a 2-D batch. Everything else must match exactly.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "DimensionError",
    "Tape",
    "Tensor",
    "as_tensor",
    "matmul",
    "add",
    "mul_elementwise",
    "sigmoid",
    "tanh_act",
    "softmax",
    "concat",
    "slice_along",
    "transpose",
    "reshape",
    "sum_all",
    "cross_entropy_loss",
    "l1_loss",
    "backward",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


_local = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_local, "tape", None)


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    A tape is confined to the thread that opened it; parallel runs each
    open their own tape.
    """

    def __init__(self) -> None:
        self._parents: list[tuple[int, ...]] = []
        self._grad_fns: list[tuple[Callable, ...]] = []
        self._tensors: list[Tensor] = []

    def __len__(self) -> int:
        return len(self._parents)

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active in this thread")
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> bool:
        _local.tape = None
        return False

    def _ensure_leaf(self, t: "Tensor") -> int:
        # Register a tensor created outside this tape (or on an older one)
        # as a parentless node so gradients can accumulate at it.
        if t._tape is self:
            return t._node
        t._tape = self
        t._node = self._append((), (), t)
        return t._node

    def _append(self, parents, grad_fns, tensor) -> int:
        self._parents.append(parents)
        self._grad_fns.append(grad_fns)
        self._tensors.append(tensor)
        return len(self._parents) - 1


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked on a tape.

    ``grad`` accumulates across calls to :func:`backward` until cleared
    with :meth:`zero_grad`. Gradient arrays are never mutated in place by
    the engine; treat them as read-only.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_node")

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.asarray(data, dtype=np.float64)  # keeps 0-d scalars 0-d
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._node: int | None = None

    @classmethod
    def _wrap(cls, data) -> "Tensor":
        # Fast constructor for op results, which are fresh float64 arrays
        # (asarray only re-wraps the 0-d scalars numpy ufuncs hand back).
        t = cls.__new__(cls)
        t.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        t.requires_grad = False
        t.grad = None
        t._tape = None
        t._node = None
        return t

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
    def values(self) -> np.ndarray:
        """Row-major flat view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar used by the model code; all semantics live in the
    # module-level functions.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul_elementwise(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _identity(g: np.ndarray) -> np.ndarray:
    return g


def _record(out: Tensor, links: Sequence[tuple[Tensor, Callable]]) -> Tensor:
    """Attach ``out`` to the active tape, wiring one grad fn per parent.

    Inputs that do not require gradients are dropped from the node, so a
    forward pass over constant data records nothing.
    """
    tape = getattr(_local, "tape", None)
    if tape is None:
        return out
    parents = []
    fns = []
    for t, fn in links:
        if t.requires_grad:
            parents.append(t._node if t._tape is tape else tape._ensure_leaf(t))
            fns.append(fn)
    if not parents:
        return out
    out.requires_grad = True
    out._tape = tape
    out._node = tape._append(tuple(parents), tuple(fns), out)
    return out


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def matmul(a, b) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    ad, bd = a.data, b.data
    return _record(out, ((a, lambda g: g @ bd.T), (b, lambda g: ad.T @ g)))


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts ``[batch, n] + [n]`` bias-row broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        out = Tensor._wrap(a.data + b.data)
        return _record(out, ((a, _identity), (b, _identity)))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        out = Tensor._wrap(a.data + b.data)
        return _record(out, ((a, _identity), (b, lambda g: g.sum(axis=0))))
    raise DimensionError(
        f"add: shapes {a.shape} and {b.shape} do not match"
        " (only the [batch, n] + [n] bias-row broadcast is supported)"
    )


def mul_elementwise(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul_elementwise: shapes {a.shape} and {b.shape} differ")
    out = Tensor._wrap(a.data * b.data)
    ad, bd = a.data, b.data
    return _record(out, ((a, lambda g: g * bd), (b, lambda g: g * ad)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = expit(a.data)
    out = Tensor._wrap(y)
    return _record(out, ((a, lambda g: g * y * (1.0 - y)),))


def tanh_act(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor._wrap(y)
    return _record(out, ((a, lambda g: g * (1.0 - y * y)),))


def softmax(a, axis: int) -> Tensor:
    """Softmax along ``axis``, computed with max subtraction."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._wrap(y)

    def grad_fn(g, y=y, axis=axis):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _record(out, ((a, grad_fn),))


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis``; all other axes must agree."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of an empty sequence")
    ndim = ts[0].ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"concat: axis {axis} invalid for {ndim}-D tensors")
    axis = axis % ndim
    base = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if t.ndim != ndim or other[:axis] != base[:axis] or other[axis + 1 :] != base[axis + 1 :]:
            raise DimensionError(f"concat: shape {t.shape} incompatible with {ts[0].shape} on axis {axis}")
    out = Tensor._wrap(np.concatenate([t.data for t in ts], axis=axis))

    links = []
    offset = 0
    for t in ts:
        extent = t.shape[axis]
        key = tuple(slice(offset, offset + extent) if i == axis else slice(None) for i in range(ndim))
        links.append((t, lambda g, key=key: g[key]))
        offset += extent
    return _record(out, links)


def slice_along(t, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous range ``[start, stop)`` of ``t`` along ``axis``."""
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"slice: axis {axis} invalid for shape {t.shape}")
    axis = axis % t.ndim
    extent = t.shape[axis]
    if not (0 <= start < stop <= extent):
        raise DimensionError(f"slice: range [{start}:{stop}) out of bounds for axis {axis} with extent {extent}")
    key = tuple(slice(start, stop) if i == axis else slice(None) for i in range(t.ndim))
    out = Tensor._wrap(np.ascontiguousarray(t.data[key]))

    def grad_fn(g, shape=t.shape, key=key):
        full = np.zeros(shape)
        full[key] = g
        return full

    return _record(out, ((t, grad_fn),))


def transpose(t) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {t.shape}")
    out = Tensor._wrap(np.ascontiguousarray(t.data.T))
    return _record(out, ((t, lambda g: g.T),))


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != t.size:
        raise DimensionError(f"reshape: cannot view {t.shape} as {shape}")
    out = Tensor(t.data.reshape(shape))
    return _record(out, ((t, lambda g, old=t.shape: g.reshape(old)),))


def sum_all(t) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    t = as_tensor(t)
    out = Tensor(t.data.sum())
    return _record(out, ((t, lambda g, shape=t.shape: np.full(shape, float(g))),))


# ---------------------------------------------------------------------------
# losses


def cross_entropy_loss(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer class targets.

    Computed in log space (log-sum-exp with max subtraction), so extreme
    logits stay finite.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy_loss expects [batch, classes] logits, got {logits.shape}")
    t = np.asarray(targets)
    if t.ndim != 1 or t.shape[0] != logits.shape[0]:
        raise DimensionError(f"cross_entropy_loss: targets shape {t.shape} does not match batch {logits.shape[0]}")
    if t.shape[0] == 0:
        raise DimensionError("cross_entropy_loss: empty batch")
    t = t.astype(np.int64)
    num_classes = logits.shape[1]
    if t.min() < 0 or t.max() >= num_classes:
        raise IndexError(f"cross_entropy_loss: class index out of range [0, {num_classes})")

    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
    log_probs = x - lse
    rows = np.arange(x.shape[0])
    out = Tensor(-log_probs[rows, t].mean())

    def grad_fn(g, log_probs=log_probs, rows=rows, t=t):
        d = np.exp(log_probs)
        d[rows, t] -= 1.0
        return (float(g) / rows.size) * d

    return _record(out, ((logits, grad_fn),))


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error; the subgradient at zero is taken as 0."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"l1_loss: shapes {pred.shape} and {target.shape} differ")
    if pred.size == 0:
        raise DimensionError("l1_loss: empty input")
    diff = pred.data - target.data
    out = Tensor(np.abs(diff).mean())
    sign = np.sign(diff)
    n = diff.size
    return _record(
        out,
        ((pred, lambda g: (float(g) / n) * sign), (target, lambda g: (-float(g) / n) * sign)),
    )


# ---------------------------------------------------------------------------
# reverse sweep


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor reachable
    from ``loss`` that requires gradients.

    Repeated calls without :meth:`Tensor.zero_grad` keep accumulating.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise DimensionError(f"backward expects a scalar loss, got shape {getattr(loss, 'shape', None)}")
    tape = loss._tape
    if tape is None or loss._node is None:
        raise RuntimeError("loss was not recorded on a tape; run the forward pass inside `with Tape():`")

    root = loss._node
    grads: list[np.ndarray | None] = [None] * (root + 1)
    grads[root] = np.ones_like(loss.data)
    parents_list, fns_list, tensors = tape._parents, tape._grad_fns, tape._tensors
    for i in range(root, -1, -1):
        g = grads[i]
        if g is None:
            continue
        t = tensors[i]
        t.grad = g if t.grad is None else t.grad + g
        for pid, fn in zip(parents_list[i], fns_list[i]):
            pg = fn(g)
            grads[pid] = pg if grads[pid] is None else grads[pid] + pg
        grads[i] = None
