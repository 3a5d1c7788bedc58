"""Small reverse-mode autodiff over float64 numpy arrays.

Operations are recorded on the :class:`Tape` that is active (``with Tape():``)
when they run, but only if one of their inputs requires a gradient.  Outside a
tape the same functions just compute values, which is what inference uses.

    with Tape() as tape:
        loss = mse(matmul(x, w), y)
    grads = backward(loss)
"""
from __future__ import annotations

import builtins
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GraphConsumedError, NotScalarError, ShapeMismatchError

__all__ = [
    "Tensor", "Tape", "backward", "grad_check", "as_tensor",
    "matmul", "linear_chain", "transpose", "add", "relu", "sin", "cos", "scale",
    "sincos_interleaved", "concat_interleaved", "sum", "mse", "softmax_cross_entropy",
]

_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Append-only record of operations; one per forward/backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self):
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out._tape = None
    out.requires_grad = False
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        if tape.consumed:
            raise GraphConsumedError("tape already used for a backward pass")
        out.requires_grad = True
        out._tape = tape
        tape.nodes.append(_Node(out, inputs, grad_fn))
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every leaf that requires one.

    Leaf gradients are also stored on ``tensor.grad``.  The tape is cleared
    afterwards; a second call raises ``GraphConsumedError``.
    """
    if loss.data.size != 1:
        raise NotScalarError(f"loss has shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        return {}
    if tape.consumed:
        raise GraphConsumedError("backward already ran on this tape")
    produced = {id(n.out) for n in tape.nodes}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key not in produced:
                leaves[key] = t
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    tape.nodes.clear()
    tape.consumed = True
    out = {}
    for key, t in leaves.items():
        t.grad = grads[key]
        out[t] = grads[key]
    return out


# ---------------------------------------------------------------------------
# operations


def matmul(a, b) -> Tensor:
    """Matrix product; ``a`` may also be a single row vector."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul of {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = g @ bd.T if a.requires_grad else None
        if not b.requires_grad:
            return ga, None
        return ga, (np.outer(ad, g) if ad.ndim == 1 else ad.T @ g)

    return _record(ad @ bd, (a, b), grad_fn)


def _chain_cost(shapes) -> int:
    """Fewest scalar multiplications for a product of matrices with these shapes."""
    dims = [shapes[0][0]] + [sh[1] for sh in shapes]
    n = len(shapes)
    cost = [[0] * n for _ in range(n)]
    for span in range(1, n):
        for i in range(n - span):
            j = i + span
            cost[i][j] = min(cost[i][k] + cost[k + 1][j] + dims[i] * dims[k + 1] * dims[j + 1]
                             for k in range(i, j))
    return cost[0][n - 1]


def _product(seq):
    return seq[0] if len(seq) == 1 else np.linalg.multi_dot(seq)


def linear_chain(*factors) -> Tensor:
    """Product ``F1 @ F2 @ ... @ Fk`` evaluated in the cheapest association order.

    Same value as nested :func:`matmul` calls up to rounding; for chains that
    pass through a narrow dimension it saves most of the work, forward and
    backward.
    """
    ts = [as_tensor(f) for f in factors]
    if len(ts) < 2:
        raise ShapeMismatchError("linear_chain needs at least two factors")
    for left, right in zip(ts[:-1], ts[1:]):
        if left.data.ndim != 2 or right.data.ndim != 2 or left.shape[1] != right.shape[0]:
            raise ShapeMismatchError(f"linear_chain of {left.shape} and {right.shape}")
    arrays = [t.data for t in ts]

    def grad_fn(g):
        # dF_i = (F_1..F_{i-1})^T g (F_{i+1}..F_k)^T
        def seq(i, core, first=0):
            return ([m.T for m in reversed(arrays[first:i])] + [core]
                    + [m.T for m in reversed(arrays[i + 1:])])

        wanted = [i for i, t in enumerate(ts) if t.requires_grad]
        inner = [i for i in wanted if i > 0]
        direct = builtins.sum(_chain_cost([m.shape for m in seq(i, g)]) for i in inner)
        # every i > 0 contracts over the rows of F_1; doing that once may be cheaper
        shared = arrays[0].shape[0] * arrays[0].shape[1] * g.shape[1]
        c = None
        if len(inner) > 1:
            c_shape = (arrays[0].shape[1], g.shape[1])
            shared += builtins.sum(_chain_cost([m.shape for m in seq(i, np.empty(c_shape), 1)]) for i in inner)
            if shared < direct:
                c = arrays[0].T @ g
        out = []
        for i, t in enumerate(ts):
            if not t.requires_grad:
                out.append(None)
            elif c is not None and i > 0:
                out.append(_product(seq(i, c, 1)))
            else:
                out.append(_product(seq(i, g)))
        return out

    return _record(np.linalg.multi_dot(arrays), tuple(ts), grad_fn)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose needs a matrix, got {a.shape}")
    return _record(a.data.T, (a,), lambda g: (g.T,))


def add(a, b) -> Tensor:
    """Elementwise sum; either operand may lack the leading batch dimension."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        reduce_a = reduce_b = False
    elif a.data.ndim == b.data.ndim + 1 and a.shape[1:] == b.shape:
        reduce_a, reduce_b = False, True
    elif b.data.ndim == a.data.ndim + 1 and b.shape[1:] == a.shape:
        reduce_a, reduce_b = True, False
    else:
        raise ShapeMismatchError(f"add of {a.shape} and {b.shape}")

    def grad_fn(g):
        ga = g.sum(axis=0) if reduce_a else g
        gb = g.sum(axis=0) if reduce_b else g
        return ga, gb

    return _record(a.data + b.data, (a, b), grad_fn)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    # derivative at exactly 0 is taken as 0
    return _record(out, (a,), lambda g: (g * (a.data > 0.0),))


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def sincos_interleaved(a, amplitude: float = 1.0) -> Tensor:
    """Columns ``k sin a0, k cos a0, k sin a1, k cos a1, ...`` with ``k = amplitude``."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"sincos_interleaved needs a matrix, got {a.shape}")
    k = float(amplitude)
    out = np.empty((a.shape[0], 2 * a.shape[1]))
    s, c = out[:, 0::2], out[:, 1::2]
    np.sin(a.data, out=s)
    np.cos(a.data, out=c)
    if k != 1.0:
        out *= k
    return _record(out, (a,), lambda g: (g[:, 0::2] * c - g[:, 1::2] * s,))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def concat_interleaved(a, b) -> Tensor:
    """Columns ``a0, b0, a1, b1, ...`` from two (batch, F) tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.data.ndim != 2:
        raise ShapeMismatchError(f"concat_interleaved of {a.shape} and {b.shape}")
    n, f = a.shape
    out = np.empty((n, 2 * f))
    out[:, 0::2] = a.data
    out[:, 1::2] = b.data
    return _record(out, (a, b), lambda g: (g[:, 0::2], g[:, 1::2]))


def sum(a) -> Tensor:  # noqa: A001 - mirrors the op name
    a = as_tensor(a)
    return _record(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mse(a, b) -> Tensor:
    """Mean of squared differences over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mse of {a.shape} and {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def grad_fn(g):
        ga = (2.0 / n) * g * diff
        return (ga if a.requires_grad else None, -ga if b.requires_grad else None)

    return _record(np.array(np.mean(diff * diff)), (a, b), grad_fn)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.data.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeMismatchError(f"logits {logits.shape} vs labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    rows = np.arange(n)

    def grad_fn(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / n,)

    return _record(np.array(-logp[rows, labels].mean()), (logits,), grad_fn)


# ---------------------------------------------------------------------------
# verification


def grad_check(f: Callable[[Tensor], Tensor], theta: Tensor, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``f`` maps ``theta`` to a scalar tensor.  Per coordinate the error is
    ``|a - b| / max(1e-12, |a| + |b|)``.
    """
    if not theta.requires_grad:
        raise ValueError("theta must require grad")
    with Tape():
        loss = f(theta)
    analytic = backward(loss).get(theta, np.zeros_like(theta.data))
    base = theta.data.copy()
    numeric = np.zeros_like(base)
    flat = theta.data.reshape(-1)
    for i in range(flat.size):
        flat[i] = base.flat[i] + h
        fp = float(f(theta).data)
        flat[i] = base.flat[i] - h
        fm = float(f(theta).data)
        flat[i] = base.flat[i]
        numeric.flat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0
