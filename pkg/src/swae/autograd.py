"""Reverse-mode automatic differentiation over dense float64 arrays.

Every op records its parents and a backward closure on the output node.
``backward`` orders the recorded graph topologically (the tape) and runs
the closures in reverse. A fresh graph is built on every forward pass, so
nothing needs to be reset between training steps beyond ``zero_grad``.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording a graph (decoding, finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def compute_dtype(dtype):
    """Build new tensors in ``dtype`` instead of float64 (finite-difference oracle)."""
    global DTYPE
    prev = DTYPE
    DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        DTYPE = prev


class Tensor:
    """A dense float64 array that can take part in a gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __getitem__(self, index):
        return index_select(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = tuple(parents)
                out._backward = backward
                break
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True).reshape(t.data.shape)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_op(op: str, fn, a: Tensor, b: Tensor) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = _broadcast_op("add", np.add, a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = _broadcast_op("sub", np.subtract, a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = _broadcast_op("mul", np.multiply, a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = _broadcast_op("div", np.divide, a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * out_data / b.data, b.shape))

    return _make(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g))


# ---------------------------------------------------------------------------
# elementwise unary ops


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: _accumulate(a, g * (1.0 - y * y)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _make(y, (a,), lambda g: _accumulate(a, g * y * (1.0 - y)))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: _accumulate(a, g * y))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: _accumulate(a, 2.0 * g * a.data))


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: _accumulate(a, np.transpose(g, inv)))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in items)


def index_select(a, index) -> Tensor:
    """Basic or advanced indexing; gradients scatter straight into ``a.grad``."""
    a = as_tensor(a)
    out = a.data[index]

    def backward(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        if _is_basic_index(index):
            a.grad[index] += g
        else:
            np.add.at(a.grad, index, g)

    return _make(np.array(out, dtype=DTYPE), (a,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _make(out, ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise ValueError(f"stack: incompatible shapes {[t.shape for t in ts]}")
    out = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        for i, t in enumerate(ts):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(out, ts, backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            elif b.ndim == 1:
                gb = np.swapaxes(a.data, -1, -2) @ g[..., None]
                gb = gb.reshape(-1, b.shape[0]).sum(axis=0) if gb.ndim > 2 else gb[:, 0]
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.shape))

    return _make(a.data @ b.data, (a, b), backward)


def squared_distance(x, y) -> Tensor:
    """Squared Euclidean distance.

    Two vectors give a scalar; two matrices ``(N, Z)`` and ``(M, Z)`` give the
    ``(N, M)`` matrix of pairwise distances.
    """
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != y.ndim or x.ndim not in (1, 2) or x.shape[-1] != y.shape[-1]:
        raise ValueError(f"squared_distance: incompatible shapes {x.shape} and {y.shape}")
    if x.ndim == 1:
        d = x.data - y.data

        def backward1(g):
            _accumulate(x, 2.0 * g * d)
            _accumulate(y, -2.0 * g * d)

        return _make(np.dot(d, d), (x, y), backward1)

    diff = x.data[:, None, :] - y.data[None, :, :]
    out = np.einsum("nmz,nmz->nm", diff, diff)

    def backward2(g):
        w = 2.0 * g[:, :, None] * diff
        _accumulate(x, w.sum(axis=1))
        _accumulate(y, -w.sum(axis=0))

    return _make(out, (x, y), backward2)


_GATE_SCALES: dict[int, np.ndarray] = {}


def _gate_scale(H: int) -> np.ndarray:
    if H not in _GATE_SCALES:
        scale = np.full(4 * H, 0.5)
        scale[2 * H : 3 * H] = 1.0
        _GATE_SCALES[H] = scale
    return _GATE_SCALES[H]


def lstm_cell(pre, c) -> Tensor:
    """LSTM gate nonlinearities fused into one node.

    ``pre`` holds the ``(..., 4H)`` gate pre-activations ordered input, forget,
    cell, output; ``c`` is the previous cell state. Returns ``concat(h', c')``
    along the last axis, with ``c' = f*c + i*g`` and ``h' = o*tanh(c')``.
    """
    pre, c = as_tensor(pre), as_tensor(c)
    H = c.shape[-1]
    if pre.shape[-1] != 4 * H or pre.shape[:-1] != c.shape[:-1]:
        raise ValueError(f"lstm_cell: pre-activations {pre.shape} do not match cell state {c.shape}")
    x = pre.data
    # one tanh for all four gates: sigmoid(v) = (1 + tanh(v/2)) / 2
    t = np.tanh(x * _gate_scale(H))
    s = 0.5 * (1.0 + t)
    i, f, gg, o = s[..., :H], s[..., H : 2 * H], t[..., 2 * H : 3 * H], s[..., 3 * H :]
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def backward(g):
        gh, gc = g[..., :H], g[..., H:]
        gc_total = gc + gh * o * (1.0 - tc * tc)
        if pre.requires_grad:
            gpre = np.empty_like(x)
            gpre[..., :H] = gc_total * gg * i * (1.0 - i)
            gpre[..., H : 2 * H] = gc_total * c.data * f * (1.0 - f)
            gpre[..., 2 * H : 3 * H] = gc_total * i * (1.0 - gg * gg)
            gpre[..., 3 * H :] = gh * tc * o * (1.0 - o)
            _accumulate(pre, gpre)
        if c.requires_grad:
            _accumulate(c, gc_total * f)

    return _make(np.concatenate([h_new, c_new], axis=-1), (pre, c), backward)


# ---------------------------------------------------------------------------
# softmax family


def _log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    y = np.exp(_log_softmax(a.data, axis))

    def backward(g):
        _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _make(y, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    y = _log_softmax(a.data, axis)

    def backward(g):
        _accumulate(a, g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _make(y, (a,), backward)


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Summed negative log-likelihood of integer ``targets`` under ``softmax(logits)``.

    ``logits`` has shape ``(..., V)`` and ``targets`` the leading shape. Optional
    ``weights`` (same shape as ``targets``) mask or weight each position.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"cross_entropy: logits {logits.shape} do not match targets {targets.shape}")
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=DTYPE)
    logp = _log_softmax(logits.data)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    out = -(w * picked).sum()

    def backward(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        _accumulate(logits, g * w[..., None] * grad)

    return _make(np.asarray(out), (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every ancestor of ``loss``."""
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = _topological_order(loss)
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in tape:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# gradient checking


def _central_differences(f, params, coords, eps, dtype) -> dict[tuple[int, int], float]:
    """Central differences for ``(param index, flat index)`` pairs, evaluated in ``dtype``."""
    saved = [p.data for p in params]
    out = {}
    try:
        with no_grad(), compute_dtype(dtype):
            if dtype is not np.float64:
                for p in params:
                    p.data = p.data.astype(dtype)
            step = np.asarray(eps, dtype=dtype)
            for k, i in coords:
                flat = params[k].data.reshape(-1)
                orig = flat[i]
                flat[i] = orig + step
                f_plus = f().data
                flat[i] = orig - step
                f_minus = f().data
                flat[i] = orig
                out[k, i] = float((f_plus - f_minus) / (2 * step))
    finally:
        for p, data in zip(params, saved):
            p.data = data
    return out


# coordinates whose double-precision error exceeds this are re-checked in extended precision
_REFINE_ABOVE = 1e-5


def finite_difference_check(
    f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5, oracle_dtype=np.longdouble
) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` recomputes the scalar loss from the current contents of ``params``
    and must be deterministic (reseed any RNG inside it). The error per
    coordinate is ``|analytic - numeric| / (|numeric| + 1e-8)``.

    Gradients are taken in float64. In float64 a loss of size ~10 carries
    ~1e-15 of roundoff, so at eps=1e-5 a coordinate with |grad| below ~1e-6
    cannot reach 1e-4 relative error however right the gradient is. Every
    coordinate is first differenced in float64; those with error above 1e-5
    are differenced again in ``oracle_dtype`` and that value is used. Pass
    ``np.float64`` for a plain double-precision oracle.
    """
    params = list(params)
    zero_grad(params)
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.reshape(-1).copy() for p in params]
    analytic = [a.reshape(-1) for a in analytic]
    coords = [(k, i) for k, p in enumerate(params) for i in range(p.size)]

    def error(key, numeric):
        return abs(analytic[key[0]][key[1]] - numeric) / (abs(numeric) + 1e-8)

    errors = {key: error(key, n) for key, n in _central_differences(f, params, coords, eps, np.float64).items()}
    oracle_dtype = np.dtype(oracle_dtype).type
    if oracle_dtype is not np.float64:
        suspect = [key for key, e in errors.items() if e > _REFINE_ABOVE]
        for key, n in _central_differences(f, params, suspect, eps, oracle_dtype).items():
            errors[key] = error(key, n)
    zero_grad(params)
    return max(errors.values(), default=0.0)


# ---------------------------------------------------------------------------
# optimizers


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
    if lr <= 0:
        raise ValueError(f"sgd_step: learning rate must be positive, got {lr}")
    for p, g in zip(params, grads):
        p -= lr * g


@dataclass
class OptimState:
    """Adam moment estimates, one array per parameter, plus the step counter."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "OptimState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: OptimState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if lr <= 0:
        raise ValueError(f"adam_step: learning rate must be positive, got {lr}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError(f"adam_step: state holds {len(state.m)} moments for {len(params)} params")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape or g.shape != p.shape:
            raise ValueError(f"adam_step: shape mismatch param {p.shape} grad {g.shape} moment {m.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
