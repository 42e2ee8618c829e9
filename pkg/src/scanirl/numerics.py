"""Dense double-precision tensors with a recorded-graph reverse mode.

Graphs are rebuilt on every forward pass. A :class:`Tensor` keeps its value,
the tensors it was computed from and a closure that pushes an output
gradient back to them. :func:`backward` walks the graph once in reverse
topological order.
"""
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError, UsageError

DTYPE = np.float64


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(node, g):
    if node.requires_grad:
        node.grad = g if node.grad is None else node.grad + g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# forward ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = Tensor(a.value + b.value, (a, b))

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    out._backward = backward
    return out


def add_bias(x, bias):
    """``x + bias`` where ``bias`` matches the last axis of ``x``."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.value.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"bias of shape {bias.shape} does not match input of shape {x.shape}")
    return add(x, bias)


def neg(a):
    out = Tensor(-a.value, (a,))
    out._backward = lambda g: _accumulate(a, -g)
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = Tensor(a.value * b.value, (a, b))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.value, b.shape))

    out._backward = backward
    return out


def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., n) and a 2-D ``b`` of shape (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.value @ b.value, (a, b))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            a2 = a.value.reshape(-1, a.shape[-1])
            _accumulate(b, a2.T @ g.reshape(-1, g.shape[-1]))

    out._backward = backward
    return out


def relu(a):
    mask = a.value > 0
    if _kink_trace is not None:
        _kink_trace.append(mask.copy())
    out = Tensor(np.where(mask, a.value, 0.0), (a,))
    out._backward = lambda g: _accumulate(a, g * mask)
    return out


def tanh(a):
    y = np.tanh(a.value)
    out = Tensor(y, (a,))
    out._backward = lambda g: _accumulate(a, g * (1.0 - y * y))
    return out


def sigmoid(a):
    y = _sigmoid(a.value)
    out = Tensor(y, (a,))
    out._backward = lambda g: _accumulate(a, g * y * (1.0 - y))
    return out


def _sigmoid(x):
    # split by sign so that exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"cannot concatenate shapes {shapes} along axis {axis}") from None
    out = Tensor(value, tensors)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, piece)

    out._backward = backward
    return out


def slice_last(a, start, stop):
    """``a[..., start:stop]``."""
    out = Tensor(a.value[..., start:stop], (a,))

    def backward(g):
        full = np.zeros_like(a.value)
        full[..., start:stop] = g
        _accumulate(a, full)

    out._backward = backward
    return out


def take(a, index, axis):
    """Select a single ``index`` along ``axis``, dropping that axis."""
    out = Tensor(np.take(a.value, index, axis=axis), (a,))

    def backward(g):
        full = np.zeros_like(a.value)
        sl = [slice(None)] * a.value.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        _accumulate(a, full)

    out._backward = backward
    return out


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"cannot stack tensors of shapes {sorted(shapes)}")
    out = Tensor(np.stack([t.value for t in tensors], axis=axis), tensors)

    def backward(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    out._backward = backward
    return out


def _hub_children(a, keys):
    """Children ``a.value[key]`` sharing one gradient buffer.

    The children write their gradients straight into the buffer of an
    intermediate node, which hands the total to ``a`` once. This avoids a
    full-size zero array per child.
    """
    hub = Tensor(a.value, (a,))
    hub._backward = lambda g: _accumulate(a, g)

    def make(key):
        child = Tensor(a.value[key], (hub,))

        def backward(g):
            if hub.grad is None:
                hub.grad = np.zeros_like(a.value)
            hub.grad[key] += g

        child._backward = backward
        return child

    return [make(k) for k in keys]


def unstack(a, axis=0):
    """Split ``a`` into tensors indexed along ``axis`` (the inverse of :func:`stack`)."""
    a = as_tensor(a)
    axis = axis % a.value.ndim
    keys = [tuple([slice(None)] * axis + [i]) for i in range(a.shape[axis])]
    return _hub_children(a, keys)


def split_last(a, sizes):
    """Consecutive pieces of the last axis with the given sizes."""
    a = as_tensor(a)
    if sum(sizes) != a.shape[-1]:
        raise ShapeError(f"sizes {list(sizes)} do not sum to last dimension of {a.shape}")
    edges = np.concatenate([[0], np.cumsum(sizes)])
    keys = [(Ellipsis, slice(int(lo), int(hi))) for lo, hi in zip(edges[:-1], edges[1:])]
    return _hub_children(a, keys)


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        value = np.broadcast_to(a.value, shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} to {tuple(shape)}") from None
    out = Tensor(value.copy(), (a,))
    out._backward = lambda g: _accumulate(a, _unbroadcast(g, a.shape))
    return out


def reshape(a, shape):
    out = Tensor(a.value.reshape(shape), (a,))
    out._backward = lambda g: _accumulate(a, g.reshape(a.shape))
    return out


def tensor_sum(a):
    out = Tensor(a.value.sum(), (a,))
    out._backward = lambda g: _accumulate(a, np.broadcast_to(g, a.shape).copy())
    return out


def embedding(table, ids):
    """Rows of ``table`` selected by an integer array ``ids``."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids out of range for table of shape {table.shape}")
    out = Tensor(table.value[ids], (table,))

    def backward(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accumulate(table, full)

    out._backward = backward
    return out


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=DTYPE)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=DTYPE)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, targets, reduction="sum"):
    """Negative log-probability of integer ``targets`` under ``softmax(logits)``.

    ``reduction`` is ``"sum"``, ``"mean"`` or ``"none"`` (per-position losses).
    """
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"logits of shape {logits.shape} do not match targets of shape {targets.shape}")
    logp = log_softmax(logits.value)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    losses = -picked
    if reduction == "sum":
        value, scale = losses.sum(), None
    elif reduction == "mean":
        value, scale = losses.mean(), 1.0 / max(losses.size, 1)
    elif reduction == "none":
        value, scale = losses, None
    else:
        raise UsageError(f"unknown reduction {reduction!r}")
    out = Tensor(value, (logits,))

    def backward(g):
        d = np.exp(logp)
        np.put_along_axis(d, targets[..., None], np.take_along_axis(d, targets[..., None], axis=-1) - 1.0, axis=-1)
        if reduction == "none":
            d = d * g[..., None]
        else:
            d = d * (g * scale if scale is not None else g)
        _accumulate(logits, d)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# reverse pass


def _topological_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack_.append((p, False))
    return order


def backward(loss, params=None):
    """Back-propagate from the scalar ``loss``.

    When a :class:`ParamStore` is given its gradient buffers are overwritten,
    with exact zeros for parameters that ``loss`` does not depend on, and the
    buffers are returned.
    """
    if loss.value.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is None:
        return None
    for name, p in params.items():
        params.grads[name] = np.zeros_like(p.value) if p.grad is None else np.array(p.grad, dtype=DTYPE)
        p.grad = None
    return params.grads


# ---------------------------------------------------------------------------
# parameters and optimizer


class ParamStore:
    """Named parameters in insertion order with matching gradient buffers."""

    def __init__(self):
        self._params = OrderedDict()
        self.grads = OrderedDict()

    def add(self, name, value):
        if name in self._params:
            raise UsageError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True)
        self._params[name] = t
        self.grads[name] = np.zeros_like(t.value)
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def set(self, name, value):
        value = np.array(value, dtype=DTYPE)
        old = self._params[name]
        if value.shape != old.shape:
            raise ShapeError(f"parameter {name!r} has shape {old.shape}, got {value.shape}")
        old.value = value

    def values(self):
        return OrderedDict((k, t.value.copy()) for k, t in self._params.items())

    def zero_grad(self):
        for k, t in self._params.items():
            self.grads[k] = np.zeros_like(t.value)


def init_uniform(rng, fan_in, shape):
    """Scaled-uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class OptState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=OrderedDict)
    v: dict = field(default_factory=OrderedDict)


def opt_step(params, grads, state):
    """One bias-corrected adaptive-moment update, applied in name order."""
    for name in params.names():
        if not np.all(np.isfinite(grads[name])):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.value)
            v = np.zeros_like(p.value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# gradient checking

_kink_trace = None


def _evaluate_traced(f, params):
    global _kink_trace
    _kink_trace = []
    try:
        value = float(f(params).value)
        trace = _kink_trace
    finally:
        _kink_trace = None
    return value, trace


def _same_kinks(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(f, params, step=1e-5, max_per_param=None, seed=0, floor=1e-6):
    """Largest relative error between :func:`backward` and central differences.

    ``f`` maps the store to a scalar :class:`Tensor`. Entries whose
    perturbation changes the on/off pattern of any ReLU are skipped, since the
    function is not differentiable there. ``max_per_param`` samples that many
    entries of each parameter instead of checking every one. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if step <= 0:
        raise UsageError("finite-difference step must be positive")
    loss = f(params)
    grads = {k: v.copy() for k, v in backward(loss, params).items()}
    _, base_trace = _evaluate_traced(f, params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = np.sort(rng.choice(flat.size, size=max_per_param, replace=False))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp, tp = _evaluate_traced(f, params)
            flat[i] = orig - step
            fm, tm = _evaluate_traced(f, params)
            flat[i] = orig
            if not (_same_kinks(base_trace, tp) and _same_kinks(base_trace, tm)):
                continue
            numeric = (fp - fm) / (2.0 * step)
            analytic = grads[name].reshape(-1)[i]
            denom = max(abs(analytic), abs(numeric), floor)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
