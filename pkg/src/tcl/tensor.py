"""Minimal dense 2-D reverse-mode automatic differentiation and Adam.

Every value is a float64 matrix. Operations record a closure that pushes the
upstream gradient into their parents; :func:`backward` walks the graph in
reverse topological order. Gradients accumulate until :meth:`Tensor.zero_grad`.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

from . import kernels
from .errors import ContractError, NumericError, ShapeError

_ids = itertools.count()

NORM_EPS = 1e-12

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph; results never require grad."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


def _check_finite(values, what):
    if not np.isfinite(values).all():
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "node_id", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad=False, _parents=(), op="leaf"):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        _check_finite(arr, op)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self.node_id = next(_ids)
        self._parents = _parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.values)

    def item(self):
        if self.values.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self):
        return self.values

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values, parents, op, backward):
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=needs, _parents=parents if needs else (), op=op)
    if needs:
        out._backward = backward
    return out


def _accumulate(t, g):
    if t.requires_grad:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    # bias-style broadcasting only: a (1, n) or (m, 1) or (1, 1) operand
    if g.shape == shape:
        return g
    if shape[0] == 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ----------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.values + b.values, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _result(a.values - b.values, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.values, a.shape))
        _accumulate(b, _unbroadcast(g * a.values, b.shape))

    return _result(a.values * b.values, (a, b), "mul", backward)


def scale(a, c):
    def backward(g):
        _accumulate(a, g * c)

    return _result(a.values * c, (a,), "scale", backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.values.T)
        if b.requires_grad:
            _accumulate(b, a.values.T @ g)

    return _result(a.values @ b.values, (a, b), "matmul", backward)


def transpose(a):
    def backward(g):
        _accumulate(a, g.T)

    return _result(a.values.T.copy(), (a,), "transpose", backward)


def relu(a):
    mask = a.values > 0

    def backward(g):
        _accumulate(a, g * mask)

    return _result(np.where(mask, a.values, 0.0), (a,), "relu", backward)


def total(a):
    """Sum of all entries, as a 1x1 tensor."""

    def backward(g):
        _accumulate(a, np.full(a.shape, g[0, 0]))

    return _result(a.values.sum(), (a,), "sum", backward)


def col_mean(a):
    """Column means as a 1 x cols tensor."""
    rows = a.shape[0]

    def backward(g):
        _accumulate(a, np.broadcast_to(g / rows, a.shape))

    return _result(a.values.mean(axis=0, keepdims=True), (a,), "col_mean", backward)


# ------------------------------------------------------------ row reshuffles

def take_rows(a, index):
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.values)
            np.add.at(full, index, g)
            _accumulate(a, full)

    return _result(a.values[index], (a,), "take_rows", backward)


def interleave_rows(a, b):
    """Stack rows as a0, b0, a1, b1, ...; both operands share a shape."""
    if a.shape != b.shape:
        raise ShapeError(f"interleave_rows: {a.shape} vs {b.shape}")
    out = np.empty((2 * a.shape[0], a.shape[1]))
    out[0::2] = a.values
    out[1::2] = b.values

    def backward(g):
        _accumulate(a, g[0::2])
        _accumulate(b, g[1::2])

    return _result(out, (a, b), "interleave_rows", backward)


# ------------------------------------------------------------- nonlinearities

def softmax_rows(a):
    a = as_tensor(a)
    if a.shape[1] < 1:
        raise ShapeError("softmax_rows needs at least one column")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        _accumulate(a, p * (g - (g * p).sum(axis=1, keepdims=True)))

    return _result(p, (a,), "softmax_rows", backward)


def l2_normalize_rows(a):
    a = as_tensor(a)
    norms = np.sqrt((a.values ** 2).sum(axis=1, keepdims=True))
    guarded = norms < NORM_EPS
    denom = np.where(guarded, NORM_EPS, norms)
    out = a.values / denom

    def backward(g):
        # d(x/|x|) = (g - u (u.g)) / |x| on normal rows; plain g/eps on guarded rows
        proj = (g * out).sum(axis=1, keepdims=True)
        ga = np.where(guarded, g / NORM_EPS, (g - out * proj) / denom)
        _accumulate(a, ga)

    return _result(out, (a,), "l2_normalize_rows", backward)


def entropy(p):
    """``-sum p log p`` over all entries (natural log, ``0 log 0 = 0``)."""
    vals = p.values
    if (vals < 0).any():
        raise ContractError("entropy of negative probabilities")
    positive = vals > 0
    logs = np.log(np.where(positive, vals, 1.0))
    h = -(vals * logs).sum()

    def backward(g):
        # derivative at exactly zero is infinite; clip to a finite surrogate
        _accumulate(p, -g[0, 0] * (np.where(positive, logs, np.log(1e-300)) + 1.0))

    return _result(h, (p,), "entropy", backward)


# ------------------------------------------------------------- fused losses

def infonce(logits, partner, valid):
    """Mean over rows of ``logsumexp(logits[i, valid[i]]) - logits[i, partner[i]]``.

    Rows with an empty mask contribute zero.
    """
    partner = np.asarray(partner, dtype=np.intp)
    valid = np.asarray(valid, dtype=bool)
    rows = logits.shape[0]
    if partner.shape != (rows,) or valid.shape != logits.shape:
        raise ShapeError("infonce: partner/valid do not match logits")
    losses, row_grads = kernels.infonce_rows(logits.values, partner, valid)

    def backward(g):
        _accumulate(logits, row_grads * (g[0, 0] / rows))

    return _result(losses.sum() / rows, (logits,), "infonce", backward)


def softmax_cross_entropy(logits, labels, weights, normalizer):
    """``sum_i weights[i] * CE(logits[i], labels[i]) / normalizer``."""
    labels = np.asarray(labels, dtype=np.intp)
    weights = np.asarray(weights, dtype=np.float64)
    vals = logits.values
    peak = vals.max(axis=1, keepdims=True)
    e = np.exp(vals - peak)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    rows = np.arange(vals.shape[0])
    nll = (peak[:, 0] + np.log(z[:, 0])) - vals[rows, labels]
    loss = (weights * nll).sum() / normalizer

    def backward(g):
        grad = p.copy()
        grad[rows, labels] -= 1.0
        _accumulate(logits, grad * (weights[:, None] * (g[0, 0] / normalizer)))

    return _result(loss, (logits,), "softmax_cross_entropy", backward)


# ------------------------------------------------------------------ backward

def backward(loss):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor reachable from ``loss``."""
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return

    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.node_id not in seen:
                stack.append((parent, False))

    # intermediates get a fresh buffer; leaves keep accumulating across calls
    for node in order:
        if node._backward is not None:
            node.grad = np.zeros_like(node.values)
    loss.grad = loss.grad + 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is None:
            _check_finite(node.grad, "gradient")


# ---------------------------------------------------------------------- adam

class Adam:
    """Adam with bias correction; weight decay is an L2 term added to the gradient."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        grads = {}
        for k, p in self.params.items():
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {k!r}")
            grads[k] = g + self.weight_decay * p.values if self.weight_decay else g

        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p.values = p.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state):
        for key in ("lr", "beta1", "beta2", "eps", "weight_decay", "step_count"):
            setattr(self, key, state[key])
        self.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}
