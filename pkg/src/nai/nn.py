"""Minimal array-level reverse-mode autodiff, MLP classifiers and Adam.

Everything is float64 numpy. A :class:`Tensor` records its parents and a
closure that pushes its gradient back; :meth:`Tensor.backward` walks the graph
in reverse topological order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_EPS = 1e-12


class NonFiniteGradient(FloatingPointError):
    pass


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, parents=(), requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        order, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))
        if out.requires_grad:
            def bw(g):
                self._accum(_unbroadcast(g, self.shape))
                other._accum(_unbroadcast(g, other.shape))
            out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))
        if out.requires_grad:
            def bw(g):
                self._accum(_unbroadcast(g * other.data, self.shape))
                other._accum(_unbroadcast(g * self.data, other.shape))
            out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return self * other.reciprocal()

    def reciprocal(self):
        out = Tensor(1.0 / self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(-g / self.data ** 2)
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, (self, other))
        if out.requires_grad:
            def bw(g):
                self._accum(g @ other.data.T)
                other._accum(self.data.T @ g)
            out._backward = bw
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))
        if out.requires_grad:
            def bw(g):
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accum(full)
            out._backward = bw
        return out

    # reductions / elementwise ----------------------------------------------
    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def bw(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.shape).copy())
            out._backward = bw
        return out

    def mean(self, axis=None):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def exp(self):
        val = np.exp(self.data)
        out = Tensor(val, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * val)
        return out

    def log(self, eps: float = LOG_EPS):
        clipped = np.maximum(self.data, eps)
        out = Tensor(np.log(clipped), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(np.where(self.data > eps, g / clipped, 0.0))
        return out

    def sigmoid(self):
        val = _sigmoid(self.data)
        out = Tensor(val, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * val * (1.0 - val))
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(self.data * mask, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * mask)
        return out

    def softmax(self, axis=-1):
        val = _softmax(self.data, axis)
        out = Tensor(val, (self,))
        if out.requires_grad:
            def bw(g):
                self._accum(val * (g - (g * val).sum(axis=axis, keepdims=True)))
            out._backward = bw
        return out

    @property
    def T(self):
        out = Tensor(self.data.T, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g.T)
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def bw(g):
            for t, part in zip(tensors, np.split(g, splits, axis=axis)):
                t._accum(part)
        out._backward = bw
    return out


def stack_weighted(weights: Tensor, items) -> Tensor:
    """``sum_l weights[:, l:l+1] * items[l]``."""
    total = None
    for l, item in enumerate(items):
        term = weights[:, l:l + 1] * item
        total = term if total is None else total + term
    return total


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_T(logits, T: float = 1.0):
    """Softmax of ``logits / T`` over the last axis (numpy in, numpy out)."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    if isinstance(logits, Tensor):
        return (logits * (1.0 / T)).softmax()
    return _softmax(np.asarray(logits, dtype=np.float64) / T)


def cross_entropy(p, q, eps: float = LOG_EPS):
    """``-sum q log p`` with ``p`` clamped at ``eps``; averaged over rows for 2-D input."""
    if isinstance(p, Tensor) or isinstance(q, Tensor):
        p, q = as_tensor(p), as_tensor(q)
        per_row = -(q * p.log(eps)).sum(axis=-1)
        return per_row.mean() if per_row.data.ndim else per_row
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    per_row = -(q * np.log(np.maximum(p, eps))).sum(axis=-1)
    return float(per_row.mean()) if per_row.ndim else float(per_row)


def one_hot(labels, c: int) -> np.ndarray:
    out = np.zeros((len(labels), c))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def gumbel_softmax(logits, tau: float = 1.0, rng=None, hard: bool = True, noise=None,
                   sample: bool = True):
    """Gumbel-softmax relaxation over the last axis.

    ``hard=True`` returns a straight-through one-hot (forward is one-hot,
    gradient is that of the soft sample). ``sample=False`` drops the noise,
    which with ``hard=True`` is a plain argmax (ties to the lowest index).
    ``rng`` may be a seed or a Generator; ``noise`` overrides sampling.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    logits = as_tensor(logits)
    if sample:
        if noise is None:
            noise = sample_gumbel(logits.shape, np.random.default_rng(rng))
        y = ((logits + noise) * (1.0 / tau)).softmax()
    else:
        y = (logits * (1.0 / tau)).softmax()
    if not hard:
        return y
    idx = np.argmax(y.data if sample else logits.data, axis=-1)
    hard_y = np.zeros_like(y.data)
    np.put_along_axis(hard_y, np.expand_dims(idx, -1), 1.0, axis=-1)
    return y + Tensor(hard_y - y.data)


# --------------------------------------------------------------------------- MLP

@dataclass
class DenseParams:
    """Weights of an MLP ``sizes[0] -> ... -> sizes[-1]``."""

    sizes: tuple
    weights: list
    biases: list
    activation: str = "relu"
    dropout: float = 0.0

    @classmethod
    def init(cls, sizes, rng, activation: str = "relu", dropout: float = 0.0) -> DenseParams:
        rng = np.random.default_rng(rng)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(int(s) for s in sizes), weights, biases, activation, float(dropout))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_arrays(self, arrays) -> None:
        self.weights = [np.array(a) for a in arrays[0::2]]
        self.biases = [np.array(a) for a in arrays[1::2]]

    def copy(self) -> DenseParams:
        return DenseParams(self.sizes, [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases], self.activation, self.dropout)

    def n_macs(self, rows: int) -> int:
        return sum(rows * a * b for a, b in zip(self.sizes[:-1], self.sizes[1:]))


def forward(params: DenseParams, x, train_mode: bool = False, rng=None, leaves=None) -> Tensor:
    """Logits of the MLP. ``leaves`` substitutes trainable tensors for the weights.

    Inverted dropout on every layer input, only when ``train_mode`` is set.
    """
    x = as_tensor(x)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"input width {x.shape[-1]} != classifier input {params.in_dim}")
    if leaves is None:
        leaves = [Tensor(a) for a in params.arrays()]
    if train_mode and params.dropout > 0:
        rng = np.random.default_rng(rng)
    h = x
    n_layers = len(params.weights)
    for i in range(n_layers):
        if train_mode and params.dropout > 0:
            keep = 1.0 - params.dropout
            h = h * ((rng.random(h.shape) < keep) / keep)
        h = h @ leaves[2 * i] + leaves[2 * i + 1]
        if i < n_layers - 1:
            h = h.relu() if params.activation == "relu" else h
    return h


def predict_proba(params: DenseParams, x) -> np.ndarray:
    """Class probabilities with plain numpy (no graph recording)."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != params.in_dim:
        raise ValueError(f"input width {h.shape[-1]} != classifier input {params.in_dim}")
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < n_layers - 1 and params.activation == "relu":
            h = np.maximum(h, 0.0)
    return _softmax(h)


# --------------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> AdamState:
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state: AdamState, lr: float, wd: float = 0.0,
              betas=(0.9, 0.999), eps: float = 1e-8) -> list:
    """One Adam update with L2 weight decay folded into the gradient."""
    b1, b2 = betas
    state.t += 1
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in parameter {i} at step {state.t}")
        if wd:
            g = g + wd * p
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        mhat = state.m[i] / (1 - b1 ** state.t)
        vhat = state.v[i] / (1 - b2 ** state.t)
        out.append(p - lr * mhat / (np.sqrt(vhat) + eps))
    return out


def value_and_grad(loss_fn, arrays):
    """Evaluate ``loss_fn(leaves)`` and return ``(loss, grads)``."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = loss_fn(leaves)
    loss.backward()
    grads = [l.grad if l.grad is not None else np.zeros_like(l.data) for l in leaves]
    return float(loss.data), grads


def fd_check(arrays, loss_fn, h: float = 1e-5, floor: float = 1e-5) -> float:
    """Max relative error between autodiff and central-difference gradients.

    Per entry ``|a - n| / max(|a| + |n|, floor)``; ``loss_fn`` maps a list of
    leaf tensors to a scalar tensor and must be deterministic.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    _, grads = value_and_grad(loss_fn, arrays)
    worst = 0.0
    for k, a in enumerate(arrays):
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            up = float(loss_fn([Tensor(b) for b in arrays]).data)
            a[idx] = orig - h
            down = float(loss_fn([Tensor(b) for b in arrays]).data)
            a[idx] = orig
            num = (up - down) / (2 * h)
            ana = grads[k][idx]
            worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), floor))
    return worst
