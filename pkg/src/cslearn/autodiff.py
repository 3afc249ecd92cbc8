"""Dense arrays with reverse-mode differentiation and an SGD optimizer.

Storage is float32 by default; reductions accumulate in float64 before
casting back. The tape is the implicit DAG of ``Tensor`` nodes; calling
``backward()`` on a scalar walks it once in reverse topological order.
Tensors are treated as immutable once produced by an op (only optimizer
steps write ``data`` in place, outside any tape).
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_array(x, dtype=None):
    a = np.asarray(x)
    if a.dtype.kind != "f":
        a = a.astype(DTYPE)
    if dtype is not None:
        a = a.astype(dtype)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, seed=None):
        if seed is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None and node.requires_grad:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise / structural ops --------------------------------------


def add(a, b):
    """a + b; shapes must match, or b may be a (d,1) bias against (d,n)."""
    a, b = as_tensor(a), as_tensor(b)
    bias = a.shape != b.shape
    if bias:
        if not (a.data.ndim == 2 and b.shape == (a.shape[0], 1)):
            raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data + b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g.sum(axis=1, keepdims=True, dtype=np.float64).astype(b.dtype) if bias else g)

    out._backward = bwd
    return out


def sub(a, b):
    return add(a, scale(as_tensor(b), -1.0))


def mul(a, b):
    """Elementwise product (equal shapes) or scalar scaling."""
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    if isinstance(a, (int, float)):
        return scale(b, float(a))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data * b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    out._backward = bwd
    return out


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    out = Tensor(a.data * np.asarray(c, dtype=a.dtype), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accum(g * np.asarray(c, dtype=a.dtype))

    out._backward = bwd
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    out._backward = bwd
    return out


def transpose(a, axes=None):
    a = as_tensor(a)
    out = Tensor(np.transpose(a.data, axes), _parents=(a,))
    inv = None if axes is None else np.argsort(axes)

    def bwd(g):
        if a.requires_grad:
            a._accum(np.transpose(g, inv))

    out._backward = bwd
    return out


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accum(g.reshape(a.shape))

    out._backward = bwd
    return out


def take(a, idx):
    """Basic indexing (ints/slices); backward scatter-adds into place."""
    a = as_tensor(a)
    out = Tensor(a.data[idx], _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accum(full)

    out._backward = bwd
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(piece)

    out._backward = bwd
    return out


# -- reductions (64-bit accumulation) ----------------------------------


def sum_all(a):
    a = as_tensor(a)
    out = Tensor(np.asarray(a.data.sum(dtype=np.float64), dtype=a.dtype), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accum(np.full_like(a.data, g))

    out._backward = bwd
    return out


def mean_all(a):
    return scale(sum_all(a), 1.0 / as_tensor(a).data.size)


# -- nonlinearities ----------------------------------------------------


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            # subgradient 0 at the kink
            a._accum(g * (a.data > 0))

    out._backward = bwd
    return out


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(a):
    """tanh-approximation GELU."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
            d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
            a._accum(g * d.astype(a.dtype))

    out._backward = bwd
    return out


def square(a):
    a = as_tensor(a)
    return mul(a, a)


def softmax_columns(a):
    """Column-wise softmax with max-subtraction; input is r x c."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(z.astype(np.float64))
    s = (e / e.sum(axis=0, keepdims=True)).astype(a.dtype)
    out = Tensor(s, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            dot = (g * s).sum(axis=0, keepdims=True, dtype=np.float64).astype(a.dtype)
            a._accum(s * (g - dot))

    out._backward = bwd
    return out


def layer_norm(z, gain, bias, eps=1e-6):
    """Per-column normalization over the feature axis, then affine gain/bias.

    z is d x n; gain and bias are length-d vectors.
    """
    z, gain, bias = as_tensor(z), as_tensor(gain), as_tensor(bias)
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    d = z.shape[0]
    if gain.data.reshape(-1).shape != (d,) or bias.data.reshape(-1).shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have length {d}")
    x = z.data.astype(np.float64)
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(z.dtype)
    gcol = gain.data.reshape(d, 1)
    out = Tensor(gcol * xhat + bias.data.reshape(d, 1), _parents=(z, gain, bias))

    def bwd(g):
        if gain.requires_grad:
            gain._accum((g * xhat).sum(axis=1, dtype=np.float64).astype(gain.dtype).reshape(gain.shape))
        if bias.requires_grad:
            bias._accum(g.sum(axis=1, dtype=np.float64).astype(bias.dtype).reshape(bias.shape))
        if z.requires_grad:
            gh = (g * gcol).astype(np.float64)
            m1 = gh.mean(axis=0, keepdims=True)
            m2 = (gh * xhat).mean(axis=0, keepdims=True)
            z._accum((inv * (gh - m1 - xhat * m2)).astype(z.dtype))

    out._backward = bwd
    return out


def cross_entropy(logits, labels):
    """Mean negative log-softmax at the true class; logits are classes x n."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    c, n = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"cross_entropy: {n} columns but {labels.shape[0]} labels")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise IndexError(f"cross_entropy: label out of range for {c} classes")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=0, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=0, keepdims=True))
    logp = z - logsum
    loss = -logp[labels, np.arange(n)].mean()
    out = Tensor(np.asarray(loss, dtype=logits.dtype), _parents=(logits,))

    def bwd(g):
        if logits.requires_grad:
            p = np.exp(logp)
            p[labels, np.arange(n)] -= 1.0
            logits._accum((float(g) / n * p).astype(logits.dtype))

    out._backward = bwd
    return out


# -- SGD ---------------------------------------------------------------


class SgdState:
    """Momentum-SGD state: v <- m*v + (g + wd*p); p <- p - lr*v."""

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0):
        if lr < 0 or not (0.0 <= momentum < 1.0) or weight_decay < 0:
            raise ValueError("SgdState: invalid hyperparameters")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError(f"sgd_step: grad shape {p.grad.shape} != param shape {p.data.shape}")
            np.multiply(v, self.momentum, out=v)
            v += p.grad + self.weight_decay * p.data
            p.data -= (self.lr * v).astype(p.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def sgd_step(params, grads, state):
    """Functional form of SgdState.step for externally held gradients."""
    for p, g in zip(state.params, grads):
        p.grad = np.asarray(g, dtype=p.dtype)
    state.step()
    state.zero_grad()
    return state


# -- verification harness ----------------------------------------------


def grad_check(f, tensors, step=1e-3):
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and recomputes a scalar from the current
    contents of ``tensors`` (which it closes over). The point is upcast
    to float64 in place so both the tape pass and the finite-difference
    reference run in 64-bit; original data is restored on exit.
    """
    saved = [(t.data, t.grad, t.requires_grad) for t in tensors]
    try:
        for t in tensors:
            t.data = t.data.astype(np.float64)
            t.grad = None
            t.requires_grad = True
        f().backward()
        worst = 0.0
        for t in tensors:
            ana = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
            num = np.zeros_like(t.data)
            flat, nflat = t.data.reshape(-1), num.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + step
                hi = float(f().data)
                flat[i] = keep - step
                lo = float(f().data)
                flat[i] = keep
                nflat[i] = (hi - lo) / (2 * step)
            denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-6)
            worst = max(worst, float(np.max(np.abs(ana - num) / denom, initial=0.0)))
        return worst
    finally:
        for t, (d, g, rg) in zip(tensors, saved):
            t.data, t.grad, t.requires_grad = d, g, rg
