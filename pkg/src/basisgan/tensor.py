"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op builds a node holding its parents and a closure that pushes the
output gradient back into them. ``backward`` walks the nodes in reverse
topological order, visiting each exactly once, so fan-out gradients add up.
"""

from __future__ import annotations

import numpy as np

LEAK = 0.2


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar
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
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents, op, backward):
    """Wrap an op result; record the graph edge only if some parent needs grad."""
    if any(p.requires_grad for p in parents):
        out = Tensor(data, True, parents, op)
        out._backward = backward
    else:
        out = Tensor(data, False, (), op)
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        # grads are never mutated in place, so aliasing the incoming array is safe
        t.grad = g if g.shape == t.data.shape else np.reshape(g, t.data.shape)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- graph walk

def topological_order(root):
    """Nodes reachable from ``root`` with every node after its parents."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every tensor that requires it and feeds ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), "add", bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), "sub", bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), "mul", bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / b.data**2, b.shape))

    return _node(a.data / b.data, (a, b), "div", bw)


def power(a, exponent):
    exponent = float(exponent)

    def bw(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _node(a.data**exponent, (a,), "pow", bw)


def leaky_relu(a, slope=LEAK):
    """max(slope * t, t); the hidden-layer rectifier used throughout."""
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope)

    def bw(g):
        _accumulate(a, g * scale)

    return _node(a.data * scale, (a,), "leaky_relu", bw)


def tanh(a):
    y = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - y * y))

    return _node(y, (a,), "tanh", bw)


def sigmoid(a):
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accumulate(a, g * y * (1.0 - y))

    return _node(y, (a,), "sigmoid", bw)


def log(a):
    def bw(g):
        _accumulate(a, g / a.data)

    return _node(np.log(a.data), (a,), "log", bw)


def exp(a):
    y = np.exp(a.data)

    def bw(g):
        _accumulate(a, g * y)

    return _node(y, (a,), "exp", bw)


def absolute(a):
    sign = np.sign(a.data)

    def bw(g):
        _accumulate(a, g * sign)

    return _node(np.abs(a.data), (a,), "abs", bw)


def clamp(a, lo, hi):
    """Clip into [lo, hi]; gradient passes only where the input was inside."""
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _accumulate(a, g * inside)

    return _node(np.clip(a.data, lo, hi), (a,), "clamp", bw)


# ---------------------------------------------------------------- reductions and shape

def tsum(a, axis=None, keepdims=False):
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", bw)


def mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), "mean", bw)


def reshape(a, shape):
    def bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), "reshape", bw)


def transpose(a, axes=None):
    inverse = None if axes is None else tuple(np.argsort(axes))

    def bw(g):
        _accumulate(a, np.transpose(g, inverse))

    return _node(np.transpose(a.data, axes), (a,), "transpose", bw)


def getitem(a, index):
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _node(a.data[index], (a,), "getitem", bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=axis)):
            _accumulate(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", bw)


def matmul(a, b):
    """numpy matmul semantics, including batched broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), "matmul", bw)


# ---------------------------------------------------------------- convolution

def _pad(x, p):
    if not p:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * p, w + 2 * p))
    out[:, :, p:p + h, p:p + w] = x
    return out


def _im2col(xp, L, out_h, out_w):
    """(n, c, H, W) -> (n, c*L*L, out_h*out_w), rows ordered (c, i, j) like a flattened bank."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, L, L, out_h, out_w))
    for i in range(L):
        for j in range(L):
            cols[:, :, i, j] = xp[:, :, i:i + out_h, j:j + out_w]
    return cols.reshape(n, c * L * L, out_h * out_w)


def conv2d(x, w, padding=0):
    """Cross-correlation of feature maps with a filter bank.

    x is (N, Cin, H, W) or a single (Cin, H, W) map. w is (Cout, Cin, L, L)
    shared by the batch, or (N, Cout, Cin, L, L) with one bank per sample.
    """
    x, w = as_tensor(x), as_tensor(w)
    single = x.ndim == 3
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be (N,Cin,H,W) or (Cin,H,W), got {x.shape}")
    per_sample = w.ndim == 5
    if w.ndim not in (4, 5):
        raise ShapeError(f"conv2d weight must be (Cout,Cin,L,L) or (N,Cout,Cin,L,L), got {w.shape}")
    n, cin, h, wd = x.shape
    cout, wcin, L, L2 = w.shape[-4:]
    if L != L2 or L % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd side, got {L}x{L2}")
    if wcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input Cin={cin}, weight Cin={wcin}")
    if per_sample and w.shape[0] != n:
        raise ShapeError(f"conv2d per-sample weights for {w.shape[0]} samples, batch has {n}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be >= 0, got {padding}")
    out_h, out_w = h + 2 * padding - L + 1, wd + 2 * padding - L + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d output would be {out_h}x{out_w} for input {h}x{wd}, L={L}, padding={padding}")

    xp = _pad(x.data, padding)
    cols = _im2col(xp, L, out_h, out_w)  # n, cin*L*L, P
    wm = w.data.reshape((n, cout, cin * L * L) if per_sample else (cout, cin * L * L))
    y = (wm @ cols).reshape(n, cout, out_h, out_w)

    def bw(g):
        g2 = g.reshape(n, cout, out_h * out_w)
        if w.requires_grad:
            gw = g2 @ cols.transpose(0, 2, 1)
            _accumulate(w, (gw if per_sample else gw.sum(axis=0)).reshape(w.shape))
        if x.requires_grad:
            # input gradient = full correlation of g with the spatially flipped, channel-swapped bank
            gcols = _im2col(_pad(g, L - 1), L, h + 2 * padding, wd + 2 * padding)
            flipped = w.data[..., ::-1, ::-1]
            if per_sample:
                wf = flipped.transpose(0, 2, 1, 3, 4).reshape(n, cin, cout * L * L)
            else:
                wf = flipped.transpose(1, 0, 2, 3).reshape(cin, cout * L * L)
            gxp = (wf @ gcols).reshape(n, cin, h + 2 * padding, wd + 2 * padding)
            if padding:
                gxp = gxp[:, :, padding:padding + h, padding:padding + wd]
            _accumulate(x, gxp)

    out_t = _node(y, (x, w), "conv2d", bw)
    return reshape(out_t, out_t.shape[1:]) if single else out_t


def avg_pool2d(x, size=2):
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"avg_pool2d: {h}x{w} not divisible by {size}")
    y = x.data.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def bw(g):
        up = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        _accumulate(x, up)

    return _node(y, (x,), "avg_pool2d", bw)


# ---------------------------------------------------------------- gradient oracle

def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x`` (array or Tensor)."""
    if h <= 0:
        raise ValueError("finite difference step must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.empty_like(base)
    flat, gflat = base.reshape(-1), grad.reshape(-1)

    def value(arr):
        out = f(Tensor(arr) if isinstance(x, Tensor) else arr)
        return float(out.item() if isinstance(out, Tensor) else out)

    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = value(base.copy())
        flat[i] = orig - h
        down = value(base.copy())
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad
