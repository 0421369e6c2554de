"""Minimal reverse-mode autodiff on numpy arrays.

Everything runs in float64. Ops record themselves onto the implicit tape
(parent links + backward closures) whenever gradients are enabled and at
least one input requires them; `backward()` on a scalar then does one
reverse topological sweep, summing gradients across all uses.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """N-dimensional float64 array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bw = None

    # -- basic introspection -------------------------------------------------
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
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        """Constant copy sharing the same buffer; cuts the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- graph machinery -----------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bw is None:
                continue
            for parent, g in zip(node._parents, node._bw(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operators -----------------------------------------------------------
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
        return mul(self, pow(as_tensor(other), -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other), pow(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return pow(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def abs(self):
        return tabs(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data, parents, bw):
    """Build an op result; records the backward closure if grads are live.

    `bw(out_grad)` must return one gradient (array or None) per parent.
    """
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.data.shape),
                   _unbroadcast(g * a.data, b.data.shape)))


def pow(a, exponent):
    a = as_tensor(a)
    e = float(exponent)
    out = a.data ** e
    return make_op(out, (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def sqrt(a):
    return pow(a, 0.5)


def sigmoid(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return make_op(s, (a,), lambda g: (g * s * (1.0 - s),))


def tabs(a):
    a = as_tensor(a)
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clip(a, lo, hi):
    a = as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)
    return make_op(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data >= b.data
    return make_op(
        np.maximum(a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * mask, a.data.shape),
                   _unbroadcast(g * ~mask, b.data.shape)))


# -- reductions / reshaping --------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return make_op(out, (a,), bw)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.data.shape[ax]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return make_op(a.data.reshape(shape), (a,),
                   lambda g: (g.reshape(a.data.shape),))


def getitem(a, idx):
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_op(a.data[idx], (a,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op(np.concatenate([t.data for t in tensors], axis=axis),
                   tensors, bw)


def roll(a, shift, axis):
    a = as_tensor(a)
    return make_op(np.roll(a.data, shift, axis=axis), (a,),
                   lambda g: (np.roll(g, tuple(-s for s in shift)
                              if isinstance(shift, tuple) else -shift,
                              axis=axis),))


# -- linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return make_op(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, weight, bias=None):
    """Affine map: x (N, F_in) @ weight.T (F_in, F_out) + bias."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear shape mismatch: x {x.shape}, weight {weight.shape}")
    out = matmul(x, transpose(weight))
    if bias is not None:
        out = add(out, bias)
    return out


def transpose(a):
    a = as_tensor(a)
    return make_op(a.data.T, (a,), lambda g: (g.T,))


# -- convolution and friends -------------------------------------------------

def _im2col(x, k, stride, padding):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = h + 2 * padding, w + 2 * padding
    h_out = (hp - k) // stride + 1
    w_out = (wp - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h_out * w_out, c * k * k)
    return np.ascontiguousarray(cols), h_out, w_out


def _col2im(gcols, x_shape, k, stride, padding, h_out, w_out):
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    gx = np.zeros((n, c, hp, wp))
    g6 = gcols.reshape(n, h_out, w_out, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            gx[:, :, i:i + stride * h_out:stride,
               j:j + stride * w_out:stride] += g6[..., i, j]
    if padding:
        gx = gx[:, :, padding:hp - padding, padding:wp - padding]
    return gx


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of x (N,C_in,H,W) with weight (C_out,C_in,k,k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D operands, got {x.shape}, {weight.shape}")
    c_out, c_in, k, k2 = weight.shape
    if k != k2:
        raise ShapeError("conv2d expects square kernels")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]} vs kernel {c_in}")
    if stride < 1:
        raise ShapeError("conv2d stride must be >= 1")
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ShapeError("conv2d input smaller than kernel")

    n = x.shape[0]
    cols, h_out, w_out = _im2col(x.data, k, stride, padding)
    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = (cols @ wmat.T).transpose(0, 2, 1).reshape(n, c_out, h_out, w_out)

    def bw(g):
        gflat = g.reshape(n, c_out, h_out * w_out).transpose(0, 2, 1)
        gw = np.einsum("nlo,nlc->oc", gflat, cols).reshape(weight.shape)
        gcols = gflat @ wmat
        gx = _col2im(gcols, x.data.shape, k, stride, padding, h_out, w_out)
        return gx, gw

    out_t = make_op(out, (x, weight), bw)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({c_out},)")
        out_t = add(out_t, reshape(bias, (1, c_out, 1, 1)))
    return out_t


def depthwise_conv3x3(x, weight, bias=None):
    """Per-channel 3x3 convolution, stride 1, padding 1.

    weight has shape (C, 3, 3); each channel is filtered independently.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    n, c, h, w = x.shape
    if weight.shape != (c, 3, 3):
        raise ShapeError(f"depthwise weight shape {weight.shape} != ({c}, 3, 3)")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, c, h, w))
    for i in range(3):
        for j in range(3):
            out += weight.data[:, i, j][None, :, None, None] * xp[:, :, i:i + h, j:j + w]

    def bw(g):
        gw = np.zeros_like(weight.data)
        gxp = np.zeros_like(xp)
        for i in range(3):
            for j in range(3):
                gw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, i:i + h, j:j + w])
                gxp[:, :, i:i + h, j:j + w] += g * weight.data[:, i, j][None, :, None, None]
        return gxp[:, :, 1:1 + h, 1:1 + w], gw

    out_t = make_op(out, (x, weight), bw)
    if bias is not None:
        out_t = add(out_t, reshape(as_tensor(bias), (1, c, 1, 1)))
    return out_t


def upsample_nearest2x(x):
    """Replicate each pixel into a 2x2 block."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return make_op(out, (x,),
                   lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),))


def global_avg_pool(x):
    """(N,C,H,W) -> (N,C) mean over the spatial plane."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects 4-D input, got {x.shape}")
    return tmean(x, axis=(2, 3))


def global_max_pool(x):
    """(N,C,H,W) -> (N,C) spatial max; gradient to the first argmax."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_max_pool expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    arg = flat.argmax(axis=2)
    out = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]

    def bw(g):
        gx = np.zeros_like(flat)
        np.put_along_axis(gx, arg[:, :, None], g[:, :, None], axis=2)
        return (gx.reshape(x.data.shape),)

    return make_op(out, (x,), bw)


def batch_norm2d(x, gamma, beta, running_mean, running_var,
                 training, momentum=0.1, eps=1e-5):
    """Per-channel batch norm over (N,H,W).

    Train mode normalizes with batch statistics and updates the running
    buffers in place (unbiased variance, torch convention); eval mode uses
    the running buffers as constants.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    gshape = (1, c, 1, 1)
    if training:
        mu = tmean(x, axis=(0, 2, 3), keepdims=True)
        var = tmean(pow(sub(x, mu), 2.0), axis=(0, 2, 3), keepdims=True)
        cnt = n * h * w
        corr = cnt / (cnt - 1) if cnt > 1 else 1.0
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.ravel()
        running_var *= 1.0 - momentum
        running_var += momentum * corr * var.data.ravel()
        xhat = mul(sub(x, mu), pow(add(var, eps), -0.5))
    else:
        mu = running_mean.reshape(gshape)
        inv = 1.0 / np.sqrt(running_var.reshape(gshape) + eps)
        xhat = mul(sub(x, mu), inv)
    return add(mul(xhat, reshape(gamma, gshape)), reshape(beta, gshape))


# -- optimizer ---------------------------------------------------------------

class Adam:
    """Standard bias-corrected Adam over a list of parameter Tensors."""

    def __init__(self, params, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter {p.data.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional one-step Adam on raw arrays.

    `state` is a dict with keys m, v (lists of arrays) and t; mutated in
    place and returned for convenience.
    """
    state["t"] += 1
    t = state["t"]
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {p.shape}")
        state["m"][i] = beta1 * state["m"][i] + (1.0 - beta1) * g
        state["v"][i] = beta2 * state["v"][i] + (1.0 - beta2) * g * g
        m_hat = state["m"][i] / (1.0 - beta1 ** t)
        v_hat = state["v"][i] / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# -- gradient checking -------------------------------------------------------

def finite_difference_check(f, x, h=1e-3):
    """Max relative error between analytic and central-difference gradients.

    `f` maps a Tensor to a scalar Tensor and must be smooth at `x`.
    """
    x = Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64),
               requires_grad=True)
    out = f(x)
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    fd = np.zeros_like(x.data)
    flat = x.data.ravel()
    fd_flat = fd.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        with no_grad():
            hi = f(x).item()
        flat[i] = orig - h
        with no_grad():
            lo = f(x).item()
        flat[i] = orig
        fd_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.abs(fd), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))
