"""Minimal dense-tensor library with reverse-mode automatic differentiation.

Float64 everywhere, HWC layout for maps.  Each operation records a
vector-Jacobian closure on the output tensor; ``backward`` on a scalar
walks the tape in reverse topological order and accumulates gradients
into requires-grad leaves.  Heavy array work is delegated to
``coopbev.kernels`` (compiled extension or numpy fallback).
"""

import itertools
import struct
from contextlib import contextmanager

import numpy as np

from coopbev import kernels as K

_node_ids = itertools.count()
_grad_enabled = [True]


@contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


class DiffTensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_vjp", "_track")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.node_id = next(_node_ids)
        self._parents = tuple(parents)
        self._vjp = vjp
        self._track = self.requires_grad or any(p._track for p in self._parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self):
        return DiffTensor(self.data)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"DiffTensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data):
    return DiffTensor(data, requires_grad=True)


def _lift(x):
    return x if isinstance(x, DiffTensor) else DiffTensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, vjp):
    parents = tuple(p for p in parents if isinstance(p, DiffTensor))
    if _grad_enabled[-1] and any(p._track for p in parents):
        return DiffTensor(data, parents=parents, vjp=vjp)
    return DiffTensor(data)


def backward(loss):
    """Populate gradients of every requires-grad leaf reachable from ``loss``.

    Repeated calls without ``zero_grad`` accumulate.
    """
    if not isinstance(loss, DiffTensor):
        raise ValueError("backward expects a DiffTensor")
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
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
    cotangents = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = cotangents.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad += g
        if node._vjp is None:
            continue
        for parent, pg in node._vjp(g):
            if not parent._track:
                continue
            buf = cotangents.get(id(parent))
            if buf is None:
                # fresh ndarray: a vjp may hand the same array to several
                # parents, and 0-d results can arrive as numpy scalars
                cotangents[id(parent)] = np.array(pg, dtype=np.float64)
            else:
                buf += pg


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data + b.data

    def vjp(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return _make(data, (a, b), vjp)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data - b.data

    def vjp(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape))]

    return _make(data, (a, b), vjp)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data * b.data

    def vjp(g):
        return [(a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape))]

    return _make(data, (a, b), vjp)


def scale(a, s):
    s = float(s)
    data = a.data * s

    def vjp(g):
        return [(a, g * s)]

    return _make(data, (a,), vjp)


def relu(a):
    data = np.maximum(a.data, 0.0)

    def vjp(g):
        return [(a, g * (data > 0.0))]

    return _make(data, (a,), vjp)


def sigmoid(a):
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g):
        return [(a, g * data * (1.0 - data))]

    return _make(data, (a,), vjp)


def softplus(a):
    x = a.data
    data = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def vjp(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return [(a, g * s)]

    return _make(data, (a,), vjp)


def log(a):
    data = np.log(a.data)

    def vjp(g):
        return [(a, g / a.data)]

    return _make(data, (a,), vjp)


def exp(a):
    data = np.exp(a.data)

    def vjp(g):
        return [(a, g * data)]

    return _make(data, (a,), vjp)


def pow_const(a, p):
    p = float(p)
    data = a.data ** p

    def vjp(g):
        return [(a, g * p * a.data ** (p - 1.0))]

    return _make(data, (a,), vjp)


def huber(a):
    """Elementwise smooth-L1 of the input (delta = 1)."""
    x = a.data
    ax = np.abs(x)
    data = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)

    def vjp(g):
        return [(a, g * np.clip(x, -1.0, 1.0))]

    return _make(data, (a,), vjp)


def sum_all(a):
    data = np.asarray(a.data.sum())

    def vjp(g):
        return [(a, np.broadcast_to(g, a.shape).copy())]

    return _make(data, (a,), vjp)


def mean_all(a):
    return scale(sum_all(a), 1.0 / a.size)


def mean_tensors(ts):
    """Mean of same-shape tensors, fixed left-to-right reduction order."""
    ts = list(ts)
    if not ts:
        raise ValueError("mean_tensors needs at least one tensor")
    acc = ts[0]
    for t in ts[1:]:
        acc = add(acc, t)
    return scale(acc, 1.0 / len(ts))


# ---------------------------------------------------------------------------
# channel-axis ops


def concat_channels(ts):
    ts = [_lift(t) for t in ts]
    data = np.concatenate([t.data for t in ts], axis=-1)
    splits = np.cumsum([t.shape[-1] for t in ts])[:-1]

    def vjp(g):
        parts = np.split(g, splits, axis=-1)
        return list(zip(ts, (np.ascontiguousarray(p) for p in parts)))

    return _make(data, ts, vjp)


def slice_channel(a, idx):
    """Single channel as an [..., 1] map."""
    data = np.ascontiguousarray(a.data[..., idx : idx + 1])

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[..., idx : idx + 1] = g
        return [(a, ga)]

    return _make(data, (a,), vjp)


def channel_softmax(a):
    if a.shape[-1] < 2:
        raise ValueError("channel softmax needs at least 2 channels")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return [(a, data * (g - dot))]

    return _make(data, (a,), vjp)


def log_channel_softmax(a):
    if a.shape[-1] < 2:
        raise ValueError("channel softmax needs at least 2 channels")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    data = z - lse
    sm = np.exp(data)

    def vjp(g):
        return [(a, g - sm * g.sum(axis=-1, keepdims=True))]

    return _make(data, (a,), vjp)


def two_way_softmax(a):
    """Channel-0 probability of a 2-channel softmax, as an [H, W, 1] map."""
    if a.shape[-1] != 2:
        raise ValueError(f"two-way softmax needs exactly 2 channels, got {a.shape[-1]}")
    return sigmoid(sub(slice_channel(a, 0), slice_channel(a, 1)))


def pointwise_linear(a, w, bias=None):
    """Per-cell linear map over the channel axis: [..., Ci] @ [Ci, Co]."""
    if a.shape[-1] != w.shape[0]:
        raise ValueError(f"channel mismatch: input {a.shape[-1]} vs weight {w.shape[0]}")
    data = a.data @ w.data
    if bias is not None:
        data = data + bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        grads = [(a, g @ w.data.T),
                 (w, np.tensordot(a.data, g, axes=(lead, lead)))]
        if bias is not None:
            grads.append((bias, g.sum(axis=lead)))
        return grads

    parents = (a, w) if bias is None else (a, w, bias)
    return _make(data, parents, vjp)


# ---------------------------------------------------------------------------
# convolution family (hot kernels)


def conv2d(a, kern, bias=None, stride=1, padding=0):
    """Cross-correlation of an [H, W, Cin] map with an [kh, kw, Cin, Cout] kernel."""
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    if a.ndim != 3 or kern.ndim != 4:
        raise ValueError("conv2d expects [H,W,Cin] input and [kh,kw,Cin,Cout] kernel")
    h, w, ci = a.shape
    kh, kw = kern.shape[0], kern.shape[1]
    if kern.shape[2] != ci:
        raise ValueError(f"channel mismatch: input {ci} vs kernel {kern.shape[2]}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("kernel larger than padded input")
    x = np.ascontiguousarray(a.data)
    kd = np.ascontiguousarray(kern.data)
    data = K.conv2d_forward(x, kd, stride, padding)
    if bias is not None:
        data = data + bias.data

    def vjp(g):
        g = np.ascontiguousarray(g)
        grads = [(a, K.conv2d_backward_input(g, kd, stride, padding, h, w)),
                 (kern, K.conv2d_backward_kernel(x, g, stride, padding, kh, kw))]
        if bias is not None:
            grads.append((bias, g.sum(axis=(0, 1))))
        return grads

    parents = (a, kern) if bias is None else (a, kern, bias)
    return _make(data, parents, vjp)


def depthwise_pair_conv2d(a, kern):
    """Same-padded depthwise conv over 2C channels, adjacent pairs summed to C."""
    if a.ndim != 3 or kern.ndim != 3:
        raise ValueError("depthwise conv expects [H,W,2C] input and [l,l,2C] kernel")
    if a.shape[-1] % 2 != 0:
        raise ValueError(f"input channel count must be even, got {a.shape[-1]}")
    if kern.shape[0] != kern.shape[1] or kern.shape[0] % 2 != 1:
        raise ValueError("depthwise kernel must be odd and square for same padding")
    if kern.shape[2] != a.shape[-1]:
        raise ValueError(f"channel mismatch: input {a.shape[-1]} vs kernel {kern.shape[2]}")
    x = np.ascontiguousarray(a.data)
    kd = np.ascontiguousarray(kern.data)
    data = K.depthwise_pair_forward(x, kd)

    def vjp(g):
        gx, gk = K.depthwise_pair_backward(x, kd, np.ascontiguousarray(g))
        return [(a, gx), (kern, gk)]

    return _make(data, (a, kern), vjp)


def transposed_conv2d(a, kern):
    """Stride-2 2x2 transposed convolution: [H,W,Cin] -> [2H,2W,Cout]."""
    if a.ndim != 3 or kern.ndim != 4:
        raise ValueError("transposed conv expects [H,W,Cin] input and [2,2,Cin,Cout] kernel")
    if kern.shape[0] != 2 or kern.shape[1] != 2:
        raise ValueError("transposed conv kernel must be 2x2")
    if kern.shape[2] != a.shape[-1]:
        raise ValueError(f"channel mismatch: input {a.shape[-1]} vs kernel {kern.shape[2]}")
    x = np.ascontiguousarray(a.data)
    kd = np.ascontiguousarray(kern.data)
    data = K.tconv2x2_forward(x, kd)

    def vjp(g):
        gx, gk = K.tconv2x2_backward(x, kd, np.ascontiguousarray(g))
        return [(a, gx), (kern, gk)]

    return _make(data, (a, kern), vjp)


# ---------------------------------------------------------------------------
# normalization


class NormState:
    """Running per-channel statistics for a normalization layer."""

    def __init__(self, channels):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)


NORM_EPS = 1e-5
NORM_MOMENTUM = 0.9


def spatial_norm(a, gamma, beta, state, training):
    """Per-channel normalization over the spatial extent, with running stats.

    Variance is floored at NORM_EPS, so unit-variance input normalizes
    exactly and zero-variance input cannot divide by zero.  Train mode
    uses the sample's own spatial statistics and updates the running
    buffers with momentum NORM_MOMENTUM; eval mode uses the buffers.
    """
    if a.ndim != 3 or a.shape[-1] != state.mean.shape[0]:
        raise ValueError("norm state does not match input channel count")
    if training:
        mu = a.data.mean(axis=(0, 1))
        var = a.data.var(axis=(0, 1))
        state.mean = NORM_MOMENTUM * state.mean + (1.0 - NORM_MOMENTUM) * mu
        state.var = NORM_MOMENTUM * state.var + (1.0 - NORM_MOMENTUM) * var
    else:
        mu = state.mean
        var = state.var
    s = np.sqrt(np.maximum(var, NORM_EPS))
    xhat = (a.data - mu) / s
    data = xhat * gamma.data + beta.data

    def vjp(g):
        dxhat = g * gamma.data
        if training:
            guarded = var <= NORM_EPS
            m1 = dxhat.mean(axis=(0, 1))
            m2 = (dxhat * xhat).mean(axis=(0, 1))
            ga = (dxhat - m1 - xhat * np.where(guarded, 0.0, m2)) / s
        else:
            ga = dxhat / s
        return [(a, ga),
                (gamma, (g * xhat).sum(axis=(0, 1))),
                (beta, g.sum(axis=(0, 1)))]

    return _make(data, (a, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# sampling / scatter


def bilinear_warp(a, rows, cols):
    """Bilinear sample of an [H, W, C] map at fractional (row, col) grids.

    Out-of-bounds samples are zero.  Differentiable in the map only;
    the sample grid is fixed.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    h, w, _ = a.shape
    x = np.ascontiguousarray(a.data)
    data = K.bilinear_gather(x, rows, cols)

    def vjp(g):
        return [(a, K.bilinear_scatter(np.ascontiguousarray(g), rows, cols, h, w))]

    return _make(data, (a,), vjp)


def gather_cells(a, rows, cols):
    """Pick [n, C] channel vectors at integer (row, col) cells."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    data = a.data[rows, cols].copy()

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, cols), g)
        return [(a, ga)]

    return _make(data, (a,), vjp)


def scatter_cells(vals, rows, cols, h, w):
    """Place [n, C] channel vectors into a zero [h, w, C] map at unique cells."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    data = np.zeros((h, w, vals.shape[-1]))
    data[rows, cols] = vals.data

    def vjp(g):
        return [(vals, g[rows, cols].copy())]

    return _make(data, (vals,), vjp)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction; gradients are zeroed after each step."""

    def __init__(self, params, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter {name!r} has no gradient buffer")
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# checkpoint format: magic, then per-record
#   name_len u16 | name utf-8 | rank u8 | extents u32 each | f64 LE payload

CHECKPOINT_MAGIC = b"COREW01"


def save_checkpoint(path, entries):
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, arr in entries.items():
            nb = name.encode("utf-8")
            a = np.asarray(arr, dtype="<f8")  # not ascontiguousarray: keep 0-d rank
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", a.ndim))
            if a.ndim:
                fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def load_checkpoint(path):
    entries = {}
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic: {magic!r}")
        while True:
            head = fh.read(2)
            if not head:
                break
            (nlen,) = struct.unpack("<H", head)
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            count = int(np.prod(shape)) if rank else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise ValueError(f"truncated checkpoint record for {name!r}")
            entries[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return entries
