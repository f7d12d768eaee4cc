"""Minimal reverse-mode autodiff over 4-D [N, C, H, W] arrays.

Every value in the engine is a dense 4-D tensor; scalars are [1, 1, 1, 1].
Operations record backward rules onto the active :class:`Tape`, and
``Tape.backward`` replays them in reverse recording order. There is no
general broadcasting: elementwise ops require equal shapes, with the single
exception that one operand may be scalar-shaped.

Training runs in float32; gradient checking rebuilds the same graphs in
float64 so finite-difference tolerances are meaningful.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


class GraphError(RuntimeError):
    """Raised on autograd misuse (non-scalar loss, missing gradient)."""


_TLS = threading.local()


def _tape_stack():
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = _TLS.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A 4-D array with an optional gradient buffer.

    ``data`` is always a C-contiguous float array of shape [N, C, H, W].
    Gradients accumulate into ``grad`` across backward calls until
    ``zero_grad`` clears them.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensor data must be 4-D [N,C,H,W], got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def numel(self):
        return self.data.size

    def is_scalar(self):
        return self.data.shape == (1, 1, 1, 1)

    def item(self):
        if not self.is_scalar():
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0, 0, 0])

    def detach(self):
        """A view of the same data that is cut off from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        return out

    def zero_grad(self):
        self.grad = None

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self):
        return (f"Tensor(shape={self.shape}, dtype={self.data.dtype}, "
                f"requires_grad={self.requires_grad})")

    # arithmetic sugar; python scalars go through scalar_affine
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return scalar_affine(self, 1.0, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return scalar_affine(self, 1.0, -float(other))

    def __rsub__(self, other):
        return scalar_affine(self, -1.0, float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_affine(self, float(other), 0.0)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return scalar_affine(self, 1.0 / float(other), 0.0)

    def __neg__(self):
        return scalar_affine(self, -1.0, 0.0)


def zeros(shape, requires_grad=False, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def full(shape, value, requires_grad=False, dtype=np.float32):
    return Tensor(np.full(shape, value, dtype=dtype), requires_grad=requires_grad)


def scalar(value, requires_grad=False, dtype=np.float32):
    return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype), requires_grad=requires_grad)


class Tape:
    """Ordered record of executed operations.

    Used as a context manager around a forward pass; ``backward`` replays the
    recorded rules in reverse order. Gradients of intermediate (recorded)
    tensors are transient per backward call, while leaf gradients accumulate
    across calls.
    """

    def __init__(self):
        self._records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out, backward_fn):
        self._records.append((out, backward_fn))

    def backward(self, loss):
        if not isinstance(loss, Tensor) or not loss.is_scalar():
            raise GraphError("backward requires a scalar [1,1,1,1] loss tensor")
        # transient grads from a previous replay must not leak into this one
        for out, _ in self._records:
            out.grad = None
        loss.grad = np.ones((1, 1, 1, 1), dtype=loss.dtype)
        for out, fn in reversed(self._records):
            if out.grad is not None:
                fn(out.grad)


def backward(loss, tape):
    tape.backward(loss)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _finish(out, inputs, backward_fn):
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, backward_fn)
    return out


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        for axis, (da, db) in enumerate(zip(a.shape, b.shape)):
            if da != db:
                raise ShapeError(
                    f"{op}: operands disagree on axis {axis}: {da} vs {db} "
                    f"(shapes {a.shape} and {b.shape})")


# ---------------------------------------------------------------------------
# elementwise ops (equal shapes, or one scalar-shaped operand)
# ---------------------------------------------------------------------------

def _binary_shapes(op, x, y):
    """Returns (x_is_scalar, y_is_scalar) after validating the shape contract."""
    xs, ys = x.is_scalar(), y.is_scalar()
    if not xs and not ys:
        _check_same_shape(op, x, y)
    return xs, ys


def _reduce_to(g, is_scalar_operand):
    if is_scalar_operand:
        return g.sum(dtype=g.dtype).reshape(1, 1, 1, 1)
    return g


def add(x, y):
    xs, ys = _binary_shapes("add", x, y)
    out = Tensor(x.data + y.data)

    def bwd(g):
        _accumulate(x, _reduce_to(g, xs and not ys))
        _accumulate(y, _reduce_to(g, ys and not xs))

    return _finish(out, (x, y), bwd)


def sub(x, y):
    xs, ys = _binary_shapes("sub", x, y)
    out = Tensor(x.data - y.data)

    def bwd(g):
        _accumulate(x, _reduce_to(g, xs and not ys))
        _accumulate(y, _reduce_to(-g, ys and not xs))

    return _finish(out, (x, y), bwd)


def mul(x, y):
    xs, ys = _binary_shapes("mul", x, y)
    out = Tensor(x.data * y.data)

    def bwd(g):
        _accumulate(x, _reduce_to(g * y.data, xs and not ys))
        _accumulate(y, _reduce_to(g * x.data, ys and not xs))

    return _finish(out, (x, y), bwd)


def div(x, y):
    xs, ys = _binary_shapes("div", x, y)
    out = Tensor(x.data / y.data)

    def bwd(g):
        _accumulate(x, _reduce_to(g / y.data, xs and not ys))
        _accumulate(y, _reduce_to(-g * x.data / (y.data * y.data), ys and not xs))

    return _finish(out, (x, y), bwd)


def scalar_affine(x, scale, shift):
    """y = scale * x + shift with python-float coefficients."""
    scale = float(scale)
    out = Tensor(x.data * x.dtype.type(scale) + x.dtype.type(shift))

    def bwd(g):
        _accumulate(x, g * x.dtype.type(scale))

    return _finish(out, (x,), bwd)


def abs_(x):
    out = Tensor(np.abs(x.data))

    def bwd(g):
        # subgradient 0 at x == 0
        _accumulate(x, g * np.sign(x.data))

    return _finish(out, (x,), bwd)


def leaky_relu(x, slope=0.1):
    if slope < 0:
        raise ValueError(f"leaky_relu slope must be >= 0, got {slope}")
    positive = x.data >= 0
    out = Tensor(np.where(positive, x.data, x.dtype.type(slope) * x.data))

    def bwd(g):
        _accumulate(x, g * np.where(positive, x.dtype.type(1), x.dtype.type(slope)))

    return _finish(out, (x,), bwd)


def softplus(x):
    """log(1 + exp(x)), computed stably; derivative is the logistic sigmoid."""
    d = x.data
    out = Tensor(np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d))))

    def bwd(g):
        sig = 1.0 / (1.0 + np.exp(-d))
        _accumulate(x, g * sig.astype(d.dtype))

    return _finish(out, (x,), bwd)


def clamp(x, lo=0.0, hi=1.0):
    out = Tensor(np.clip(x.data, lo, hi))

    def bwd(g):
        inside = (x.data >= lo) & (x.data <= hi)
        _accumulate(x, g * inside.astype(x.dtype))

    return _finish(out, (x,), bwd)


def mean_all(x):
    """Mean over every element, as a scalar [1,1,1,1] tensor."""
    out = Tensor(np.asarray(x.data.mean(dtype=x.dtype)).reshape(1, 1, 1, 1))
    inv_n = 1.0 / x.numel

    def bwd(g):
        _accumulate(x, np.full(x.shape, g[0, 0, 0, 0] * inv_n, dtype=x.dtype))

    return _finish(out, (x,), bwd)


# ---------------------------------------------------------------------------
# structure ops
# ---------------------------------------------------------------------------

def concat_channels(parts):
    """Concatenate along the channel axis; all parts must share N, H, W."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_channels: empty input list")
    n, _, h, w = parts[0].shape
    for i, p in enumerate(parts[1:], start=1):
        pn, _, ph, pw = p.shape
        if (pn, ph, pw) != (n, h, w):
            raise ShapeError(
                f"concat_channels: part {i} has [N,H,W]=({pn},{ph},{pw}), "
                f"expected ({n},{h},{w})")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    sizes = [p.shape[1] for p in parts]

    def bwd(g):
        start = 0
        for p, c in zip(parts, sizes):
            _accumulate(p, g[:, start:start + c])
            start += c

    return _finish(out, tuple(parts), bwd)


def slice_channels(x, start, stop):
    c = x.shape[1]
    if not (0 <= start < stop <= c):
        raise ShapeError(f"slice_channels: [{start},{stop}) out of range for C={c}")
    out = Tensor(x.data[:, start:stop].copy())

    def bwd(g):
        gx = np.zeros(x.shape, dtype=x.dtype)
        gx[:, start:stop] = g
        _accumulate(x, gx)

    return _finish(out, (x,), bwd)


def pixel_shuffle(x, r):
    """Rearrange r*r channel groups into an r-times larger spatial grid.

    out[n, c, h*r + a, w*r + b] = in[n, c*r*r + a*r + b, h, w]
    """
    n, c, h, w = x.shape
    if r < 1 or c % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: C={c} not divisible by r^2={r * r}")
    co = c // (r * r)
    out_data = (x.data.reshape(n, co, r, r, h, w)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, co, h * r, w * r))
    out = Tensor(out_data)

    def bwd(g):
        gx = (g.reshape(n, co, h, r, w, r)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(n, c, h, w))
        _accumulate(x, np.ascontiguousarray(gx))

    return _finish(out, (x,), bwd)


def space_to_depth(x, r):
    """Exact inverse of pixel_shuffle with the same index convention."""
    n, c, h, w = x.shape
    if r < 1 or h % r != 0 or w % r != 0:
        raise ShapeError(f"space_to_depth: H={h}, W={w} not divisible by r={r}")
    ho, wo = h // r, w // r
    out_data = (x.data.reshape(n, c, ho, r, wo, r)
                .transpose(0, 1, 3, 5, 2, 4)
                .reshape(n, c * r * r, ho, wo))
    out = Tensor(out_data)

    def bwd(g):
        gx = (g.reshape(n, c, r, r, ho, wo)
              .transpose(0, 1, 4, 2, 5, 3)
              .reshape(n, c, h, w))
        _accumulate(x, np.ascontiguousarray(gx))

    return _finish(out, (x,), bwd)


def nearest_upsample(x, r):
    """Repeat every pixel into an r-by-r block."""
    if r < 1:
        raise ShapeError(f"nearest_upsample: r must be >= 1, got {r}")
    n, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, r, axis=2), r, axis=3))

    def bwd(g):
        _accumulate(x, g.reshape(n, c, h, r, w, r).sum(axis=(3, 5)))

    return _finish(out, (x,), bwd)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

# "direct" is the auditable reference; "im2col" is the blocked fast path and
# must stay bit-comparable (tested to 1e-5 relative). The backend is a global
# switch so a run never mixes the two silently.
_CONV_BACKENDS = ("im2col", "direct")
_conv_backend = "im2col"


def set_conv_backend(name):
    global _conv_backend
    if name not in _CONV_BACKENDS:
        raise ValueError(f"unknown conv backend {name!r}; choose from {_CONV_BACKENDS}")
    _conv_backend = name


def get_conv_backend():
    return _conv_backend


def _conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _conv_check(x, weight, bias, stride, pad):
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(
            f"conv2d: input channel axis is {cin} but weight expects {wcin}")
    if kh not in (1, 3) or kw not in (1, 3):
        raise ShapeError(f"conv2d: kernel must be 1x1 or 3x3, got {kh}x{kw}")
    if bias.shape != (1, cout, 1, 1):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} must be (1,{cout},1,1)")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} pad={pad}")
    oh = _conv_out_size(h, kh, stride, pad)
    ow = _conv_out_size(w, kw, stride, pad)
    if oh <= 0 or ow <= 0:
        raise ShapeError(
            f"conv2d: non-positive output size {oh}x{ow} for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}")
    return n, cin, h, w, cout, kh, kw, oh, ow


def _pad_input(x_data, pad):
    if pad == 0:
        return x_data
    return np.pad(x_data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(x_pad, kh, kw, stride, oh, ow):
    n, c = x_pad.shape[:2]
    s0, s1, s2, s3 = x_pad.strides
    return np.lib.stride_tricks.as_strided(
        x_pad,
        shape=(n, c, kh, kw, oh, ow),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )


def conv2d(x, weight, bias, stride=1, pad=0):
    """2-D cross-correlation with per-channel bias.

    weight is [Cout, Cin, kh, kw], bias is [1, Cout, 1, 1]. Output spatial
    size is (H + 2*pad - kh) // stride + 1 per axis.
    """
    n, cin, h, w, cout, kh, kw, oh, ow = _conv_check(x, weight, bias, stride, pad)
    if _conv_backend == "im2col":
        return _conv2d_im2col(x, weight, bias, stride, pad, oh, ow)
    return _conv2d_direct(x, weight, bias, stride, pad, oh, ow)


def _conv2d_im2col(x, weight, bias, stride, pad, oh, ow):
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    x_pad = _pad_input(x.data, pad)
    win = _windows(x_pad, kh, kw, stride, oh, ow)
    # materialize the column matrix once; forward and both weight/input
    # gradients are then plain matrix products against it
    cols = np.ascontiguousarray(win).reshape(n, cin * kh * kw, oh * ow)
    w_mat = weight.data.reshape(cout, cin * kh * kw)
    out_data = np.matmul(w_mat, cols).reshape(n, cout, oh, ow) + bias.data
    out = Tensor(out_data)

    def bwd(g):
        g_mat = g.reshape(n, cout, oh * ow)
        if weight.requires_grad:
            gw = np.matmul(g_mat, cols.swapaxes(1, 2)).sum(axis=0)
            _accumulate(weight, gw.reshape(cout, cin, kh, kw))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))
        if x.requires_grad:
            gcols = np.matmul(w_mat.T, g_mat)
            gcols = gcols.reshape(n, cin, kh, kw, oh, ow)
            gxp = np.zeros_like(x_pad)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * oh:stride,
                        j:j + stride * ow:stride] += gcols[:, :, i, j]
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
            _accumulate(x, np.ascontiguousarray(gx))

    return _finish(out, (x, weight, bias), bwd)


def _conv2d_direct(x, weight, bias, stride, pad, oh, ow):
    # reference path: explicit loops over output positions
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    x_pad = _pad_input(x.data, pad)
    out_data = np.empty((n, cout, oh, ow), dtype=x.dtype)
    for bi in range(n):
        for co in range(cout):
            for i in range(oh):
                for j in range(ow):
                    patch = x_pad[bi, :, i * stride:i * stride + kh,
                                  j * stride:j * stride + kw]
                    out_data[bi, co, i, j] = np.sum(patch * weight.data[co])
    out_data += bias.data
    out = Tensor(out_data)

    def bwd(g):
        gxp = np.zeros_like(x_pad)
        gw = np.zeros_like(weight.data)
        for bi in range(n):
            for co in range(cout):
                for i in range(oh):
                    for j in range(ow):
                        go = g[bi, co, i, j]
                        patch = x_pad[bi, :, i * stride:i * stride + kh,
                                      j * stride:j * stride + kw]
                        gw[co] += go * patch
                        gxp[bi, :, i * stride:i * stride + kh,
                            j * stride:j * stride + kw] += go * weight.data[co]
        if weight.requires_grad:
            _accumulate(weight, gw)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))
        if x.requires_grad:
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
            _accumulate(x, np.ascontiguousarray(gx))

    return _finish(out, (x, weight, bias), bwd)


def depthwise_filter2d(x, kernel):
    """Valid-mode correlation of every channel with one fixed 2-D kernel.

    The kernel is a plain ndarray and receives no gradient; used for the
    windowed statistics inside the structural-similarity loss.
    """
    kernel = np.asarray(kernel, dtype=x.dtype)
    if kernel.ndim != 2:
        raise ShapeError(f"depthwise_filter2d: kernel must be 2-D, got {kernel.shape}")
    kh, kw = kernel.shape
    n, c, h, w = x.shape
    if h < kh or w < kw:
        raise ShapeError(
            f"depthwise_filter2d: input {h}x{w} smaller than kernel {kh}x{kw}")
    oh, ow = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.data.strides
    win = np.lib.stride_tricks.as_strided(
        x.data, shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2, s3, s2, s3), writeable=False)
    out = Tensor(np.tensordot(win, kernel, axes=([4, 5], [0, 1])))

    def bwd(g):
        # full correlation of the padded output grad with the flipped kernel
        gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        t0, t1, t2, t3 = gp.strides
        gwin = np.lib.stride_tricks.as_strided(
            gp, shape=(n, c, h, w, kh, kw),
            strides=(t0, t1, t2, t3, t2, t3), writeable=False)
        gx = np.tensordot(gwin, kernel[::-1, ::-1], axes=([4, 5], [0, 1]))
        _accumulate(x, np.ascontiguousarray(gx))

    return _finish(out, (x,), bwd)


def instance_norm(x, eps=1e-5):
    """Per-channel, per-sample normalization over the spatial axes.

    y = (x - mean) / sqrt(var + eps) with population variance; the epsilon
    keeps constant channels finite.
    """
    mu = x.data.mean(axis=(2, 3), keepdims=True, dtype=x.dtype)
    var = x.data.var(axis=(2, 3), keepdims=True, dtype=x.dtype)
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    y = (x.data - mu) * inv_std
    out = Tensor(y)

    def bwd(g):
        g_mean = g.mean(axis=(2, 3), keepdims=True, dtype=x.dtype)
        gy_mean = (g * y).mean(axis=(2, 3), keepdims=True, dtype=x.dtype)
        _accumulate(x, (g - g_mean - y * gy_mean) * inv_std)

    return _finish(out, (x,), bwd)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(fn, inputs, h=1e-4, max_entries=None, rng=None):
    """Max relative error between tape gradients and central differences.

    ``fn`` maps the given tensors to a scalar loss. Inputs should be float64
    for the 1e-4 tolerance to be meaningful. When ``max_entries`` is set,
    only a random subset of each input's elements is perturbed.
    """
    inputs = list(inputs)
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        loss = fn(*inputs)
    tape.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros(t.shape, t.dtype)
                for t in inputs]
    for t in inputs:
        t.zero_grad()

    worst = 0.0
    for t, ga in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        flat = t.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        idx = range(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            f_plus = fn(*inputs).item()
            flat[k] = orig - h
            f_minus = fn(*inputs).item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(ga_flat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(ga_flat[k] - numeric) / denom)
    return worst
