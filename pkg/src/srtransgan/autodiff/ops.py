"""Differentiable operators over :class:`~srtransgan.autodiff.tensor.Tensor`.

Each function computes its forward value with numpy and, when an input is
tracked, attaches a closure mapping the output gradient to input gradients.
Image tensors are row-major ``(N, C, H, W)``. Convolutions use the
cross-correlation convention (the kernel is not flipped).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import DimensionError, NumericDomainError
from .tensor import Tensor, as_tensor, make_result

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _is_scalar(b) -> bool:
    if isinstance(b, Tensor):
        return False
    return np.ndim(b) == 0


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _first_bad_index(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(mask)[0])


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a)
    if _is_scalar(b):
        return make_result(a.data + a.dtype.type(b), (a,), lambda g: (g,), "add")
    b = as_tensor(b)
    _check_same_shape(a, b, "add")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    if _is_scalar(b):
        return make_result(a.data - a.dtype.type(b), (a,), lambda g: (g,), "sub")
    b = as_tensor(b)
    _check_same_shape(a, b, "sub")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if _is_scalar(b):
        return scale(a, b)
    b = as_tensor(b)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b) -> Tensor:
    a = as_tensor(a)
    if _is_scalar(b):
        if b == 0:
            raise NumericDomainError("div: division by zero scalar")
        return scale(a, 1.0 / b)
    b = as_tensor(b)
    _check_same_shape(a, b, "div")
    bd = b.data
    zero = bd == 0
    if zero.any():
        raise NumericDomainError("div: zero divisor", _first_bad_index(zero))
    out = a.data / bd
    return make_result(out, (a, b), lambda g: (g / bd, -g * out / bd), "div")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = a.dtype.type(c)
    return make_result(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a) -> Tensor:
    return scale(a, -1.0)


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    sign = np.sign(a.data)
    return make_result(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def log(a) -> Tensor:
    a = as_tensor(a)
    bad = ~(a.data > 0)
    if bad.any():
        raise NumericDomainError("log: non-positive argument", _first_bad_index(bad))
    ad = a.data
    return make_result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a) -> Tensor:
    """``log(1 + exp(a))`` evaluated without overflow."""
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    return make_result(out, (a,), lambda g: (g * _stable_sigmoid(x),), "softplus")


def gelu(a) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with Phi the standard normal CDF via erf."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    cdf = cdf.astype(x.dtype, copy=False)

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return make_result(x * cdf, (a,), backward, "gelu")


def mul_along_axis(a, v, axis: int) -> Tensor:
    """Multiply ``a`` by the vector ``v`` broadcast along ``axis``."""
    a, v = as_tensor(a), as_tensor(v)
    ax = axis % a.ndim
    if v.shape != (a.shape[ax],):
        raise DimensionError(f"mul_along_axis: vector {v.shape} vs extent {a.shape[ax]}")
    bshape = [1] * a.ndim
    bshape[ax] = -1
    ad, vd = a.data, v.data.reshape(bshape)
    other = tuple(i for i in range(a.ndim) if i != ax)
    return make_result(ad * vd, (a, v), lambda g: (g * vd, (g * ad).sum(axis=other)), "mul_along_axis")


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return make_result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def dropout(a, rate: float, rng, training: bool = True) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or not training."""
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    keep = rng.uniform(size=a.shape) >= rate
    mask = keep.astype(a.dtype) / a.dtype.type(1.0 - rate)
    return make_result(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# --------------------------------------------------------------------------
# reductions and shape manipulation


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(out, dtype=a.dtype), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return make_result(out, (a,), lambda g: (g.transpose(inverse),), "transpose")


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if len(xs) == 1:
        return xs[0]
    ref = list(xs[0].shape)
    ax = axis % len(ref)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or other[:ax] + other[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise DimensionError(f"concat: incompatible shapes {tuple(ref)} and {x.shape} on axis {axis}")
    sizes = [x.shape[ax] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return [np.take(g, range(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(xs))]

    return make_result(np.concatenate([x.data for x in xs], axis=ax), xs, backward, "concat")


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Stack ``(N, Ci, H, W)`` tensors along the channel axis."""
    for x in xs:
        if x.ndim != 4:
            raise DimensionError(f"concat_channels expects 4-D tensors, got {x.shape}")
    return concat(xs, axis=1)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    a = as_tensor(a)
    ax = axis % a.ndim
    if start < 0 or start + length > a.shape[ax]:
        raise DimensionError(f"narrow: [{start}, {start + length}) out of range for extent {a.shape[ax]}")
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, start + length)
    index = tuple(index)
    shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return make_result(np.ascontiguousarray(a.data[index]), (a,), backward, "narrow")


def split(a, sizes: Sequence[int], axis: int) -> list[Tensor]:
    out, start = [], 0
    for s in sizes:
        out.append(narrow(a, axis, start, s))
        start += s
    return out


# --------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product ``[..., M, K] x [..., K, P] -> [..., M, P]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner extents differ ({a.shape[-1]} vs {b.shape[-2]})")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch extents differ ({a.shape[:-2]} vs {b.shape[:-2]})")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g)

    return make_result(ad @ bd, (a, b), backward, "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """``x[..., D] @ weight[D, E] + bias[E]`` with the weight shared over leading axes."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1]} vs weight {weight.shape}")
    xd, wd = x.data, weight.data
    flat = xd.reshape(-1, xd.shape[-1])
    out = flat @ wd
    if bias is not None:
        out = out + bias.data
    out = out.reshape(xd.shape[:-1] + (wd.shape[1],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        grads = [(g2 @ wd.T).reshape(xd.shape), flat.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_result(out, parents, backward, "linear")


# --------------------------------------------------------------------------
# normalisation and attention primitives


def softmax_lastdim(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    finite = np.isfinite(x)
    if not finite.all():
        raise NumericDomainError("softmax: non-finite input", _first_bad_index(~finite))
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (a,), backward, "softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Normalise each slice along ``axis`` to zero mean and unit variance, then ``gamma * xhat + beta``.

    The default normalises the last dimension. ``axis=1`` normalises the
    channels of an ``(N, C, H, W)`` feature map at every pixel.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    ax = axis % x.ndim
    d = x.shape[ax]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs width {d}")
    bshape = [1] * x.ndim
    bshape[ax] = d
    gd = gamma.data.reshape(bshape)
    bd = beta.data.reshape(bshape)
    xd = x.data
    mu = xd.mean(axis=ax, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    other_axes = tuple(i for i in range(x.ndim) if i != ax)

    def backward(g):
        dxhat = g * gd
        m1 = dxhat.mean(axis=ax, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=ax, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return (dx, (g * xhat).sum(axis=other_axes), g.sum(axis=other_axes))

    return make_result(xhat * gd + bd, (x, gamma, beta), backward, "layer_norm")


def l2_normalize_lastdim(a, eps: float = 1e-12) -> Tensor:
    """``x / sqrt(sum(x**2) + eps**2)`` along the last axis; smooth at zero."""
    a = as_tensor(a)
    x = a.data
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True) + x.dtype.type(eps * eps))
    out = x / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=-1, keepdims=True)) / norm,)

    return make_result(out, (a,), backward, "l2_normalize")


# --------------------------------------------------------------------------
# convolution family


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _out_extent(n: int, k: int, stride: int, pad: int, axis: str) -> int:
    span = n + 2 * pad - k
    if span < 0 or span % stride:
        raise DimensionError(f"conv2d: {axis} extent {n} with kernel {k}, pad {pad}, stride {stride} is not integral")
    return span // stride + 1


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation ``(N, Cin, H, W) * (Cout, Cin, k, k) -> (N, Cout, H', W')``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise DimensionError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d: kernel must be square and odd, got {kh}x{kw}")
    k = kh
    ho = _out_extent(h, k, stride, pad, "height")
    wo = _out_extent(w, k, stride, pad, "width")
    xd, wd = x.data, weight.data
    wmat = wd.reshape(cout, cin * k * k)

    if k == 1 and stride == 1 and pad == 0:
        # pointwise fast path
        cols = xd.transpose(0, 2, 3, 1).reshape(-1, cin)
    else:
        xp = _pad_hw(xd, pad)
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * k * k)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (gm.T @ cols).reshape(wd.shape)
        gcols = gm @ wmat
        if k == 1 and stride == 1 and pad == 0:
            gx = gcols.reshape(n, h, w, cin).transpose(0, 3, 1, 2)
        else:
            gcols = gcols.reshape(n, ho, wo, cin, k, k)
            gxp = np.zeros((n, cin, h + 2 * pad, w + 2 * pad), dtype=xd.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        return grads

    return make_result(out, parents, backward, "conv2d")


def depthwise_conv2d(x, weight, bias=None, pad: int | None = None) -> Tensor:
    """Per-channel 2-D cross-correlation ``(N, C, H, W) * (C, 1, k, k)``, shape preserving."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"depthwise_conv2d expects 4-D tensors, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    if weight.shape[0] != c or weight.shape[1] != 1:
        raise DimensionError(f"depthwise_conv2d: weight {weight.shape} does not match {c} channels")
    k = weight.shape[2]
    if weight.shape[3] != k or k % 2 == 0:
        raise DimensionError(f"depthwise_conv2d: kernel must be square and odd, got {weight.shape[2:]}")
    if pad is None:
        pad = (k - 1) // 2
    if 2 * pad != k - 1:
        raise DimensionError("depthwise_conv2d: pad must equal (k - 1) / 2")
    xd, wd = x.data, weight.data
    xp = _pad_hw(xd, pad)
    out = np.zeros_like(xd)
    for i in range(k):
        for j in range(k):
            out += xp[:, :, i:i + h, j:j + w] * wd[:, 0, i, j][None, :, None, None]
    if bias is not None:
        out += bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + h, j:j + w] += g * wd[:, 0, i, j][None, :, None, None]
                gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, i:i + h, j:j + w])
        grads = [np.ascontiguousarray(gxp[:, :, pad:pad + h, pad:pad + w]), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result(out, parents, backward, "depthwise_conv2d")


def _shuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    oc = c // (r * r)
    return x.reshape(n, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, oc, h * r, w * r)


def _unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(a, r: int) -> Tensor:
    """``(N, C*r*r, H, W) -> (N, C, r*H, r*W)`` sub-pixel rearrangement."""
    a = as_tensor(a)
    if a.ndim != 4 or a.shape[1] % (r * r):
        raise DimensionError(f"pixel_shuffle: channels of {a.shape} not divisible by {r * r}")
    return make_result(np.ascontiguousarray(_shuffle(a.data, r)), (a,),
                       lambda g: (np.ascontiguousarray(_unshuffle(g, r)),), "pixel_shuffle")


def pixel_unshuffle(a, r: int) -> Tensor:
    """Exact inverse of :func:`pixel_shuffle`."""
    a = as_tensor(a)
    if a.ndim != 4 or a.shape[2] % r or a.shape[3] % r:
        raise DimensionError(f"pixel_unshuffle: spatial extents of {a.shape} not divisible by {r}")
    return make_result(np.ascontiguousarray(_unshuffle(a.data, r)), (a,),
                       lambda g: (np.ascontiguousarray(_shuffle(g, r)),), "pixel_unshuffle")


def extract_patches(img, k: int, stride_h: int, stride_w: int) -> Tensor:
    """Flatten overlapping ``k x k`` patches of ``(N, C, M, M')`` into ``(N, Np, C*k*k)``.

    Patches are scanned row-major over the image; each patch is flattened
    channel-major, then row-major within the channel.
    """
    img = as_tensor(img)
    if img.ndim != 4:
        raise DimensionError(f"extract_patches expects (N, C, H, W), got {img.shape}")
    n, c, h, w = img.shape
    if k > h or k > w:
        raise DimensionError(f"extract_patches: patch {k} larger than image {h}x{w}")
    if (h - k) % stride_h or (w - k) % stride_w:
        raise DimensionError(f"extract_patches: strides ({stride_h}, {stride_w}) do not tile {h}x{w} with patch {k}")
    ph = (h - k) // stride_h + 1
    pw = (w - k) // stride_w + 1
    xd = img.data
    win = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::stride_h, ::stride_w]
    out = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ph * pw, c * k * k)

    def backward(g):
        g6 = g.reshape(n, ph, pw, c, k, k)
        gx = np.zeros_like(xd)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + stride_h * ph:stride_h, j:j + stride_w * pw:stride_w] += g6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return (gx,)

    return make_result(np.ascontiguousarray(out), (img,), backward, "extract_patches")


def separable_resample(x, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply fixed linear maps along the last two axes: ``rows @ x @ cols.T``.

    ``rows`` has shape ``(H', H)`` and ``cols`` ``(W', W)``. Arithmetic runs in
    float64 and is cast back to the input dtype.
    """
    x = as_tensor(x)
    if x.shape[-2] != rows.shape[1] or x.shape[-1] != cols.shape[1]:
        raise DimensionError(f"separable_resample: maps {rows.shape}/{cols.shape} vs input {x.shape}")
    dtype = x.dtype
    out = np.matmul(np.matmul(rows, x.data.astype(np.float64)), cols.T).astype(dtype)

    def backward(g):
        return (np.matmul(np.matmul(rows.T, g.astype(np.float64)), cols).astype(dtype),)

    return make_result(out, (x,), backward, "resample")
