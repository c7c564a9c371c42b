"""Dense NCHW tensor kernels.

Tensors are plain ``numpy.ndarray`` values of rank 4 laid out as
``(batch, channels, rows, cols)``. Every kernel here is a pure function: it
never mutates its inputs and keeps the floating dtype of its inputs, so the
same code runs in float32 for training and float64 for gradient checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ShapeError

DEFAULT_DTYPE = np.float32
LEAKY_SLOPE = 0.05


def as_tensor(x, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a contiguous 4-D floating array."""
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(DEFAULT_DTYPE)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4-D NCHW tensor, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class ConvWeights:
    """Convolution kernel ``(c_out, c_in, k, k)`` and bias ``(c_out,)``.

    The fields may hold autograd nodes instead of arrays when the layer is
    being differentiated.
    """

    kernel: object
    bias: object

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(_value(self.kernel).shape)

    @property
    def c_out(self) -> int:
        return self.shape[0]

    @property
    def c_in(self) -> int:
        return self.shape[1]

    @property
    def k(self) -> int:
        return self.shape[2]


def _value(x):
    return getattr(x, "value", x)


def _check_conv(x: np.ndarray, w: ConvWeights, pad: int | None) -> int:
    c_out, c_in, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"kernel must be square with odd size, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise ConfigError(f"conv expects {c_in} input channels, got {x.shape[1]}")
    if _value(w.bias).shape != (c_out,):
        raise ConfigError(f"bias shape {_value(w.bias).shape} does not match {c_out} filters")
    same = (kh - 1) // 2
    if pad is None:
        return same
    if pad != same:
        raise ConfigError(f"pad must be {same} for a {kh}x{kh} kernel (stride 1, same size)")
    return pad


def im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Unfold ``x`` into rows of ``(k * k * c)`` patch values, one per output site.

    Rows are ordered ``(n, y, x)`` and each patch vector ``(dy, dx, c)``, which
    matches :func:`kernel_matrix`. Working channels-last keeps the copy
    contiguous along its innermost axis.
    """
    n, c, h, w = x.shape
    nhwc = x.transpose(0, 2, 3, 1)
    if k == 1:
        return nhwc.reshape(n * h * w, c)
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), x.dtype)
    xp[:, pad:pad + h, pad:pad + w] = nhwc
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # win: (n, h, w, c, k, k)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, k * k * c)


def kernel_matrix(kernel: np.ndarray) -> np.ndarray:
    """``(c_out, c_in, k, k)`` kernel as a ``(c_out, k * k * c_in)`` matrix."""
    return kernel.transpose(0, 2, 3, 1).reshape(kernel.shape[0], -1)


def conv2d_with_cols(x: np.ndarray, w: ConvWeights,
                     pad: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """:func:`conv2d` that also returns its im2col matrix, for reuse in backward."""
    pad = _check_conv(x, w, pad)
    kernel, bias = _value(w.kernel), _value(w.bias)
    n, _, h, wd = x.shape
    cols = im2col(x, w.k, pad)
    out = cols @ kernel_matrix(kernel).T
    out += bias
    return np.ascontiguousarray(out.reshape(n, h, wd, w.c_out).transpose(0, 3, 1, 2)), cols


def conv2d(x: np.ndarray, w: ConvWeights, pad: int | None = None) -> np.ndarray:
    """Stride-1, zero-padded, size-preserving cross-correlation via im2col + GEMM."""
    return conv2d_with_cols(x, w, pad)[0]


def conv2d_naive(x: np.ndarray, w: ConvWeights, pad: int | None = None) -> np.ndarray:
    """Reference convolution: explicit loops over filters, channels and taps."""
    pad = _check_conv(x, w, pad)
    kernel, bias = _value(w.kernel), _value(w.bias)
    n, c_in, h, wd = x.shape
    k = w.k
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty((n, w.c_out, h, wd), dtype=np.result_type(x, kernel))
    for b in range(n):
        for o in range(w.c_out):
            acc = np.full((h, wd), bias[o], dtype=out.dtype)
            for ci in range(c_in):
                for dy in range(k):
                    for dx in range(k):
                        acc += kernel[o, ci, dy, dx] * xp[b, ci, dy:dy + h, dx:dx + wd]
            out[b, o] = acc
    return out


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    if not 0.0 <= slope < 1.0:
        raise ConfigError(f"slope must lie in [0, 1), got {slope}")
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange ``(n, c*r*r, h, w)`` into ``(n, c, h*r, w*r)``.

    Input channel ``c*r*r + dy*r + dx`` lands in output channel ``c`` at
    spatial offset ``(dy, dx)`` of each ``r x r`` cell.
    """
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ConfigError(f"{c} channels cannot be shuffled by factor {r}")
    oc = c // (r * r)
    y = x.reshape(n, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, oc, h * r, w * r))


def pixel_unshuffle(y: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`pixel_shuffle`."""
    n, c, hr, wr = y.shape
    if hr % r or wr % r:
        raise ConfigError(f"spatial size {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    x = y.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(x.reshape(n, c * r * r, h, w))


def concat_channels(xs) -> np.ndarray:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"cannot concat {xs[0].shape} with {t.shape}")
    if len(xs) == 1:
        return xs[0].copy()
    return np.concatenate(xs, axis=1)


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"cannot add {x.shape} and {y.shape}")
    return x + y


def channel_stats_pool(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-(n, c) spatial mean and population standard deviation.

    Both results keep a ``(n, c, 1, 1)`` shape so they broadcast over the map.
    """
    mean = x.mean(axis=(2, 3), keepdims=True)
    var = ((x - mean) ** 2).mean(axis=(2, 3), keepdims=True)
    return mean, np.sqrt(var)


# --------------------------------------------------------------------------
# bicubic resampling


def cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _as_fraction(scale) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    if isinstance(scale, int):
        return Fraction(scale)
    return Fraction(scale).limit_denominator(10_000)


def resize_weights(in_len: int, scale, antialias: bool = True,
                   edge: str = "clamp") -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and normalized weights for resizing one axis.

    Returns ``(indices, weights)``, both shaped ``(out_len, taps)``. Output
    site ``i`` (0-based) samples input coordinate
    ``(i + 0.5) / scale - 0.5``; when shrinking with ``antialias`` the kernel
    is stretched by ``1 / scale``.
    """
    s = _as_fraction(scale)
    if s <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    out_len = math.ceil(in_len * s)
    sf = float(s)
    stretch = antialias and sf < 1
    width = 4.0 / sf if stretch else 4.0
    centers = (np.arange(out_len) + 0.5) / sf - 0.5
    taps = int(math.ceil(width)) + 2
    left = np.floor(centers - width / 2)
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = centers[:, None] - idx
    if stretch:
        wts = sf * cubic(sf * dist)
    else:
        wts = cubic(dist)
    wts = wts / wts.sum(axis=1, keepdims=True)
    idx = idx.astype(np.int64)
    if edge == "clamp":
        idx = np.clip(idx, 0, in_len - 1)
    elif edge == "symmetric":
        period = 2 * in_len
        m = np.mod(idx, period)
        idx = np.where(m < in_len, m, period - 1 - m)
    else:
        raise ConfigError(f"unknown edge mode {edge!r}")
    return idx, wts


def _resize_axis(x: np.ndarray, axis: int, scale, antialias: bool, edge: str) -> np.ndarray:
    idx, wts = resize_weights(x.shape[axis], scale, antialias, edge)
    moved = np.moveaxis(x, axis, -1)
    out = np.einsum("...ot,ot->...o", moved[..., idx], wts.astype(x.dtype))
    return np.moveaxis(out, -1, axis)


def bicubic_resize(img: np.ndarray, scale, antialias: bool = True,
                   edge: str = "clamp") -> np.ndarray:
    """Separable bicubic resize of an NCHW tensor by a rational factor.

    Rows are resampled first, then columns. Edge pixels are replicated
    (``edge="clamp"``); ``edge="symmetric"`` mirrors instead.
    """
    if _as_fraction(scale) <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    out = _resize_axis(img, 2, scale, antialias, edge)
    out = _resize_axis(out, 3, scale, antialias, edge)
    return np.ascontiguousarray(out)
