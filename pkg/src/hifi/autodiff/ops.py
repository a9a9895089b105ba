"""Differentiable operations on NCHW float64 tensors."""

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ArgumentError, DimensionError
from .tensor import Tensor, make_result

# keeps log() finite if a softmax probability underflows to 0
PROB_FLOOR = 1e-300


def _check_nchw(x, what):
    if x.data.ndim != 4:
        raise DimensionError(f"{what}: expected NCHW (4 axes), got shape {x.shape}")


def conv2d(x, w, b=None, stride=1, pad=0):
    """Cross-correlation of ``x`` (N,C,H,W) with ``w`` (O,C,K,K) plus optional bias (O,)."""
    _check_nchw(x, "conv2d input")
    if w.data.ndim != 4:
        raise DimensionError(f"conv2d kernel: expected OIKK (4 axes), got shape {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise DimensionError(f"conv2d channel axis: input has C={c}, kernel expects I={ci}")
    if kh != kw:
        raise DimensionError(f"conv2d kernel spatial axes differ: {kh}x{kw}")
    if kh % 2 == 0:
        raise DimensionError(f"conv2d kernel spatial extent must be odd, got {kh}")
    if b is not None and b.shape != (o,):
        raise DimensionError(f"conv2d bias axis: expected ({o},), got {b.shape}")
    if stride < 1 or pad < 0:
        raise ArgumentError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    k = kh
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d spatial axes too small: {h}x{wd} with kernel {k}, pad {pad}")

    wmat = w.data.reshape(o, c * k * k)
    if k == 1 and pad == 0:
        xs = x.data[:, :, ::stride, ::stride]
        cols = xs.transpose(0, 2, 3, 1)  # N,Ho,Wo,C
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        win = win[:, :, :ho, :wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho, wo, c * k * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def _backward(g):
        go = g.transpose(0, 2, 3, 1)  # N,Ho,Wo,O
        if w.requires_grad:
            w.accumulate((go.reshape(-1, o).T @ cols.reshape(-1, c * k * k)).reshape(w.shape))
        if b is not None and b.requires_grad:
            b.accumulate(go.sum(axis=(0, 1, 2)))
        if x.requires_grad:
            dcols = go @ wmat  # N,Ho,Wo,C*K*K
            if k == 1 and pad == 0:
                dx = np.zeros_like(x.data)
                dx[:, :, ::stride, ::stride][:, :, :ho, :wo] = dcols.transpose(0, 3, 1, 2)
            else:
                dcols = dcols.reshape(n, ho, wo, c, k, k)
                dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
                for i in range(k):
                    for j in range(k):
                        dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                            dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
                dx = dxp[:, :, pad:pad + h, pad:pad + wd]
            x.accumulate(dx)

    parents = [x, w] + ([b] if b is not None else [])
    return make_result(out, parents, _backward, "conv2d")


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0.0)

    def _backward(g):
        x.accumulate(g * mask)

    return make_result(out, [x], _backward, "relu")


def maxpool2(x):
    """2x2 max-pool with stride 2. Odd spatial extents are replicate-padded first."""
    _check_nchw(x, "maxpool2 input")
    n, c, h, w = x.shape
    if h == 0 or w == 0:
        raise DimensionError(f"maxpool2 on empty spatial axes: {h}x{w}")
    ph, pw = h % 2, w % 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge") if (ph or pw) else x.data
    h2, w2 = (h + ph) // 2, (w + pw) // 2
    win = xp.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = win.argmax(axis=-1)  # first maximum in (dy, dx) row-major order
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def _backward(g):
        gw = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gp = gw.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h + ph, w + pw)
        if ph:
            gp[:, :, h - 1, :] += gp[:, :, h, :]
        if pw:
            gp[:, :, :, w - 1] += gp[:, :, :, w]
        x.accumulate(gp[:, :, :h, :w])

    return make_result(out, [x], _backward, "maxpool2")


def bilinear_kernel_1d(factor):
    """1-D taps of the fixed bilinear transposed-conv kernel (length 2f - f mod 2)."""
    size = 2 * factor - factor % 2
    half = (size + 1) // 2
    center = half - 1 if size % 2 == 1 else half - 0.5
    return 1.0 - np.abs(np.arange(size) - center) / half


@lru_cache(maxsize=256)
def _upsample_matrix(n, factor):
    taps = bilinear_kernel_1d(factor)
    pad = -(-(factor - 1) // 2)
    m = np.zeros((n * factor, n))
    for i in range(n):
        for t, v in enumerate(taps):
            o = i * factor - pad + t
            if 0 <= o < n * factor:
                m[o, i] += v
    # border rows miss taps from outside the input; renormalise so constants stay constant
    m /= m.sum(axis=1, keepdims=True)
    m.setflags(write=False)
    return m


def upsample_bilinear(x, factor):
    """Fixed bilinear transposed convolution, per channel, output ``factor`` times larger."""
    _check_nchw(x, "upsample_bilinear input")
    if factor < 2:
        raise ArgumentError(f"upsample factor must be >= 2, got {factor}")
    if factor & (factor - 1):
        raise ArgumentError(f"upsample factor must be a power of two, got {factor}")
    _, _, h, w = x.shape
    uh = _upsample_matrix(h, factor)
    uw = _upsample_matrix(w, factor)
    out = np.einsum("ih,nchw,jw->ncij", uh, x.data, uw, optimize=True)

    def _backward(g):
        x.accumulate(np.einsum("ih,ncij,jw->nchw", uh, g, uw, optimize=True))

    return make_result(out, [x], _backward, "upsample_bilinear")


def crop(x, h, w):
    """Keep the top-left ``h`` x ``w`` window."""
    _check_nchw(x, "crop input")
    H, W = x.shape[2:]
    if h > H or w > W:
        raise DimensionError(f"crop to {h}x{w} larger than input {H}x{W}")
    if (h, w) == (H, W):
        return x
    out = x.data[:, :, :h, :w].copy()

    def _backward(g):
        gp = np.zeros_like(x.data)
        gp[:, :, :h, :w] = g
        x.accumulate(gp)

    return make_result(out, [x], _backward, "crop")


def eltwise_sum(inputs):
    if not inputs:
        raise ArgumentError("eltwise_sum needs at least one input")
    shapes = [t.shape for t in inputs]
    if any(s != shapes[0] for s in shapes):
        raise DimensionError(f"eltwise_sum shape mismatch: {shapes}")
    out = inputs[0].data.copy()
    for t in inputs[1:]:
        out += t.data

    def _backward(g):
        for t in inputs:
            t.accumulate(g)

    return make_result(out, inputs, _backward, "eltwise_sum")


def softmax_channels(x):
    """Softmax over axis 1, stabilised by subtracting the per-pixel max."""
    if x.data.ndim < 2 or x.shape[1] < 2:
        raise DimensionError(f"softmax_channels needs >= 2 channels on axis 1, got shape {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def _backward(g):
        x.accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

    return make_result(y, [x], _backward, "softmax_channels")


def class_weighted_sum(probs, weights):
    """out[:, k] = sum over m with k < C_m of weights[m][k] * probs[m][:, k].

    ``probs[m]`` is (N, C_m, H, W), ``weights[m]`` is (C_m,); the output has
    max(C_m) channels.
    """
    if not probs or len(probs) != len(weights):
        raise ArgumentError("class_weighted_sum needs one weight vector per input")
    n, _, h, w = probs[0].shape
    for p, wt in zip(probs, weights):
        if p.shape[0] != n or p.shape[2:] != (h, w):
            raise DimensionError(f"class_weighted_sum spatial mismatch: {p.shape} vs {probs[0].shape}")
        if wt.shape != (p.shape[1],):
            raise DimensionError(f"class_weighted_sum weight axis: expected ({p.shape[1]},), got {wt.shape}")
    cmax = max(p.shape[1] for p in probs)
    out = np.zeros((n, cmax, h, w))
    for p, wt in zip(probs, weights):
        out[:, :p.shape[1]] += wt.data[None, :, None, None] * p.data

    def _backward(g):
        for p, wt in zip(probs, weights):
            gk = g[:, :p.shape[1]]
            p.accumulate(gk * wt.data[None, :, None, None])
            wt.accumulate((gk * p.data).sum(axis=(0, 2, 3)))

    return make_result(out, list(probs) + list(weights), _backward, "class_weighted_sum")


def weighted_nll(p, target, weight):
    """-sum_j weight_j * log p[target_j, j] for probabilities ``p`` (N,C,H,W)."""
    _check_nchw(p, "weighted_nll input")
    target = np.asarray(target, dtype=np.intp)
    weight = np.asarray(weight, dtype=np.float64)
    n, c, h, w = p.shape
    if target.shape != (n, h, w) or weight.shape != (n, h, w):
        raise DimensionError(f"weighted_nll target/weight must be {(n, h, w)}, got {target.shape}, {weight.shape}")
    if target.size and (target.min() < 0 or target.max() >= c):
        raise ArgumentError(f"target class {int(target.max())} exceeds the {c} predicted channels")
    picked = np.take_along_axis(p.data, target[:, None], axis=1)[:, 0]
    picked = np.maximum(picked, PROB_FLOOR)
    out = np.array(-(weight * np.log(picked)).sum())

    def _backward(g):
        gp = np.zeros_like(p.data)
        np.put_along_axis(gp, target[:, None], (-g * weight / picked)[:, None], axis=1)
        p.accumulate(gp)

    return make_result(out, [p], _backward, "weighted_nll")


def add(*xs):
    """Sum of same-shape tensors (used for scalar loss totals)."""
    return eltwise_sum(list(xs))


def mul(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = a.data * b.data

    def _backward(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    return make_result(out, [a, b], _backward, "mul")


def sum_all(x):
    out = np.array(x.data.sum())

    def _backward(g):
        x.accumulate(np.broadcast_to(g, x.shape))

    return make_result(out, [x], _backward, "sum")


def constant(data):
    return Tensor(data, requires_grad=False, op="const")
