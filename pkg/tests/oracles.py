"""Slow, obviously-correct reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def conv2d_loops(x, w, b, stride=1, pad=0):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for yi in range(ho):
                for xi in range(wo):
                    acc = 0.0 if b is None else b[oi]
                    for ci in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                acc += xp[ni, ci, yi * stride + ky, xi * stride + kx] * w[oi, ci, ky, kx]
                    out[ni, oi, yi, xi] = acc
    return out


def maxpool_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for ni, ci, yi, xi in itertools.product(range(n), range(c), range(h // 2), range(w // 2)):
        out[ni, ci, yi, xi] = max(x[ni, ci, 2 * yi + dy, 2 * xi + dx] for dy in (0, 1) for dx in (0, 1))
    return out


def bilinear_interp(x, factor):
    """Half-pixel-centred bilinear interpolation with edge clamping, by index arithmetic."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, h * factor, w * factor))
    for oy in range(h * factor):
        sy = min(max((oy + 0.5) / factor - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for ox in range(w * factor):
            sx = min(max((ox + 0.5) / factor - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[:, :, oy, ox] = ((1 - fy) * (1 - fx) * x[:, :, y0, x0] + (1 - fy) * fx * x[:, :, y0, x1]
                                 + fy * (1 - fx) * x[:, :, y1, x0] + fy * fx * x[:, :, y1, x1])
    return out


def softmax_ref(z):
    out = np.zeros_like(z)
    n, c, h, w = z.shape
    for ni, yi, xi in itertools.product(range(n), range(h), range(w)):
        e = [math.exp(z[ni, k, yi, xi] - max(z[ni, :, yi, xi])) for k in range(c)]
        s = sum(e)
        for k in range(c):
            out[ni, k, yi, xi] = e[k] / s
    return out


def central_diff(f, arr, eps=1e-5):
    """d f / d arr by central differences; ``f`` re-reads ``arr`` on each call."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        fp = f()
        arr[i] = old - eps
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    """Largest absolute deviation relative to the larger gradient magnitude."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def nearest_background_brute(mask):
    """Distance from every foreground pixel to the closest background pixel, O(n^2).

    The raster is considered to be surrounded by background, like the code under test.
    """
    m = np.pad(np.asarray(mask) != 0, 1)
    by, bx = np.nonzero(~m)
    out = np.zeros(m.shape)
    for y, x in zip(*np.nonzero(m)):
        out[y, x] = math.sqrt(((by - y) ** 2 + (bx - x) ** 2).min())
    return out[1:-1, 1:-1]


def quantize_scalar(s, ladder):
    if s == 0:
        return 0
    prev = 0
    for m, r in enumerate(ladder, start=1):
        if prev < s <= r:
            return m
        prev = r
    return 0


def max_bipartite(pred_pts, gt_pts, tol):
    """Maximum-cardinality matching by augmenting paths (Kuhn)."""
    adj = [[j for j, (gy, gx) in enumerate(gt_pts) if (py - gy) ** 2 + (px - gx) ** 2 <= tol * tol]
           for py, px in pred_pts]
    owner = [-1] * len(gt_pts)

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if owner[j] < 0 or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    return sum(augment(i, set()) for i in range(len(pred_pts)))
