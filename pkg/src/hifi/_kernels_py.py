"""Reference implementations of the compiled kernels in ``_kernels.pyx``.

Same signatures and bit-identical results; selected automatically when the
extension is missing or ``HIFI_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def _envelope_1d(f):
    n = len(f)
    d = np.full(n, np.inf)
    v = []
    z = []
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        if not v:
            v.append(q)
            z[:] = [-np.inf, np.inf]
            continue
        k = len(v) - 1
        s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        del v[k + 1:]
        del z[k + 1:]
        v.append(q)
        z.append(s)
        z.append(np.inf)
    if not v:
        return d
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]
    return d


def sq_edt(fg):
    fg = np.ascontiguousarray(fg, dtype=np.uint8)
    h, w = fg.shape
    out = np.where(fg != 0, np.inf, 0.0)
    for x in range(w):
        out[:, x] = _envelope_1d(out[:, x].tolist())
    for y in range(h):
        out[y, :] = _envelope_1d(out[y, :].tolist())
    return out


def zhang_suen(mask):
    img = (np.asarray(mask) != 0).astype(np.uint8)
    h, w = img.shape
    while True:
        changed = False
        for step in range(2):
            p = np.pad(img, 1).astype(np.int32)
            # P2..P9 clockwise from north
            nb = [
                p[0:h, 1:w + 1], p[0:h, 2:w + 2], p[1:h + 1, 2:w + 2], p[2:h + 2, 2:w + 2],
                p[2:h + 2, 1:w + 1], p[2:h + 2, 0:w], p[1:h + 1, 0:w], p[0:h, 0:w],
            ]
            b = sum(nb)
            a = sum(((nb[i] == 0) & (nb[(i + 1) % 8] == 1)).astype(np.int32) for i in range(8))
            n, e, s, west = nb[0], nb[2], nb[4], nb[6]
            if step == 0:
                side = (n * e * s == 0) & (e * s * west == 0)
            else:
                side = (n * e * west == 0) & (n * s * west == 0)
            kill = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & side
            if kill.any():
                img[kill] = 0
                changed = True
        if not changed:
            return img


def _bilinear(e, y, x):
    h, w = e.shape
    y = np.clip(y, 0, h - 1)
    x = np.clip(x, 0, w - 1)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = y - y0
    fx = x - x0
    return ((1 - fy) * ((1 - fx) * e[y0, x0] + fx * e[y0, x1])
            + fy * ((1 - fx) * e[y1, x0] + fx * e[y1, x1]))


def nms_suppress(e, theta):
    e = np.ascontiguousarray(e, dtype=np.float64)
    h, w = e.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    c = np.cos(theta)
    s = np.sin(theta)
    fwd = _bilinear(e, yy + s, xx + c)
    bwd = _bilinear(e, yy - s, xx - c)
    keep = (e > 0) & ~(e < fwd) & ~(e < bwd)
    return np.where(keep, e, 0.0)


def greedy_match(py, px, gt, tol):
    gt = np.asarray(gt)
    h, w = gt.shape
    r = int(math.floor(tol))
    tol2 = tol * tol
    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
               if dy * dy + dx * dx <= tol2]
    pts = list(zip(np.asarray(py).tolist(), np.asarray(px).tolist()))
    # how many not-yet-visited predictions can still reach each pixel
    pending = np.zeros((h + 2 * r, w + 2 * r), dtype=np.int64)
    for y, x in pts:
        for dy, dx in offsets:
            pending[y + dy + r, x + dx + r] += 1
    pm = np.zeros(len(pts), dtype=np.uint8)
    used = np.zeros((h, w), dtype=np.uint8)
    for i, (y, x) in enumerate(pts):
        best = None
        for dy, dx in offsets:
            pending[y + dy + r, x + dx + r] -= 1
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and gt[yy, xx] and not used[yy, xx]:
                key = (pending[yy + r, xx + r], dy * dy + dx * dx)
                if best is None or key < best[0]:
                    best = (key, yy, xx)
        if best is not None:
            used[best[1], best[2]] = 1
            pm[i] = 1
    return pm, used
