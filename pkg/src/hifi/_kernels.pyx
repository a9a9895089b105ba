# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``hifi._kernels_py`` holds the reference fallback with the same API."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, cos, sin, INFINITY

cnp.import_array()


cdef void _envelope_1d(double* f, Py_ssize_t n, double* d, Py_ssize_t* v, double* z) noexcept nogil:
    # lower envelope of parabolas rooted at finite samples only
    cdef Py_ssize_t q, k = -1
    cdef double s
    for q in range(n):
        if f[q] == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            d[q] = INFINITY
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def sq_edt(cnp.uint8_t[:, ::1] fg):
    """Squared Euclidean distance from every pixel to the nearest zero pixel of ``fg``."""
    cdef Py_ssize_t h = fg.shape[0], w = fg.shape[1], n = max(h, w)
    cdef Py_ssize_t y, x
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] f = np.empty(n, dtype=np.float64)
    cdef double[::1] d = np.empty(n, dtype=np.float64)
    cdef double[::1] z = np.empty(n + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] v = np.empty(n, dtype=np.intp)
    if h == 0 or w == 0:
        return out_arr
    with nogil:
        for x in range(w):
            for y in range(h):
                f[y] = INFINITY if fg[y, x] else 0.0
            _envelope_1d(&f[0], h, &d[0], &v[0], &z[0])
            for y in range(h):
                out[y, x] = d[y]
        for y in range(h):
            for x in range(w):
                f[x] = out[y, x]
            _envelope_1d(&f[0], w, &d[0], &v[0], &z[0])
            for x in range(w):
                out[y, x] = d[x]
    return out_arr


cdef inline int _px(cnp.uint8_t[:, ::1] m, Py_ssize_t y, Py_ssize_t x, Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    if y < 0 or x < 0 or y >= h or x >= w:
        return 0
    return 1 if m[y, x] else 0


def zhang_suen(mask):
    """Zhang-Suen thinning of a binary raster; returns a new uint8 array."""
    img_arr = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    img_arr[img_arr != 0] = 1
    cdef cnp.uint8_t[:, ::1] img = img_arr
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x, i, n_del
    cdef int step, changed = 1
    cdef int p[9]
    cdef int b, a
    dy_arr = np.empty(h * w, dtype=np.intp)
    dx_arr = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t[::1] dly = dy_arr
    cdef Py_ssize_t[::1] dlx = dx_arr
    with nogil:
        while changed:
            changed = 0
            for step in range(2):
                n_del = 0
                for y in range(h):
                    for x in range(w):
                        if not img[y, x]:
                            continue
                        p[0] = _px(img, y - 1, x, h, w)
                        p[1] = _px(img, y - 1, x + 1, h, w)
                        p[2] = _px(img, y, x + 1, h, w)
                        p[3] = _px(img, y + 1, x + 1, h, w)
                        p[4] = _px(img, y + 1, x, h, w)
                        p[5] = _px(img, y + 1, x - 1, h, w)
                        p[6] = _px(img, y, x - 1, h, w)
                        p[7] = _px(img, y - 1, x - 1, h, w)
                        p[8] = p[0]
                        b = 0
                        a = 0
                        for i in range(8):
                            b += p[i]
                            if p[i] == 0 and p[i + 1] == 1:
                                a += 1
                        if b < 2 or b > 6 or a != 1:
                            continue
                        if step == 0:
                            if p[0] * p[2] * p[4] != 0 or p[2] * p[4] * p[6] != 0:
                                continue
                        else:
                            if p[0] * p[2] * p[6] != 0 or p[0] * p[4] * p[6] != 0:
                                continue
                        dly[n_del] = y
                        dlx[n_del] = x
                        n_del += 1
                for i in range(n_del):
                    img[dly[i], dlx[i]] = 0
                if n_del:
                    changed = 1
    return img_arr


cdef inline double _bilinear(double[:, ::1] e, double y, double x, Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    cdef Py_ssize_t y0, x0, y1, x1
    cdef double fy, fx
    if y < 0:
        y = 0
    elif y > h - 1:
        y = h - 1
    if x < 0:
        x = 0
    elif x > w - 1:
        x = w - 1
    y0 = <Py_ssize_t>floor(y)
    x0 = <Py_ssize_t>floor(x)
    y1 = y0 + 1 if y0 + 1 < h else y0
    x1 = x0 + 1 if x0 + 1 < w else x0
    fy = y - y0
    fx = x - x0
    return ((1 - fy) * ((1 - fx) * e[y0, x0] + fx * e[y0, x1])
            + fy * ((1 - fx) * e[y1, x0] + fx * e[y1, x1]))


def nms_suppress(double[:, ::1] e, double[:, ::1] theta):
    """Zero every pixel smaller than either bilinear neighbour at +-1 px along ``theta``."""
    cdef Py_ssize_t h = e.shape[0], w = e.shape[1], y, x
    cdef double v, c, s
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for y in range(h):
            for x in range(w):
                v = e[y, x]
                if v <= 0:
                    continue
                c = cos(theta[y, x])
                s = sin(theta[y, x])
                if v < _bilinear(e, y + s, x + c, h, w):
                    continue
                if v < _bilinear(e, y - s, x - c, h, w):
                    continue
                out[y, x] = v
    return out_arr


def greedy_match(Py_ssize_t[::1] py, Py_ssize_t[::1] px, cnp.uint8_t[:, ::1] gt, double tol):
    """Match predictions (already in priority order) to free gt pixels within ``tol``.

    Each prediction takes the in-range free gt pixel that the fewest later
    predictions could still reach, then the nearest, then the first in
    row-major order. Returns ``(pred_matched, gt_used)`` as uint8 arrays.
    """
    cdef Py_ssize_t n = py.shape[0], h = gt.shape[0], w = gt.shape[1]
    cdef Py_ssize_t i, dy, dx, yy, xx, by, bx
    cdef Py_ssize_t r = <Py_ssize_t>floor(tol)
    cdef double tol2 = tol * tol, d2, best
    cdef int bp
    pm_arr = np.zeros(n, dtype=np.uint8)
    used_arr = np.zeros((h, w), dtype=np.uint8)
    pending_arr = np.zeros((h, w), dtype=np.intc)
    cdef cnp.uint8_t[::1] pm = pm_arr
    cdef cnp.uint8_t[:, ::1] used = used_arr
    cdef int[:, ::1] pending = pending_arr
    with nogil:
        for i in range(n):
            for dy in range(-r, r + 1):
                yy = py[i] + dy
                if yy < 0 or yy >= h:
                    continue
                for dx in range(-r, r + 1):
                    xx = px[i] + dx
                    if xx >= 0 and xx < w and dy * dy + dx * dx <= tol2:
                        pending[yy, xx] += 1
        for i in range(n):
            best = INFINITY
            bp = 0
            by = -1
            bx = -1
            for dy in range(-r, r + 1):
                yy = py[i] + dy
                if yy < 0 or yy >= h:
                    continue
                for dx in range(-r, r + 1):
                    xx = px[i] + dx
                    if xx < 0 or xx >= w:
                        continue
                    d2 = dy * dy + dx * dx
                    if d2 > tol2:
                        continue
                    pending[yy, xx] -= 1
                    if not gt[yy, xx] or used[yy, xx]:
                        continue
                    if by < 0 or pending[yy, xx] < bp or (pending[yy, xx] == bp and d2 < best):
                        bp = pending[yy, xx]
                        best = d2
                        by = yy
                        bx = xx
            if by >= 0:
                used[by, bx] = 1
                pm[i] = 1
    return pm_arr, used_arr
