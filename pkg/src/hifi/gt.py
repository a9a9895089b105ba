"""Skeleton scale maps from masks, scale quantization, and per-side-output targets.

A scale map is a float64 (H, W) array: the distance from each skeleton pixel to
the nearest background pixel, 0 elsewhere. A quantized map is an integer array
of class indices in [0, M].
"""

import numpy as np
from scipy import ndimage

from ._backend import kernels
from .errors import ArgumentError

CONVENTIONS = ("inclusive", "strict")


def _binary(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ArgumentError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool and not np.isin(mask, (0, 1)).all():
        raise ArgumentError("mask must contain only 0 and 1")
    return np.ascontiguousarray(mask != 0, dtype=np.uint8)


def distance_to_background(mask):
    """Exact Euclidean distance from each pixel to the nearest background pixel.

    The raster is treated as surrounded by a one-pixel background ring, so
    objects touching the border still have a finite scale.
    """
    fg = np.pad(_binary(mask), 1)
    return np.sqrt(kernels.sq_edt(fg))[1:-1, 1:-1]


def thin(mask, dist=None):
    """One-pixel-wide skeleton by Zhang-Suen iterative thinning.

    Zhang-Suen erases 2x2 blocks completely, so a component left with no
    skeleton gets back its deepest pixel (first in row-major order).
    """
    m = _binary(mask)
    sk = kernels.zhang_suen(m).astype(bool)
    labels, n = ndimage.label(m, structure=np.ones((3, 3)))
    if n == 0:
        return sk
    kept = ndimage.sum(sk, labels, index=np.arange(1, n + 1))
    if (kept > 0).all():
        return sk
    if dist is None:
        dist = distance_to_background(m)
    for lab in np.flatnonzero(kept == 0) + 1:
        d = np.where(labels == lab, dist, -1.0)
        sk[np.unravel_index(np.argmax(d), d.shape)] = True
    return sk


def scale_map_from_mask(mask):
    m = _binary(mask)
    if not m.any():
        return np.zeros(m.shape)
    dist = distance_to_background(m)
    return np.where(thin(m, dist), dist, 0.0)


def check_ladder(ladder):
    r = np.asarray(ladder, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ArgumentError("receptive-field ladder must be a non-empty 1-D sequence")
    if (r <= 0).any() or (np.diff(r) <= 0).any():
        raise ArgumentError(f"receptive-field ladder must be positive and strictly increasing: {ladder}")
    return r


def quantize(scale_map, ladder):
    """Class m where r_{m-1} < s <= r_m (r_0 = 0); 0 for background or s > r_M."""
    r = check_ladder(ladder)
    s = np.asarray(scale_map, dtype=np.float64)
    q = np.searchsorted(r, s, side="left") + 1
    q[(s <= 0) | (s > r[-1])] = 0
    return q.astype(np.int64)


def so_target(q, m, convention="inclusive"):
    """Target for side-output m: classes above m (or >= m when strict) become background."""
    if m < 1:
        raise ArgumentError(f"side-output index must be >= 1, got {m}")
    q = np.asarray(q)
    if convention == "inclusive":
        keep = q <= m
    elif convention == "strict":
        keep = q < m
    else:
        raise ArgumentError(f"unknown target convention {convention!r}; use one of {CONVENTIONS}")
    return np.where(keep, q, 0)
