"""NMS thinning, tolerance matching, PR sweep and ODS F-measure."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._backend import kernels
from .errors import ArgumentError

logger = logging.getLogger(__name__)

DEFAULT_TOL_FRAC = 0.0075


def default_thresholds(n=99):
    """``n`` evenly spaced thresholds strictly inside (0, 1); n=99 gives 0.01..0.99."""
    return np.arange(1, n + 1) / (n + 1)


def ridge_orientation(response, sigma=1.0):
    """Angle (radians, x towards y) of the direction across ridges of ``response``.

    The map is Gaussian-smoothed, differentiated with Sobel filters, and the
    dominant gradient direction is read off the smoothed structure tensor; on a
    ridge the gradients on either flank both point across it.
    """
    sm = ndimage.gaussian_filter(np.asarray(response, dtype=np.float64), sigma, mode="nearest")
    gy = ndimage.sobel(sm, axis=0, mode="nearest")
    gx = ndimage.sobel(sm, axis=1, mode="nearest")
    jxx = ndimage.gaussian_filter(gx * gx, sigma, mode="nearest")
    jyy = ndimage.gaussian_filter(gy * gy, sigma, mode="nearest")
    jxy = ndimage.gaussian_filter(gx * gy, sigma, mode="nearest")
    return 0.5 * np.arctan2(2 * jxy, jxx - jyy)


def nms_thin(response, sigma=1.0):
    """Keep pixels that are maximal across the local ridge; others become 0."""
    e = np.ascontiguousarray(response, dtype=np.float64)
    if e.size == 0 or not e.any():
        return np.zeros_like(e)
    theta = np.ascontiguousarray(ridge_orientation(e, sigma))
    return kernels.nms_suppress(e, theta)


def match_maps(pred, gt, tol):
    """Greedy one-to-one matching of predicted pixels to gt pixels within ``tol`` pixels.

    Predictions are visited in descending score (row-major among ties). Each
    takes the unmatched in-range gt pixel that the fewest later predictions
    could still reach, the nearest one among those. Returns ``(tp, fp, fn)``.
    """
    if tol <= 0:
        raise ArgumentError(f"tolerance must be positive, got {tol}")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.ascontiguousarray(np.asarray(gt) != 0, dtype=np.uint8)
    if pred.shape != gt.shape:
        raise ArgumentError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    flat = pred.ravel()
    idx = np.flatnonzero(flat > 0)
    idx = idx[np.argsort(-flat[idx], kind="stable")]
    py, px = np.divmod(idx, pred.shape[1])
    matched, _ = kernels.greedy_match(py.astype(np.intp), px.astype(np.intp), gt, float(tol))
    tp = int(matched.sum())
    return tp, int(idx.size - tp), int(gt.sum() - tp)


def f_measure(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    thresholds: list
    precision: list
    recall: list
    f: list
    tp: list = field(default_factory=list)
    fp: list = field(default_factory=list)
    fn: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    @property
    def ods_index(self):
        return int(np.argmax(self.f)) if self.f else 0

    @property
    def ods_f(self):
        return float(max(self.f)) if self.f else 0.0

    @property
    def ods_threshold(self):
        return float(self.thresholds[self.ods_index]) if self.thresholds else 0.0

    def to_tsv(self):
        lines = [f"# ods_f={self.ods_f:.6f} ods_threshold={self.ods_threshold:.4f}",
                 "threshold\tprecision\trecall\tf\ttp\tfp\tfn\tdegenerate"]
        for row in zip(self.thresholds, self.precision, self.recall, self.f,
                       self.tp, self.fp, self.fn, self.degenerate):
            t, p, r, f, tp, fp, fn, d = row
            lines.append(f"{t:.4f}\t{p:.6f}\t{r:.6f}\t{f:.6f}\t{tp}\t{fp}\t{fn}\t{int(d)}")
        return "\n".join(lines) + "\n"


def tolerance_px(shape, tol_frac=DEFAULT_TOL_FRAC):
    return tol_frac * float(np.hypot(*shape))


def pr_curve(thinned, gts, thresholds=None, tol=None, tol_frac=DEFAULT_TOL_FRAC):
    """Dataset-level PR sweep over NMS-thinned responses.

    ``tol`` in pixels overrides the per-image ``tol_frac`` x diagonal default.
    Counts are summed over images before precision/recall are formed.
    """
    if len(thinned) == 0 or len(thinned) != len(gts):
        raise ArgumentError("pr_curve needs one ground truth per prediction and at least one image")
    ts = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    rep = EvalReport([], [], [], [])
    for t in ts:
        tp = fp = fn = 0
        for pred, gt in zip(thinned, gts):
            tol_i = tol if tol is not None else tolerance_px(pred.shape, tol_frac)
            a, b, c = match_maps(np.where(pred >= t, pred, 0.0), gt, tol_i)
            tp, fp, fn = tp + a, fp + b, fn + c
        degenerate = tp + fp == 0
        p = 0.0 if degenerate else tp / (tp + fp)
        r = tp / (tp + fn) if tp + fn else 0.0
        rep.thresholds.append(float(t))
        rep.precision.append(p)
        rep.recall.append(r)
        rep.f.append(0.0 if degenerate else f_measure(p, r))
        rep.tp.append(tp)
        rep.fp.append(fp)
        rep.fn.append(fn)
        rep.degenerate.append(degenerate)
    return rep


def evaluate(responses, gts, thresholds=None, tol=None, tol_frac=DEFAULT_TOL_FRAC):
    """NMS-thin every response map, then run the PR sweep."""
    return pr_curve([nms_thin(r) for r in responses], gts, thresholds, tol, tol_frac)


def render_pr(report, size=256):
    """PR curve raster (uint8, white background): recall on x, precision on y."""
    img = np.full((size, size), 255, dtype=np.uint8)
    img[size - 1, :] = 0
    img[:, 0] = 0
    pts = [(r, p) for r, p, d in zip(report.recall, report.precision, report.degenerate) if not d]
    # iso-F contour at the ODS value
    if report.ods_f > 0:
        f = report.ods_f
        for r in np.linspace(f / 2 + 1e-9, 1, 4 * size):
            p = f * r / (2 * r - f)
            if 0 <= p <= 1:
                img[int(round((1 - p) * (size - 1))), int(round(r * (size - 1)))] = 160
    for (r0, p0), (r1, p1) in zip(pts, pts[1:] or pts):
        for a in np.linspace(0, 1, size):
            r, p = r0 + a * (r1 - r0), p0 + a * (p1 - p0)
            img[int(round((1 - p) * (size - 1))), int(round(r * (size - 1)))] = 0
    return img
