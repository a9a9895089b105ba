"""Skeleton response maps, single- and multi-scale."""

import numpy as np

from .arch import forward
from .data import resize_bilinear
from .loss import response_map

MULTISCALE_FACTORS = (0.5, 1.0, 1.5)


def predict(net, image):
    """Response map in [0, 1] at the input resolution."""
    _, fused = forward(net, image)
    return response_map(fused)


def predict_multiscale(net, image, factors=MULTISCALE_FACTORS):
    """Run at each scale, resize the responses back, and average them."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[-2:]
    acc = np.zeros((h, w))
    for f in factors:
        if f == 1.0:
            acc += predict(net, img)
            continue
        sh, sw = max(1, int(round(h * f))), max(1, int(round(w * f)))
        scaled = resize_bilinear(img, sh, sw)
        acc += resize_bilinear(predict(net, scaled), h, w)
    return acc / len(factors)
