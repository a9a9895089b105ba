"""Balanced softmax loss, side-output fusion, total objective and the skeleton response."""

import numpy as np

from .autodiff import add, class_weighted_sum, softmax_channels, weighted_nll
from .errors import ArgumentError

BETA_CONVENTIONS = ("hed", "paper-literal")


def beta(target):
    """Fraction of non-background pixels in a target map."""
    g = np.asarray(target)
    if g.size == 0:
        raise ArgumentError("beta of an empty target map")
    return np.count_nonzero(g) / g.size


def pixel_weights(target, convention="hed"):
    """Per-pixel class-balancing weights.

    ``hed`` weights skeleton pixels by 1-beta and background by beta, so the
    rare class is up-weighted. ``paper-literal`` swaps the two roles.
    """
    g = np.asarray(target)
    b = beta(g)
    pos = g != 0
    if convention == "hed":
        return np.where(pos, 1.0 - b, b)
    if convention == "paper-literal":
        return np.where(pos, b, 1.0 - b)
    raise ArgumentError(f"unknown beta convention {convention!r}; use one of {BETA_CONVENTIONS}")


def balanced_softmax_loss(probs, target, convention="hed"):
    """Class-balanced negative log-likelihood summed over pixels.

    ``probs`` is a (1, C, H, W) probability Tensor, ``target`` an (H, W) map of
    class indices below C.
    """
    g = np.asarray(target)
    if g.ndim == 2:
        g = g[None]
    return weighted_nll(probs, g, pixel_weights(g, convention))


def fuse(side_probs, weights):
    """Per-class weighted sum of side-output probabilities, renormalised by a channel softmax.

    Class k only draws on side-outputs that predict it.
    """
    if not side_probs:
        raise ArgumentError("fuse needs at least one side-output")
    return softmax_channels(class_weighted_sum(side_probs, weights))


def total_loss(side_losses, fused_loss):
    return add(*side_losses, fused_loss)


def response_map(fused):
    """Skeleton probability 1 - p_background for a (1, C, H, W) distribution (array or Tensor)."""
    p = getattr(fused, "data", fused)
    return 1.0 - np.asarray(p)[0, 0]
