"""Batch-size-1 momentum SGD over augmented samples, with a TSV loss log."""

import logging

import numpy as np

from .arch import forward
from .autodiff import SgdState, backward, sgd_step
from .data import augment
from .gt import quantize, so_target
from .loss import balanced_softmax_loss, total_loss

logger = logging.getLogger(__name__)


def targets_for(net, scale_map, quant_convention="inclusive"):
    """Quantized map Q and one G^m per side-output."""
    q = quantize(scale_map, net.ladder)
    q[q > net.num_classes] = 0
    return q, [so_target(q, so.class_count, quant_convention) for so in net.side_outputs]


def loss_terms(net, sample, quant_convention="inclusive", beta_convention="hed"):
    """Forward one sample; returns (total, fused, [side losses]) as Tensors."""
    q, gs = targets_for(net, sample.scale_map, quant_convention)
    sides, fused = forward(net, sample.image)
    side_losses = [balanced_softmax_loss(p, g, beta_convention) for p, g in zip(sides, gs)]
    fused_loss = balanced_softmax_loss(fused, q, beta_convention)
    return total_loss(side_losses, fused_loss), fused_loss, side_losses


def log_header(net):
    return ["iter", "lr", "loss_total", "loss_fused"] + [
        f"loss_so_{i}" for i in range(1, len(net.side_outputs) + 1)]


def train(net, samples, iters, sgd=None, seed=0, quant_convention="inclusive",
          beta_convention="hed", augment_data=True, log=None):
    """Run ``iters`` SGD steps; returns the log rows (also written to ``log`` if given).

    Samples are visited in a fresh seeded permutation each epoch.
    """
    sgd = sgd or SgdState()
    rng = np.random.default_rng(seed)
    params = {name: t.data for name, t in net.graph.params.items()}
    rows = []
    if log is not None:
        log.write("\t".join(log_header(net)) + "\n")
    order = []
    for it in range(1, iters + 1):
        if not order:
            order = rng.permutation(len(samples)).tolist()
        sample = samples[order.pop()]
        aug_seed = int(rng.integers(2**31))
        if augment_data:
            sample = augment(sample, aug_seed)
        total, fused, sides = loss_terms(net, sample, quant_convention, beta_convention)
        net.graph.zero_grad()
        backward(total)
        grads = {name: t.grad for name, t in net.graph.params.items()}
        lr = sgd.learning_rate
        sgd_step(sgd, params, grads)
        row = [it, lr, total.item(), fused.item()] + [s.item() for s in sides]
        rows.append(row)
        if log is not None:
            log.write(format_row(row) + "\n")
        if it % 100 == 0:
            logger.info("iter %d loss %.4f fused %.4f", it, row[2], row[3])
    return rows


def format_row(row):
    return "\t".join([str(row[0])] + [repr(float(v)) for v in row[1:]])
