"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``criterion N: PASS|FAIL ...`` line that is printed in the
terminal summary. Criteria 4-6 train real networks and take tens of minutes
on one core; deselect them with ``-m "not slow"``.
"""

import statistics
import time

import numpy as np
import pytest

from hifi.arch import ArchConfig, BackboneSpec, build_network, forward, preset
from hifi.autodiff import backward, conv2d, maxpool2, upsample_bilinear
from hifi.autodiff.tensor import Tensor
from hifi.config import Config, parse_config
from hifi.data import Sample, gen_dataset, gen_shape, load_dataset
from hifi.evaluate import evaluate, f_measure, pr_curve
from hifi.gt import quantize, scale_map_from_mask, so_target
from hifi.modelfile import dump_model, parse_model
from hifi.predict import predict
from hifi.train import format_row, loss_terms, train

from oracles import (
    bilinear_interp,
    central_diff,
    conv2d_loops,
    maxpool_loops,
    nearest_background_brute,
    quantize_scalar,
    rel_error,
)
from test_autodiff import GRAD_CASES

TRAIN_IMAGES, VAL_IMAGES, CANVAS, ITERS = 200, 50, 96, 2000
WINDOW = 100  # iterations averaged for "initial" and "final" loss
ABLATION = ("kfuse-1", "kfuse-2", "kfuse-5")
SEEDS = (0, 1, 2)


def record(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    log.append(line)
    assert ok, line


def T(a, grad=False):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=grad)


# ---------------------------------------------------------------- 1


def test_c1_gradient_suite(acceptance_log):
    t0 = time.perf_counter()
    worst = {}
    for op, case in GRAD_CASES.items():
        for seed in range(20):
            arrays, build = case(np.random.default_rng(seed))
            tensors = [T(a, grad=True) for a in arrays]
            backward(build(*tensors))
            for t, a in zip(tensors, arrays):
                num = central_diff(lambda: build(*[T(b) for b in arrays]).item(), a)
                worst[op] = max(worst.get(op, 0.0), rel_error(t.grad, num))
    # end-to-end total loss on a toy network, every parameter
    toy = ArchConfig(backbone=BackboneSpec(groups=((1, 2), (1, 3), (1, 3))),
                     hierarchy=preset("hifi1", 3), branch_channels=2)
    for seed in range(20):
        net = build_network(toy, seed=seed)
        rng = np.random.default_rng(seed)
        mask = np.zeros((16, 16), dtype=np.uint8)
        y0, x0 = rng.integers(1, 6, 2)
        mask[y0:y0 + rng.integers(4, 10), x0:x0 + rng.integers(4, 10)] = 1
        image = np.clip(0.3 + 0.4 * mask + 0.05 * rng.standard_normal(mask.shape), 0, 1)
        sample = Sample(image, mask, scale_map_from_mask(mask))
        # zero-initialised biases put dead regions exactly on the ReLU kink; move off it
        for t in net.graph.params.values():
            t.data += rng.normal(0.0, 0.05, t.data.shape)
        net.graph.zero_grad()
        backward(loss_terms(net, sample)[0])
        for name, t in net.graph.params.items():
            num = central_diff(lambda: loss_terms(net, sample)[0].item(), t.data, eps=1e-6)
            worst["total_loss"] = max(worst.get("total_loss", 0.0), rel_error(t.grad, num))
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    record(acceptance_log, 1, max(worst.values()) < 1e-4 and elapsed < 120,
           f"{len(worst)} ops x 20 seeds, max rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")


# ---------------------------------------------------------------- 2


def test_c2_oracle_equivalence(acceptance_log):
    rng = np.random.default_rng(0)
    mismatches = 0
    cases = 0
    while cases < 100_000:
        ladder = np.cumsum(rng.integers(1, 50, rng.integers(1, 7))).astype(float)
        s = rng.uniform(0, ladder[-1] * 1.25, 1000)
        s[rng.random(1000) < 0.1] = 0
        s[:ladder.size] = ladder
        got = quantize(s, ladder)
        mismatches += sum(int(g != quantize_scalar(v, ladder)) for g, v in zip(got, s))
        cases += s.size
    scale_err = 0.0
    for seed in range(12):
        r = np.random.default_rng(seed)
        if seed % 2:
            mask = gen_shape(seed, 64).mask
        else:
            mask = np.zeros((r.integers(8, 65), r.integers(8, 65)), dtype=np.uint8)
            for _ in range(3):
                y, x = r.integers(0, mask.shape[0] - 4), r.integers(0, mask.shape[1] - 4)
                mask[y:y + r.integers(3, 20), x:x + r.integers(3, 20)] = 1
        s = scale_map_from_mask(mask)
        ref = nearest_background_brute(mask)
        sk = s > 0
        scale_err = max(scale_err, float(np.abs(s[sk] - ref[sk]).max()))
    op_err = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        x, w, b = r.standard_normal((1, 2, 8, 6)), r.standard_normal((3, 2, 3, 3)), r.standard_normal(3)
        op_err = max(op_err, np.abs(conv2d(T(x), T(w), T(b), pad=1).data - conv2d_loops(x, w, b, pad=1)).max())
        op_err = max(op_err, np.abs(maxpool2(T(x)).data - maxpool_loops(x)).max())
        for f in (2, 4):
            op_err = max(op_err, np.abs(upsample_bilinear(T(x), f).data - bilinear_interp(x, f)).max())
    record(acceptance_log, 2, mismatches == 0 and scale_err < 1e-9 and op_err < 1e-12,
           f"quantize {mismatches}/{cases} mismatches; scale map err {scale_err:.1e}; "
           f"conv/pool/upsample err {op_err:.1e}")


# ---------------------------------------------------------------- 3


def test_c3_supervision_nesting(acceptance_log):
    rng = np.random.default_rng(0)
    violations = 0
    for _ in range(1000):
        m_max = int(rng.integers(1, 7))
        q = rng.integers(0, m_max + 1, tuple(rng.integers(1, 20, 2)))
        for m in range(1, m_max):
            g, g_next = so_target(q, m, "inclusive"), so_target(q, m + 1, "inclusive")
            violations += int(((g != 0) & (g_next == 0)).any()) + int(g.max() > m)
    record(acceptance_log, 3, violations == 0, f"{violations} violations over 1000 maps")


# ---------------------------------------------------------------- 4-6 shared training runs


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("synthetic"))
    gen_dataset(root, TRAIN_IMAGES + max(TRAIN_IMAGES, VAL_IMAGES), CANVAS, seed=0)
    train_set = load_dataset(root, "train")[:TRAIN_IMAGES]
    val_set = load_dataset(root, "val")[:VAL_IMAGES]
    assert len(train_set) == TRAIN_IMAGES and len(val_set) == VAL_IMAGES
    return train_set, val_set


_RUNS = {}


def run_training(samples, arch, seed, iters=ITERS):
    key = (arch, seed, iters)
    if key not in _RUNS:
        cfg = parse_config(f"arch = {arch}\nseed = {seed}\niters = {iters}")
        net = build_network(cfg.arch_config(), seed=seed)
        t0 = time.perf_counter()
        rows = train(net, samples, iters, cfg.sgd_state(), seed=seed)
        _RUNS[key] = (net, rows, time.perf_counter() - t0)
    return _RUNS[key]


def window_mean(rows, col, first):
    part = rows[:WINDOW] if first else rows[-WINDOW:]
    return float(np.mean([r[col] for r in part]))


@pytest.mark.slow
def test_c4_convergence(acceptance_log, synthetic):
    train_set, _ = synthetic
    net, rows, elapsed = run_training(train_set, "hifi1", 0)
    initial, final = window_mean(rows, 2, True), window_mean(rows, 2, False)
    _, again, _ = run_training(train_set, "hifi1", 0, iters=50)  # fresh network, same seed
    deterministic = [format_row(r) for r in again] == [format_row(r) for r in rows[:50]]
    record(acceptance_log, 4, final < 0.5 * initial and deterministic and elapsed < 1800,
           f"hifi1 loss {initial:.1f} -> {final:.1f} (ratio {final / initial:.3f}, mean of first/last "
           f"{WINDOW} iters); rerun bit-identical: {deterministic}; {elapsed:.0f}s")


@pytest.mark.slow
def test_c5_detection_quality(acceptance_log, synthetic):
    train_set, val_set = synthetic
    net, _, _ = run_training(train_set, "hifi1", 0)
    responses = [predict(net, s.image) for s in val_set]
    rep = evaluate(responses, [s.scale_map > 0 for s in val_set])
    i = rep.ods_index
    record(acceptance_log, 5, rep.ods_f >= 0.60,
           f"ODS F {rep.ods_f:.4f} at threshold {rep.ods_threshold:.2f} (P {rep.precision[i]:.3f}, "
           f"R {rep.recall[i]:.3f}) on {len(val_set)} held-out images")


@pytest.mark.slow
def test_c6_ablation_trend(acceptance_log, synthetic):
    train_set, _ = synthetic
    fused, total = {}, {}
    for arch in ABLATION:
        fused[arch], total[arch] = [], []
        for seed in SEEDS:
            # kfuse-2 is the same graph as hifi1, so seed 0 reuses the criterion-4 run
            _, rows, _ = run_training(train_set, "hifi1" if arch == "kfuse-2" else arch, seed)
            fused[arch].append(window_mean(rows, 3, False))
            total[arch].append(window_mean(rows, 2, False))
    med = {a: statistics.median(v) for a, v in fused.items()}
    med_total = {a: statistics.median(v) for a, v in total.items()}
    ok = med["kfuse-2"] <= med["kfuse-5"] and med["kfuse-2"] <= med["kfuse-1"]
    detail = "; ".join(f"{a} fused {med[a]:.2f} (seeds {', '.join(f'{v:.2f}' for v in fused[a])}) "
                       f"total {med_total[a]:.2f}" for a in ABLATION)
    record(acceptance_log, 6, ok, f"median final fused loss, {ITERS} iters x {len(SEEDS)} seeds: {detail}")


# ---------------------------------------------------------------- 7


def test_c7_protocol_sanity(acceptance_log):
    gts = []
    for seed in range(5):
        gts.append(gen_shape(seed, 64).scale_map > 0)
    perfect = evaluate([g.astype(float) for g in gts], gts).ods_f
    perfect_raw = pr_curve([g.astype(float) for g in gts], gts).ods_f
    empty = evaluate([np.zeros(g.shape) for g in gts], gts).ods_f
    f = f_measure(0.8, 0.6)
    record(acceptance_log, 7, perfect == 1.0 and perfect_raw == 1.0 and empty == 0.0 and abs(f - 0.685714) < 1e-6,
           f"perfect ODS {perfect!r}, empty ODS {empty!r}, F(0.8, 0.6) = {f:.7f}")


# ---------------------------------------------------------------- 8


def test_c8_determinism_and_serialization(acceptance_log):
    samples = [gen_shape(2 * i, 64) for i in range(6)]
    cfg = Config()

    def first_ten():
        net = build_network(cfg.arch_config(), seed=cfg.seed)
        rows = train(net, samples, 10, cfg.sgd_state(), seed=cfg.seed)
        return [format_row(r) for r in rows], net

    log_a, net = first_ten()
    log_b, _ = first_ten()
    net2, cfg2 = parse_model(dump_model(net, cfg))
    images = [gen_shape(2 * i + 1, 64).image for i in range(3)]
    same_pred = all(predict(net, im).tobytes() == predict(net2, im).tobytes() for im in images)
    same_fused = all(forward(net, im)[1].data.tobytes() == forward(net2, im)[1].data.tobytes() for im in images)
    same_hash = net.structure_hash() == net2.structure_hash()
    record(acceptance_log, 8, log_a == log_b and same_pred and same_fused and same_hash and cfg2 == cfg,
           f"10-iteration log identical: {log_a == log_b}; model round-trip predictions identical: "
           f"{same_pred and same_fused}; structure hash equal: {same_hash}")
