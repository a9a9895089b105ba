"""Time the compiled kernels against the numpy/python fallback.

    python3 benchmarks/bench_kernels.py [--size 96] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from hifi import _kernels_py
from hifi.data import gen_shape
from hifi.evaluate import ridge_orientation

try:
    from hifi import _kernels
except ImportError:
    _kernels = None


def cases(size):
    s = gen_shape(0, size)
    mask = np.ascontiguousarray(np.pad(s.mask, 1), dtype=np.uint8)
    rng = np.random.default_rng(0)
    resp = np.ascontiguousarray(np.clip(0.8 * (s.scale_map > 0) + 0.2 * rng.random(s.mask.shape), 0, 1))
    theta = np.ascontiguousarray(ridge_orientation(resp))
    gt = np.ascontiguousarray(s.scale_map > 0, dtype=np.uint8)
    pred = resp > 0.5
    idx = np.flatnonzero(pred)
    idx = idx[np.argsort(-resp.ravel()[idx], kind="stable")]
    py, px = (a.astype(np.intp) for a in np.divmod(idx, size))
    tol = 0.0075 * size * 2 ** 0.5
    return {
        "sq_edt": lambda k: k.sq_edt(mask),
        "zhang_suen": lambda k: k.zhang_suen(mask),
        "nms_suppress": lambda k: k.nms_suppress(resp, theta),
        "greedy_match": lambda k: k.greedy_match(py, px, gt, tol),
    }


def best_of(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases(args.size).items():
        t_py = best_of(lambda: call(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<14}{t_py * 1e3:>12.3f}{'n/a':>12}{'':>10}")
            continue
        t_c = best_of(lambda: call(_kernels), args.repeat)
        print(f"{name:<14}{t_py * 1e3:>12.3f}{t_c * 1e3:>12.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
