import os
import subprocess
import sys

import numpy as np
import pytest

from hifi import _kernels_py as py

compiled = pytest.importorskip("hifi._kernels", reason="compiled kernels not built")


def _mask(rng, h, w, p):
    return np.ascontiguousarray(rng.random((h, w)) < p, dtype=np.uint8)


@pytest.mark.parametrize("seed", range(10))
def test_sq_edt_agrees(seed):
    rng = np.random.default_rng(seed)
    m = _mask(rng, *rng.integers(1, 40, 2), rng.uniform(0.3, 1.0))
    assert np.array_equal(compiled.sq_edt(m), py.sq_edt(m))


@pytest.mark.parametrize("seed", range(10))
def test_zhang_suen_agrees(seed):
    rng = np.random.default_rng(seed)
    m = _mask(rng, *rng.integers(3, 40, 2), 0.7)
    m = np.ascontiguousarray(np.pad(m, 1), dtype=np.uint8)
    assert np.array_equal(compiled.zhang_suen(m), py.zhang_suen(m))


@pytest.mark.parametrize("seed", range(10))
def test_nms_agrees(seed):
    rng = np.random.default_rng(seed)
    e = rng.random((23, 31))
    theta = rng.uniform(-np.pi / 2, np.pi / 2, e.shape)
    assert np.array_equal(compiled.nms_suppress(e, theta), py.nms_suppress(e, theta))


@pytest.mark.parametrize("seed", range(20))
def test_greedy_match_agrees(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(4, 30, 2)
    gt = _mask(rng, h, w, 0.2)
    idx = rng.choice(h * w, int(rng.integers(0, min(40, h * w))), replace=False)
    ys, xs = np.divmod(idx, w)
    tol = float(rng.choice([0.7, 1.0, 1.5, 2.3, 3.0]))
    a = compiled.greedy_match(ys.astype(np.intp), xs.astype(np.intp), gt, tol)
    b = py.greedy_match(ys, xs, gt, tol)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_env_forces_fallback():
    code = "import hifi._backend as b; print(b.BACKEND)"
    env = dict(os.environ, HIFI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["HIFI_PURE_PYTHON"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_fallback_pipeline_matches(tmp_path):
    """A full gt + eval pass gives identical numbers under either backend."""
    code = (
        "import numpy as np\n"
        "from hifi.data import gen_shape\n"
        "from hifi.evaluate import evaluate\n"
        "ss = [gen_shape(i, 40) for i in range(3)]\n"
        "rng = np.random.default_rng(0)\n"
        "rep = evaluate([np.clip(s.mask * 0.7 + 0.3 * rng.random(s.mask.shape), 0, 1) for s in ss],\n"
        "               [s.scale_map > 0 for s in ss], thresholds=[0.2, 0.5, 0.8])\n"
        "print(sum(float(s.scale_map.sum()) for s in ss), rep.tp, rep.fp, rep.fn)\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, HIFI_PURE_PYTHON=flag)
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(r.stdout)
    assert outs[0] == outs[1]
