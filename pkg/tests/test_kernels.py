import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from swopacity import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba unavailable or disabled")


def _sorted_pairs(i, g):
    order = np.lexsort((g, i))
    return i[order].tolist(), g[order].tolist()


@needs_numba
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_ball_pairs_agree(dim):
    rng = np.random.default_rng(dim)
    images = rng.uniform(0, 1, (300, dim))
    grid = np.round(rng.uniform(0, 1, (80, dim)) * 10) / 10
    a = K.ball_pairs(images, grid, 0.1, backend="numpy")
    b = K.ball_pairs(images, grid, 0.1, backend="numba")
    assert _sorted_pairs(*a) == _sorted_pairs(*b)
    assert len(a[0]) > 0


@needs_numba
def test_close_matrix_agree():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0, 1, (50, 2)), rng.uniform(0, 1, (40, 2))
    assert np.array_equal(K.close_matrix(a, b, 0.3, backend="numpy"), K.close_matrix(a, b, 0.3, backend="numba"))
    empty = np.zeros((3, 0))
    assert K.close_matrix(empty, empty, 0.0, backend="numba").all()


@needs_numba
def test_expand_beliefs_agree():
    rng = np.random.default_rng(1)
    n = 12
    post = rng.random((n, n)) < 0.3
    close = rng.random((n, n)) < 0.5
    z = rng.integers(0, n, 20)
    beliefs = rng.random((20, n)) < 0.4
    a = K.expand_beliefs(post, close, z, beliefs, backend="numpy")
    b = K.expand_beliefs(post, close, z, beliefs, backend="numba")
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_small_work_uses_numpy():
    assert not K._use_numba(None, 10)
    assert not K._use_numba("numpy", 10 ** 9)


def test_env_flag_disables_numba():
    env = dict(os.environ, SWOPACITY_NUMBA="0")
    code = ("from swopacity import _kernels as K\n"
            "assert not K.HAVE_NUMBA\n"
            "try:\n    K._use_numba('numba', 1)\nexcept RuntimeError:\n    print('ok')\n")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "ok"


def test_benchmark_script_runs(tmp_path):
    out = tmp_path / "bench.json"
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    res = subprocess.run([sys.executable, str(script), "--sizes", "50", "--repeat", "1", "--json", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rows = json.loads(out.read_text())
    assert {r["kernel"] for r in rows} == {"ball_pairs", "close_matrix", "expand_beliefs", "check_opacity"}
