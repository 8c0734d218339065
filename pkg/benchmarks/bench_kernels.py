"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--sizes 200 1000 4000] [--repeat 5] [--json out.json]

Each kernel is called once per backend before timing so jit compilation
is excluded.  Outputs of both backends are compared on every size.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from swopacity import _kernels
from swopacity.opacity import check_opacity
from swopacity.transys import FiniteTransitionSystem


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _random_system(rng: np.random.Generator, n: int) -> FiniteTransitionSystem:
    src = np.repeat(np.arange(n), 3)
    dst = rng.integers(0, n, src.size)
    rows = np.stack([src, np.zeros_like(src), -np.ones_like(src), dst], axis=1)
    return FiniteTransitionSystem(
        name="bench", labels=tuple((k,) for k in range(n)), initial=np.arange(n), secret=np.arange(0, n, 7),
        inputs=(0,), transitions=rows.astype(np.int64), outputs=rng.integers(0, 8, (n, 1)) / 10.0, kind="network")


def cases(size: int, rng: np.random.Generator):
    images = rng.uniform(0, 1, (size, 2))
    grid = rng.uniform(0, 1, (size, 2))
    yield "ball_pairs", (lambda b: _kernels.ball_pairs(images, grid, 0.05, backend=b)), \
        lambda x, y: all(np.array_equal(p, q) for p, q in zip(x, y))
    a = rng.uniform(0, 1, (size, 1))
    yield "close_matrix", (lambda b: _kernels.close_matrix(a, a, 0.1, backend=b)), np.array_equal
    n = max(8, size // 10)
    post = rng.random((n, n)) < 3.0 / n
    close = rng.random((n, n)) < 0.3
    z = rng.integers(0, n, 64)
    beliefs = rng.random((64, n)) < 0.2
    yield "expand_beliefs", (lambda b: _kernels.expand_beliefs(post, close, z, beliefs, backend=b)), \
        lambda x, y: all(np.array_equal(p, q) for p, q in zip(x, y))
    T = _random_system(rng, n)
    yield "check_opacity", (lambda b: check_opacity(T, 0.1, backend=b)), \
        lambda x, y: (x.opaque, x.counterexample) == (y.opaque, y.counterexample)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write the results to this file")
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable or disabled (SWOPACITY_NUMBA=0); timing the numpy path only", file=sys.stderr)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    rows = []
    print(f"{'kernel':<16}{'size':>7}" + "".join(f"{b + ' [ms]':>14}" for b in backends) + f"{'speedup':>10}")
    for size in args.sizes:
        rng = np.random.default_rng(args.seed)
        for name, fn, same in cases(size, rng):
            results = {b: fn(b) for b in backends}          # warm-up, also compiles
            if len(backends) == 2 and not same(results["numpy"], results["numba"]):
                raise SystemExit(f"{name} at size {size}: backends disagree")
            t = {b: _best(lambda: fn(b), args.repeat) for b in backends}
            speed = t["numpy"] / t["numba"] if "numba" in t and t["numba"] > 0 else float("nan")
            rows.append({"kernel": name, "size": size, **{f"{b}_s": v for b, v in t.items()}, "speedup": speed})
            print(f"{name:<16}{size:>7}" + "".join(f"{t[b] * 1e3:>14.3f}" for b in backends) + f"{speed:>10.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
