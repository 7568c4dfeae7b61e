"""Time the compiled kernels against the pure-Python fallback.

Each workload runs once per backend through the public API, and the two
outputs are compared for equality before the timings are printed.

    python3 benchmarks/bench_kernels.py [--repeat N] [--scale S]
"""
from __future__ import annotations

import argparse
import sys
import time
from contextlib import contextmanager

import numpy as np

from froglab import amenability as am, frog, kernels, tree as tm, walks

NAMES = ("frog_batch", "brw_batch", "erased_prefix_batch", "lerw_markov_batch")


@contextmanager
def using(module):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(module, n))
    try:
        yield
    finally:
        for n, fn in saved.items():
            setattr(kernels, n, fn)


def workloads(scale: int):
    reg = tm.build_tree(tm.spec("regular", 8, d=3))
    tw = tm.random_tw_tree(3, 4, 2, 8, 2)
    s = tw.level(2).start

    def standard():
        return frog.run_frog(reg, frog.FrogConfig(1.0, horizon=30, trials=40 * scale, seed=1)).returns

    def truncated():
        cfg = frog.FrogConfig(0.5, "truncated", horizon=30, trials=40 * scale, seed=2)
        return frog.run_frog(reg, cfg).returns

    def brw():
        return am.run_brw(reg, 0.05, 30, 100 * scale, seed=3).root_visits

    def markov():
        return walks.markov_prefixes(tw, s, 4, 2000 * scale, 4)

    def erased():
        return walks.erased_prefixes(tw, s, 4, 200 * scale, 5)

    return {"frog standard": standard, "frog truncated": truncated, "brw": brw,
            "lerw markov": markov, "lerw erased": erased}


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=int, default=10, help="multiply every workload size")
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    print(f"{'workload':<16} {'cython s':>10} {'python s':>10} {'speedup':>9}  equal")
    ok = True
    for name, fn in workloads(args.scale).items():
        with using(kernels.compiled_backend):
            tc, a = best_of(fn, args.repeat)
        with using(kernels.python_backend):
            tp, b = best_of(fn, 1)  # slow side, one run is enough
        same = np.array_equal(a, b)
        ok &= same
        print(f"{name:<16} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}x  {'yes' if same else 'NO'}")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
