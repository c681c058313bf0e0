"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 100,400,1600] [--steps 2000]

Reports microseconds per explicit step (advance) and per Poisson solve for
each importable backend, plus the speed-up of cython over python.
"""
import argparse
import time

import numpy as np

from kscrit import _backend
from kscrit.core import make_uniform_grid


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(mod, n, steps, repeat):
    g = make_uniform_grid(3, 1.0, n)
    vol, area, h = g.cell_volumes, g.face_areas, g.center_spacing
    u0 = 1.0 + 50.0 * np.exp(-g.centers**2 / 0.02)
    m = 4.0 / 3.0

    def adv():
        mod.advance(u0, vol, area, h, m, 1e-3, 0.4, 1e-14, 1.0, 0.0, np.inf, steps)

    def poi():
        for _ in range(steps):
            mod.poisson_gradient(u0, vol, area)

    return _best(adv, repeat) / steps * 1e6, _best(poi, repeat) / steps * 1e6


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="100,400,1600")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = _backend.available()
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"{'n':>6} {'backend':>8} {'step_us':>10} {'poisson_us':>11} {'speedup':>8}")
    for n in sizes:
        ref = None
        for name in ("python", "cython"):
            if name not in backends:
                continue
            s, p = bench(backends[name], n, args.steps, args.repeat)
            ref = ref or s
            print(f"{n:>6} {name:>8} {s:>10.2f} {p:>11.2f} {ref / s:>8.1f}")
    if "cython" not in backends:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
