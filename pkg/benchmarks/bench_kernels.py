"""Compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 10000 100000 1000000] [--repeat 5]

Prints the best wall time per call for each kernel and size, the speedup,
and the largest absolute difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from hsliouville import _pykernels
from hsliouville.verify import random_states

try:
    from hsliouville import _ckernels
except ImportError:
    _ckernels = None

EPS = 1.0
RTOL = 1e-9


def cases(n, seed=0):
    rng = np.random.default_rng(seed)
    X, V = random_states(rng, n, EPS, "any")
    t = np.ascontiguousarray(rng.uniform(-3, 3, n))
    m = rng.standard_normal((n, 3))
    m = np.ascontiguousarray(m / np.linalg.norm(m, axis=1, keepdims=True))
    sheet = np.ascontiguousarray(rng.integers(1, 3, n).astype(np.int8))
    return {
        "classify": lambda k: k.classify(X, V, EPS, RTOL),
        "collision": lambda k: k.collision(X, V, EPS, RTOL),
        "reflect": lambda k: k.reflect(V, m),
        "flow": lambda k: k.flow(X, V, t, EPS, RTOL),
        "doubled_flow": lambda k: k.doubled_flow(X, V, sheet, t, EPS, RTOL),
        "sigma_star": lambda k: k.sigma_star(X, V, EPS, RTOL),
    }


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    worst = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        both = np.isnan(x) & np.isnan(y)
        worst = max(worst, float(np.max(np.where(both, 0.0, np.abs(x - y)), initial=0.0)))
    return worst


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':<14}{'n':>10}{'numpy [ms]':>13}{'cython [ms]':>13}{'speedup':>9}{'max |diff|':>12}")
    for n in args.sizes:
        for name, call in cases(n).items():
            tp = best_time(lambda: call(_pykernels), args.repeat)
            tc = best_time(lambda: call(_ckernels), args.repeat)
            d = max_diff(call(_pykernels), call(_ckernels))
            print(f"{name:<14}{n:>10}{1e3 * tp:>13.2f}{1e3 * tc:>13.2f}{tp / tc:>9.1f}{d:>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
