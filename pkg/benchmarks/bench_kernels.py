"""Time the compiled kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--sizes 365,730,1460]

Both backends are imported directly, so the ``CMPGRAPH_PURE_PYTHON``
switch has no effect here. Results are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from cmpgraph import _pykernels
from cmpgraph.cmp import FLAT_STD, max_distance

try:
    from cmpgraph import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(n: int, rng: np.random.Generator):
    series = rng.poisson(4.0, size=n).astype(np.float64)
    D = _pykernels.distance_matrix(series, 3, FLAT_STD)
    scores = rng.gamma(2.0, size=n)
    return {
        "distance_matrix": lambda k: k.distance_matrix(series, 3, FLAT_STD),
        "context_min_pool": lambda k: k.context_min_pool(D, 3, 3, max_distance(3)),
        "rolling_threshold": lambda k: k.rolling_threshold(scores, 7, 1.0, 7, 1e-12, False),
        "rolling_threshold_masked": lambda k: k.rolling_threshold(scores, 7, 1.0, 7, 1e-12, True),
    }


def best_time(fn, repeat: int) -> float:
    t = timeit.Timer(fn)
    number, _ = t.autorange()
    return min(t.repeat(repeat=repeat, number=number)) / number


def check_agreement(a, b) -> None:
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12, equal_nan=True)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", default="365,730,1460")
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'n':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, run in cases(n, rng).items():
            check_agreement(run(_pykernels), run(_ckernels))
            tp = best_time(lambda: run(_pykernels), args.repeat)
            tc = best_time(lambda: run(_ckernels), args.repeat)
            print(f"{name:<26}{n:>6}{tp * 1e3:>12.3f}{tc * 1e3:>12.3f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
