"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--threads 1 4] [--repeat 5]

Prints best-of-``repeat`` wall times and checks that both backends return
identical arrays.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from mfpmp import _kernels, _pykernels

try:
    from mfpmp import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _cases(n, d, rng):
    psi = rng.standard_normal((n, d))
    G = rng.standard_normal((n, n, d, d))
    y = rng.standard_normal((n, d))
    g = rng.standard_normal((n, n, d))
    cost = rng.random((n, n))
    return {
        "covector_pair_average": (lambda m, t: m.covector_pair_average(psi, G, t), True),
        "vector_pair_average": (lambda m, t: m.vector_pair_average(G, y, t), True),
        "pair_average": (lambda m, t: m.pair_average(g, t), True),
        "linear_assignment": (lambda m, t: np.asarray(m.linear_assignment(cost)), False),
    }


def _costate_timing(n, repeat):
    from mfpmp import ControlField, Ensemble, TimeGrid, costate_solve, forward_solve
    from mfpmp.fixtures import mean_reversion

    p = mean_reversion(dim=2, kappa=1.0, wobble=0.3, q=1.0, c=1.0, s=0.5)
    grid = TimeGrid(0.0, 1.0, 50)
    x0 = Ensemble(np.random.default_rng(0).standard_normal((n, 2)))
    u = ControlField.constant(grid, n, [0.1, -0.1])
    traj = forward_solve(p, x0, u)
    out = {}
    saved = _kernels._impl
    try:
        for name, impl in (("python", _pykernels), ("cython", _ckernels)):
            if impl is None:
                continue
            _kernels._impl = impl
            out[name] = _best(lambda: costate_solve(p, traj, u), repeat)
    finally:
        _kernels._impl = saved
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'N':>6}{'threads':>9}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}  identical")
    for n in args.sizes:
        for name, (call, threaded) in _cases(n, args.dim, rng).items():
            ref = call(_pykernels, 1)
            tp = _best(lambda: call(_pykernels, 1), args.repeat)
            for t in args.threads if threaded else [1]:
                if _ckernels is None:
                    print(f"{name:<24}{n:>6}{t:>9}{tp * 1e3:>14.3f}{'-':>14}{'-':>10}")
                    continue
                tc = _best(lambda: call(_ckernels, t), args.repeat)
                same = np.array_equal(ref, call(_ckernels, t))
                print(f"{name:<24}{n:>6}{t:>9}{tp * 1e3:>14.3f}{tc * 1e3:>14.3f}{tp / tc:>10.1f}  {same}")
    print()
    print("costate_solve, mean_reversion d=2, 50 steps")
    for n in args.sizes:
        times = _costate_timing(n, max(1, args.repeat // 2))
        row = "  ".join(f"{k} {v * 1e3:.1f} ms" for k, v in times.items())
        print(f"  N={n:<5}{row}")


if __name__ == "__main__":
    main()
