"""Compare the compiled and interpreted kernel paths.

Runs the RK4 sweep and the per-cell Simpson rule on the same inputs through
both paths, checks that they agree, and prints the timings::

    python3 benchmarks/bench_kernels.py --horizon 333 --step 5e-3 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from shallowlake import kernels
from shallowlake.control import ControlSignal
from shallowlake.dynamics import make_lake_dynamics, substeps


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=float, default=333.0)
    parser.add_argument("--step", type=float, default=5e-3)
    parser.add_argument("--cells", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if kernels.jit_rk4_cells is None:
        print("numba not installed; only the interpreted path is available")
        return 1
    rng = np.random.default_rng(args.seed)
    spec = make_lake_dynamics(1.0)
    u = ControlSignal.uniform(10.0, np.exp(rng.uniform(-3.0, 2.0, args.cells)))
    knots, rates = u.cells(args.horizon)
    nsub = substeps(knots, args.step)

    def sweep(use_numba):
        return kernels.sweep(spec.kind, spec.coef, spec.F, 1.0, knots, rates, nsub, 0.03, use_numba)

    # warm-up compiles (or loads the cache)
    t_jit, x_jit, q_jit, _, _ = sweep(True)
    t_py, x_py, q_py, _, _ = sweep(False)
    f = np.exp(-0.03 * t_jit) * x_jit ** 2
    s_jit = kernels.simpson_cells(t_jit, f, nsub, use_numba=True)
    s_py = kernels.simpson_cells(t_jit, f, nsub, use_numba=False)

    rows = [
        ("rk4 sweep", _best_of(lambda: sweep(True), args.repeat), _best_of(lambda: sweep(False), args.repeat),
         float(np.max(np.abs(x_jit - x_py)))),
        ("cell simpson", _best_of(lambda: kernels.simpson_cells(t_jit, f, nsub, use_numba=True), args.repeat),
         _best_of(lambda: kernels.simpson_cells(t_jit, f, nsub, use_numba=False), args.repeat),
         abs(s_jit - s_py)),
    ]
    print(f"steps: {int(nsub.sum())}  (horizon {args.horizon:g}, step {args.step:g})")
    print(f"{'kernel':<14}{'numba [s]':>12}{'python [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, tj, tp, diff in rows:
        print(f"{name:<14}{tj:>12.4g}{tp:>12.4g}{tp / tj:>10.1f}{diff:>12.2e}")
    print(f"final q: numba {float(q_jit[-1])!r}, python {float(q_py[-1])!r}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
