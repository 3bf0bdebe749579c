"""Compare the numba and pure-numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 1.0]

Prints the best wall time per kernel and backend and the speedup, after
checking that both backends agree on the inputs.  The first numba call
(compilation) is timed separately.
"""

import argparse
import time

import numpy as np

from faasmeter import _kernels as k


def _inputs(size: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_inv = int(200_000 * size)
    horizon = 3600.0 * size
    starts = np.sort(rng.uniform(0, horizon, n_inv))
    ends = starts + rng.lognormal(0.0, 0.8, n_inv)
    cols = rng.integers(0, 8, n_inv)
    weights = np.ones(n_inv)
    n_rows = int(np.ceil(ends.max()))
    w = rng.normal(50, 5, int(20_000 * size))
    r = np.roll(w, 3) + rng.normal(0, 1, w.size)
    return {
        "interval_overlap": (starts, ends, cols, weights, 0.0, 1.0, n_rows, 8),
        "fcfs_schedule": (starts, ends - starts, 16),
        "shift_objective": (w, r, 5),
    }


def _best(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="timed repetitions [count]")
    ap.add_argument("--size", type=float, default=1.0, help="problem size multiplier [dimensionless]")
    args = ap.parse_args(argv)
    if not k.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    print(f"{'kernel':<18}{'numpy s':>10}{'numba s':>10}{'compile s':>11}{'speedup':>9}")
    for name, inputs in _inputs(args.size).items():
        np_fn = getattr(k, f"{name}_numpy")
        nb_fn = getattr(k, f"{name}_numba")
        t = time.perf_counter()
        nb_fn(*inputs)
        compile_s = time.perf_counter() - t
        t_np, out_np = _best(np_fn, inputs, args.repeat)
        t_nb, out_nb = _best(nb_fn, inputs, args.repeat)
        pairs = zip(out_np, out_nb) if isinstance(out_np, tuple) else [(out_np, out_nb)]
        for a, b in pairs:
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
        print(f"{name:<18}{t_np:>10.4f}{t_nb:>10.4f}{compile_s:>11.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
