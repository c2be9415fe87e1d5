"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 513]

Both variants live in the same module, so one process times both; the
``CRESTFIELD_BACKEND`` flag only picks which one the library calls.
"""

import argparse
import timeit

import numpy as np

from crestfield import kernels


def _cases(size, rng):
    grid = rng.normal(size=(size, size, 1))
    v = np.abs(rng.normal(size=size * size))
    pts = rng.uniform(size=(size * size // 4, 2))
    bpts = rng.uniform(size=(4 * size, 2))
    bvals = rng.normal(size=4 * size)
    h = 1.0 / (size - 1)
    return {
        "diff1 axis 0": lambda k: kernels._along_axis(k["diff1"], grid, h, 0),
        "diff2 axis 1": lambda k: kernels._along_axis(k["diff2"], grid, h, 1),
        "power_sum p=8": lambda k: k["power_sum"](v, 8.0, v.max()),
        "envelope min": lambda k: k["envelope"](pts, bpts, bvals, 1.0, 1.0),
    }


KERNELS = {
    "numba": {"diff1": kernels._diff1_numba, "diff2": kernels._diff2_numba,
              "power_sum": kernels._power_sum_numba, "envelope": kernels._envelope_numba},
    "numpy": {"diff1": kernels._diff1_numpy, "diff2": kernels._diff2_numpy,
              "power_sum": kernels._power_sum_numpy, "envelope": kernels._envelope_numpy},
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=513, help="nodes per axis of the 2D test grid")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = _cases(args.size, np.random.default_rng(0))
    print(f"{'kernel':<16}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, run in cases.items():
        best = {}
        for backend, table in KERNELS.items():
            run(table)  # compile / warm caches
            best[backend] = min(timeit.repeat(lambda: run(table), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{best['numba']:>12.3f}{best['numpy']:>12.3f}{best['numpy'] / best['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
