"""Timing comparison of the numba and numpy kernel backends.

Runs each kernel on training-shaped workloads (the shapes one epoch of the
default desk configuration actually sees) and prints per-call milliseconds
for every importable backend, plus the ratio. Numbers are medians over
``--reps`` timed repetitions after a warmup call (the warmup also absorbs
numba JIT compilation, which is cached across runs).

Usage:
    python3 benchmarks/bench_kernels.py [--reps 20]
"""

import argparse
import time

import numpy as np

from forcesense.kernels import available_backends


def _timeit(fn, reps: int) -> float:
    fn()  # warmup / JIT
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples)) * 1e3


def workloads(rng: np.random.Generator):
    """(name, kernel, args) triples at the shapes the trainer produces.

    Batch 46 is the typical unique-frame count a 32-window time-local batch
    expands to with 15-frame windows.
    """
    w = []

    # RGB encoder convs: 32x32x3 -> 16x16x8 -> 8x8x16, stride 2
    x1 = rng.standard_normal((46, 3, 32, 32))
    w1 = rng.standard_normal((8, 3, 3, 3)) * 0.1
    b1 = rng.standard_normal(8) * 0.1
    dy1 = rng.standard_normal((46, 8, 16, 16))
    w.append(("conv2d fwd 46x3x32x32 -> 8ch s2", "conv2d_forward", (x1, w1, b1, 2)))
    w.append(("conv2d bwd 46x3x32x32 -> 8ch s2", "conv2d_backward", (x1, w1, dy1, 2)))

    x2 = rng.standard_normal((46, 8, 16, 16))
    w2 = rng.standard_normal((16, 3, 3, 8)) * 0.1
    b2 = rng.standard_normal(16) * 0.1
    dy2 = rng.standard_normal((46, 16, 8, 8))
    w.append(("conv2d fwd 46x8x16x16 -> 16ch s2", "conv2d_forward", (x2, w2, b2, 2)))
    w.append(("conv2d bwd 46x8x16x16 -> 16ch s2", "conv2d_backward", (x2, w2, dy2, 2)))

    # TCN convs over 15-frame windows, batch 32
    xt = rng.standard_normal((32, 96, 15))
    wt = rng.standard_normal((96, 3, 96)) * 0.05
    bt = rng.standard_normal(96) * 0.05
    dyt = rng.standard_normal((32, 96, 15))
    w.append(("conv1d fwd 32x96x15 -> 96ch", "conv1d_forward", (xt, wt, bt)))
    w.append(("conv1d bwd 32x96x15 -> 96ch", "conv1d_backward", (xt, wt, dyt)))

    # point max-pool over 256-point clouds
    xp = rng.standard_normal((46, 256, 32))
    yp, ip = available_backends()["numpy"].maxpool_points_forward(xp)
    dyp = rng.standard_normal(yp.shape)
    w.append(("maxpool fwd 46x256x32", "maxpool_points_forward", (xp,)))
    w.append(("maxpool bwd 46x256x32", "maxpool_points_backward", (dyp, ip, 256)))
    return w


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()

    backends = available_backends()
    rng = np.random.default_rng(0)
    rows = []
    for name, fn_name, fn_args in workloads(rng):
        times = {}
        for bname, mod in backends.items():
            fn = getattr(mod, fn_name)
            times[bname] = _timeit(lambda: fn(*fn_args), args.reps)
        rows.append((name, times))

    names = list(backends)
    header = f"{'workload':<36}" + "".join(f"{n + ' (ms)':>14}" for n in names)
    if len(names) == 2:
        header += f"{names[1] + '/' + names[0]:>14}"
    print(header)
    print("-" * len(header))
    for name, times in rows:
        line = f"{name:<36}" + "".join(f"{times[n]:>14.3f}" for n in names)
        if len(names) == 2:
            line += f"{times[names[1]] / times[names[0]]:>14.2f}"
        print(line)


if __name__ == "__main__":
    main()
