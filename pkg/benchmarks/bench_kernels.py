"""Time the numba and numpy kernel paths side by side.

    python benchmarks/bench_kernels.py [--repeat 20]

Shapes follow a typical embed stage: 50 trials, 6 input channels, 1441 samples.
The numba column is skipped when numba is not importable.  Compilation happens
before timing starts.
"""

import argparse
import time

import numpy as np

from trailmark import _accel, _kernels


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def cases(rng):
    x = rng.normal(size=(50, 6, 1441))
    w = rng.normal(size=(4, 6, 3))
    bias = rng.normal(size=4)
    dy = rng.normal(size=(50, 4, 1441))
    pooled, idx = _kernels.maxpool2_forward_np(dy)
    pts = rng.normal(size=(500, 361))
    cents = rng.normal(size=(8, 361))
    return [
        ("conv1d_forward", (x, w, bias)),
        ("conv1d_backward", (x, w, dy)),
        ("maxpool2_forward", (dy,)),
        ("maxpool2_backward", (pooled, idx, dy.shape[2])),
        ("assign_nearest", (pts, cents)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, inputs in cases(rng):
        t_np = best_of(getattr(_kernels, name + "_np"), inputs, args.repeat)
        if _accel.HAVE_NUMBA:
            jitted = _accel.njit(getattr(_kernels, name + "_loop"))
            t_nb = best_of(jitted, inputs, args.repeat)
            print(f"{name:<20}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<20}{t_np * 1e3:>12.3f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
