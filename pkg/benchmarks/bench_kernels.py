"""Compare the compiled and the vectorized simulator kernels.

Runs both backends on the same replicate streams, checks that the outputs are
identical and prints wall-clock time per replicate.  Usage::

    python benchmarks/bench_kernels.py [--reps N] [--grid-size M]
"""
from __future__ import annotations

import argparse
import os
import time

import numpy as np

from tiltmax.grid import Grid
from tiltmax.kernels import sup_and_logsum
from tiltmax.simulate import simulate_fields
from tiltmax.spectral import fbm


def _timed(fn, backend: str):
    os.environ["TILTMAX_BACKEND"] = backend
    try:
        fn()  # warm-up and compilation
        t0 = time.perf_counter()
        out = fn()
        return out, time.perf_counter() - t0
    finally:
        os.environ.pop("TILTMAX_BACKEND", None)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--grid-size", type=int, default=9)
    args = parser.parse_args(argv)

    grid = Grid.lattice(0.5, 0.0, 0.5 * (args.grid_size - 1), 1)
    model = fbm(1.0)
    cases = {
        "dm": lambda: simulate_fields(model, grid, args.reps, 7, method="dm").values,
        "direct": lambda: simulate_fields(model, grid, args.reps, 7, method="direct").values,
        "sup-logsum": lambda: np.concatenate(
            sup_and_logsum(np.random.default_rng(0).normal(size=(args.reps * 50, 33))))
    }
    print(f"{'kernel':<12}{'numba [us/rep]':>16}{'numpy [us/rep]':>16}{'speed-up':>10}  identical")
    for name, fn in cases.items():
        fast, t_nb = _timed(fn, "numba")
        slow, t_np = _timed(fn, "numpy")
        same = np.array_equal(fast, slow) or np.allclose(fast, slow, rtol=1e-12, atol=1e-12)
        print(f"{name:<12}{1e6 * t_nb / args.reps:>16.1f}{1e6 * t_np / args.reps:>16.1f}"
              f"{t_np / t_nb:>10.2f}  {same}")


if __name__ == "__main__":
    main()
