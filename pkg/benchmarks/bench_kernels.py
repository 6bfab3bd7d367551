#!/usr/bin/env python3
"""Benchmark the hot kernels: numba loops vs the pure-numpy fallback, and the
dense pairwise path vs the FFT matvec.

The backend is fixed at import time by FRACWELL_BACKEND; to time the other
backend this script re-runs itself in a subprocess with the flag flipped.
Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_current_backend():
    from fracwell import kernels
    from fracwell.energy import KernelTable
    from fracwell.lattice import make_grid

    print(f"backend: {kernels.active_backend()}")
    rng = np.random.default_rng(0)
    cases = [(1, 256, 0.75), (1, 1024, 0.75), (1, 4096, 0.75),
             (2, 32, 0.75), (2, 64, 0.75)]
    header = f"{'case':>16} {'pair_dense':>12} {'matvec_dense':>13} {'matvec_fft':>12}"
    print(header)
    for d, n, s in cases:
        grid = make_grid(d, n, 1)
        kt = KernelTable.from_grid(grid, s)
        v = rng.standard_normal(grid.shape)
        # warm (jit compile / fft plan)
        kt.pair_energy(v)
        kt.matvec(v, path="dense")
        kt.matvec(v, path="fft")
        t_pair = _time(kt.pair_energy, v)
        t_md = _time(lambda: kt.matvec(v, path="dense"))
        t_mf = _time(lambda: kt.matvec(v, path="fft"))
        print(f"{f'd={d} n={n}':>16} {t_pair * 1e3:9.3f} ms"
              f" {t_md * 1e3:10.3f} ms {t_mf * 1e3:9.3f} ms")


def main():
    bench_current_backend()
    if os.environ.get("FRACWELL_BENCH_CHILD") != "1":
        env = dict(os.environ)
        env["FRACWELL_BENCH_CHILD"] = "1"
        other = ("numpy" if os.environ.get("FRACWELL_BACKEND", "auto")
                 in ("auto", "numba") else "numba")
        env["FRACWELL_BACKEND"] = other
        print()
        subprocess.run([sys.executable, os.path.abspath(__file__)], env=env,
                       check=False)


if __name__ == "__main__":
    main()
