"""Time the jitted kernels against the pure-numpy fallbacks.

Run from the repository root::

    python3 benchmarks/compare_backends.py [--grid N] [--levels D] [--repeats R]

Two layers are measured:

* kernel level — ``apply_stencil`` (the semi-Lagrangian gather that moves
  every phase-space field) and ``pointwise_min_eig`` (the per-node positivity
  certificate), calling the numba and numpy implementations directly on the
  same inputs inside one process;
* end-to-end — a short pointer measurement driven through the CLI in a child
  process per backend, because the kernel binding is chosen once at import
  time via ``HYBRIDQC_NO_NUMBA``.

The numba timings exclude compilation (one warm-up call per kernel).
"""

import argparse
import os
import subprocess
import sys
import tempfile
import textwrap
import time

import numpy as np

from hybridqc import (
    ClassicalHamiltonian,
    backend_name,
    gaussian_state,
    make_grid,
    product_state,
    pure_from_amplitudes,
)
from hybridqc import kernels
from hybridqc.backend import NUMBA_ENABLED
from hybridqc.phase_space import build_stencil


def time_call(fn, *args, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(n: int, d: int, repeats: int) -> None:
    grid = make_grid(-3.0, 3.0, -3.0, 3.0, n, n)
    stencil = build_stencil(grid, ClassicalHamiltonian.linear_p(1.0), dt=0.005)
    field = gaussian_state(grid, 0.0, 0.0, 0.25, 0.25).values.astype(np.complex128)
    amplitudes = np.full(d, 1.0 / np.sqrt(d))
    state = product_state(pure_from_amplitudes(amplitudes),
                          gaussian_state(grid, 0.0, 0.0, 0.25, 0.25))

    cases = [
        ("apply_stencil", (field, stencil.iq, stencil.ip, stencil.wq, stencil.wp),
         kernels._apply_stencil_numba, kernels._apply_stencil_numpy),
        ("pointwise_min_eig", (state.blocks,),
         kernels._pointwise_min_eig_numba, kernels._pointwise_min_eig_numpy),
    ]

    print(f"kernel timings on a {n}x{n} grid, {d} quantum levels "
          f"(best of {repeats}):")
    print(f"  {'kernel':<18} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, args, jitted, plain in cases:
        if NUMBA_ENABLED:
            jitted(*args)  # compile outside the timed region
            t_numba = time_call(jitted, *args, repeats=repeats)
        else:
            t_numba = np.nan
        t_numpy = time_call(plain, *args, repeats=repeats)
        speedup = t_numpy / t_numba if NUMBA_ENABLED else np.nan
        print(f"  {name:<18} {t_numba * 1e3:>8.2f}ms {t_numpy * 1e3:>8.2f}ms "
              f"{speedup:>7.1f}x")


POINTER_INI = textwrap.dedent("""\
    [quantum]
    amplitudes = 0.7071067811865476,0 0.7071067811865476,0
    eigenvalues = 1 -1

    [classical]
    q_min = -3.0
    q_max = 3.0
    p_min = -3.0
    p_max = 3.0
    n_q = {n}
    n_p = {n}
    q0 = 0.0
    p0 = 0.0
    sigma_q = 0.25
    sigma_p = 0.25
    coupling = linear_p

    [run]
    name = bench
    dt = 0.005
    t_final = 0.25
""")


def bench_end_to_end(n: int) -> None:
    print(f"\nend-to-end pointer run ({n}x{n} grid, 50 steps), one process per backend:")
    for label, extra_env in (("numba", {}), ("numpy", {"HYBRIDQC_NO_NUMBA": "1"})):
        with tempfile.TemporaryDirectory() as scratch:
            cfg = os.path.join(scratch, "bench.ini")
            with open(cfg, "w") as handle:
                handle.write(POINTER_INI.format(n=n))
                handle.write(f"\n[output]\ndirectory = {scratch}\n")
            env = dict(os.environ, **extra_env)
            start = time.perf_counter()
            proc = subprocess.run(
                [sys.executable, "-m", "hybridqc", "simulate", cfg],
                capture_output=True, text=True, env=env,
            )
            elapsed = time.perf_counter() - start
        if proc.returncode not in (0, 2):
            print(f"  {label:<6} FAILED: {proc.stderr.strip()}")
            continue
        note = "" if label == "numba" else "  (includes no JIT warm-up)"
        print(f"  {label:<6} {elapsed:6.2f}s{note}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=int, default=256, help="nodes per axis")
    parser.add_argument("--levels", type=int, default=2, help="quantum levels")
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats")
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args()

    print(f"active backend in this process: {backend_name()}")
    if not NUMBA_ENABLED:
        print("numba is disabled or unavailable; numba columns will be blank")
    bench_kernels(args.grid, args.levels, args.repeats)
    if not args.skip_end_to_end:
        bench_end_to_end(args.grid)


if __name__ == "__main__":
    main()
