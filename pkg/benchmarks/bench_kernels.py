"""Time the compiled kernels against their pure-numpy twins.

Each hot kernel in ``edmap.kernels`` exists in two flavors: a numpy
implementation and (when numba is importable) an ``@njit``-compiled
version.  This script times both on workloads shaped like the ones the
package actually runs — tridiagonal pressure solves, leapfrog wave
stepping, and the pairwise-distance reductions inside the energy
objective — and cross-checks that the flavors agree numerically before
reporting any timing.

Speedups are workload-dependent and not uniformly in numba's favor: the
numpy distance reductions go through one BLAS Gram matrix, which beats
the compiled scalar loops once clouds are a few thousand points wide.
The numbers printed here are whatever the current machine measures.

Run from the repository root::

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --heavy
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from edmap import kernels


def _best_of(fn, args, repeats: int) -> float:
    """Minimum wall time over ``repeats`` calls, in seconds."""
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _workloads(heavy: bool, rng: np.random.Generator):
    """Yield (name, np_fn, nb_fn, args, agreement_tol) tuples.

    ``agreement_tol`` is an absolute bound on the max elementwise
    difference: 0.0 for the stepping/solve kernels (identical FP
    expression order in both flavors), roundoff-scale for the distance
    reductions (loop accumulation vs. BLAS).
    """
    n_tri = 200_000 if heavy else 20_000
    lower = -rng.uniform(0.1, 1.0, n_tri - 1)
    upper = -rng.uniform(0.1, 1.0, n_tri - 1)
    diag = np.empty(n_tri)
    diag[:-1] = -lower + 1.0
    diag[0] += 1.0
    diag[1:] -= upper
    diag[-1] = -lower[-1] - upper[-1] + 2.0
    rhs = rng.standard_normal(n_tri)
    yield (
        f"thomas_solve       n={n_tri}",
        kernels.thomas_solve_np,
        "thomas_solve_nb",
        (lower.copy(), diag.copy(), upper.copy(), rhs.copy()),
        0.0,
    )

    n_grid = 512 if heavy else 128
    n_steps = 4 * n_grid
    r = np.full(n_grid, 0.45)
    src_t = 50.0 * np.sin(np.linspace(0.0, 12.0, n_steps)) * np.exp(
        -np.linspace(0.0, 6.0, n_steps)
    )
    src_x = np.exp(-0.5 * ((np.arange(n_grid) / n_grid - 0.5) / 0.02) ** 2)
    yield (
        f"wave_field         n={n_grid} steps={n_steps}",
        kernels.wave_field_np,
        "wave_field_nb",
        (r, src_t, src_x, n_steps),
        0.0,
    )

    rec_i0 = np.linspace(2, n_grid - 3, 8).astype(np.int64)
    rec_w = np.full(8, 0.25)
    yield (
        f"wave_records       n={n_grid} steps={n_steps} rec=8",
        kernels.wave_records_np,
        "wave_records_nb",
        (r, src_t, src_x, rec_i0, rec_w, n_steps),
        0.0,
    )

    for rows, dim in ((4000, 1), (1000, 64), (4000, 64) if heavy else (2000, 64)):
        a = rng.standard_normal((rows, dim))
        b = rng.standard_normal((rows, dim))
        yield (
            f"cross_mean_dist    ({rows},{dim})",
            kernels.cross_mean_distance_np,
            "cross_mean_distance_nb",
            (a, b),
            1e-9,
        )
        yield (
            f"within_mean_dist   ({rows},{dim})",
            kernels.within_mean_distance_np,
            "within_mean_distance_nb",
            (a,),
            1e-9,
        )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats (best-of)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--heavy", action="store_true", help="larger workloads (tens of seconds)"
    )
    args = parser.parse_args()

    if not kernels.HAVE_NUMBA:
        reason = "EDMAP_NO_NUMBA is set" if kernels.NUMBA_DISABLED else "numba not importable"
        print(f"compiled flavor unavailable ({reason}); nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    header = f"{'kernel / workload':<40} {'numpy':>10} {'numba':>10} {'speedup':>8}  agreement"
    print(header)
    print("-" * len(header))

    for name, np_fn, nb_name, call_args, tol in _workloads(args.heavy, rng):
        nb_fn = getattr(kernels, nb_name)
        ref = np_fn(*call_args)
        got = nb_fn(*call_args)  # first call also JIT-compiles
        diff = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
        if diff > tol:
            raise AssertionError(f"{name}: flavors disagree by {diff:.3e} (tol {tol:.1e})")
        t_np = _best_of(np_fn, call_args, args.repeats)
        t_nb = _best_of(nb_fn, call_args, args.repeats)
        note = "bitwise" if tol == 0.0 else f"max|d|={diff:.1e}"
        print(
            f"{name:<40} {1e3 * t_np:>8.2f}ms {1e3 * t_nb:>8.2f}ms "
            f"{t_np / t_nb:>7.2f}x  {note}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
