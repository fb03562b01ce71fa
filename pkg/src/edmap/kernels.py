"""Hot numerical kernels, each in two interchangeable flavors.

Every function here is a tight loop that dominates some pipeline stage:
tridiagonal solves (elliptic pressure systems), leapfrog time stepping
(wave forward model), and pairwise-distance accumulation (energy
statistics).  Each kernel has a pure-numpy implementation (``*_np``)
and, when numba is importable, a compiled twin (``*_nb``).  The public
module-level names (``thomas_solve``, ``wave_field``, ...) point at the
compiled versions unless the environment variable ``EDMAP_NO_NUMBA`` is
set to ``1``/``true``/``yes``, in which case the numpy fallbacks are
used.  ``benchmarks/bench_kernels.py`` times one flavor against the
other.

The stepping/solve kernels evaluate identical floating-point expressions
in both flavors and agree bitwise; the distance reductions use different
summation orders (loop accumulation vs. BLAS) and agree to roundoff.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("EDMAP_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

if not NUMBA_DISABLED:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is an install dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------------------
# tridiagonal solve (Thomas algorithm)

def thomas_solve_np(lower, diag, upper, rhs):
    """Solve a tridiagonal system without pivoting.

    ``lower`` and ``upper`` hold the sub/super-diagonals (length n-1),
    ``diag`` the main diagonal (length n).  Intended for diagonally
    dominant systems (no pivoting); the elimination is inherently
    sequential, so the numpy flavor is a scalar loop.
    """
    n = diag.shape[0]
    cp = np.empty(n - 1)
    x = np.empty(n)
    beta = diag[0]
    x[0] = rhs[0] / beta
    for i in range(1, n):
        cp[i - 1] = upper[i - 1] / beta
        beta = diag[i] - lower[i - 1] * cp[i - 1]
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


# ---------------------------------------------------------------------------
# leapfrog wave stepping
#
# r holds (c_i * dt / dx)^2 per cell, src_t the time factor dt^2 * A * w(t_k)
# per step, src_x the spatial source profile.  Zero initial data; the first
# step is the Taylor start p^1 = dt^2 f(x, 0) / 2.  Neumann boundaries enter
# through mirrored ghost cells, which on the midpoint grid reduce to copying
# the first/last cell value.

def wave_field_np(r, src_t, src_x, n_steps):
    """Full space-time leapfrog solution, shape (n_steps + 1, n)."""
    n = r.shape[0]
    p = np.zeros((n_steps + 1, n))
    p[1] = 0.5 * src_t[0] * src_x
    lap = np.empty(n)
    for k in range(1, n_steps):
        cur = p[k]
        lap[1:-1] = cur[2:] - 2.0 * cur[1:-1] + cur[:-2]
        lap[0] = cur[1] - 2.0 * cur[0] + cur[0]
        lap[-1] = cur[n - 1] - 2.0 * cur[n - 1] + cur[n - 2]
        p[k + 1] = 2.0 * cur - p[k - 1] + r * lap + src_t[k] * src_x
    return p


def _wave_field_loops(r, src_t, src_x, n_steps):
    n = r.shape[0]
    p = np.zeros((n_steps + 1, n))
    for i in range(n):
        p[1, i] = 0.5 * src_t[0] * src_x[i]
    for k in range(1, n_steps):
        for i in range(n):
            left = p[k, i - 1] if i > 0 else p[k, 0]
            right = p[k, i + 1] if i < n - 1 else p[k, n - 1]
            lap = right - 2.0 * p[k, i] + left
            p[k + 1, i] = 2.0 * p[k, i] - p[k - 1, i] + r[i] * lap + src_t[k] * src_x[i]
    return p


def wave_records_np(r, src_t, src_x, rec_i0, rec_w, n_steps):
    """Leapfrog stepping that keeps only receiver traces, (n_steps + 1, n_rec).

    Receiver j reads (1 - w_j) * p[i0_j] + w_j * p[i0_j + 1] every step
    (linear interpolation between the two midpoints bracketing it).
    """
    n = r.shape[0]
    rec = np.zeros((n_steps + 1, rec_i0.shape[0]))
    prev = np.zeros(n)
    cur = 0.5 * src_t[0] * src_x
    rec[1] = (1.0 - rec_w) * cur[rec_i0] + rec_w * cur[rec_i0 + 1]
    lap = np.empty(n)
    for k in range(1, n_steps):
        lap[1:-1] = cur[2:] - 2.0 * cur[1:-1] + cur[:-2]
        lap[0] = cur[1] - 2.0 * cur[0] + cur[0]
        lap[-1] = cur[n - 1] - 2.0 * cur[n - 1] + cur[n - 2]
        nxt = 2.0 * cur - prev + r * lap + src_t[k] * src_x
        rec[k + 1] = (1.0 - rec_w) * nxt[rec_i0] + rec_w * nxt[rec_i0 + 1]
        prev = cur
        cur = nxt
    return rec


def _wave_records_loops(r, src_t, src_x, rec_i0, rec_w, n_steps):
    n = r.shape[0]
    nr = rec_i0.shape[0]
    rec = np.zeros((n_steps + 1, nr))
    prev = np.zeros(n)
    cur = np.zeros(n)
    nxt = np.zeros(n)
    for i in range(n):
        cur[i] = 0.5 * src_t[0] * src_x[i]
    for j in range(nr):
        rec[1, j] = (1.0 - rec_w[j]) * cur[rec_i0[j]] + rec_w[j] * cur[rec_i0[j] + 1]
    for k in range(1, n_steps):
        for i in range(n):
            left = cur[i - 1] if i > 0 else cur[0]
            right = cur[i + 1] if i < n - 1 else cur[n - 1]
            lap = right - 2.0 * cur[i] + left
            nxt[i] = 2.0 * cur[i] - prev[i] + r[i] * lap + src_t[k] * src_x[i]
        for j in range(nr):
            rec[k + 1, j] = (1.0 - rec_w[j]) * nxt[rec_i0[j]] + rec_w[j] * nxt[rec_i0[j] + 1]
        tmp = prev
        prev = cur
        cur = nxt
        nxt = tmp
    return rec


# ---------------------------------------------------------------------------
# pairwise-distance reductions for energy statistics
#
# The numpy flavor uses the Gram-matrix expansion ||a-b||^2 =
# ||a||^2 + ||b||^2 - 2 a.b in row chunks (BLAS-heavy, bounded memory);
# the loop flavor accumulates squared differences directly.  Summation
# order differs between the two, so agreement is to roundoff only.

def cross_mean_distance_np(a, b):
    """Mean Euclidean distance over all (row of a, row of b) pairs."""
    na = a.shape[0]
    nb = b.shape[0]
    bb = np.einsum("ij,ij->i", b, b)
    total = 0.0
    chunk = max(1, int(8_000_000 // max(nb, 1)))
    for start in range(0, na, chunk):
        blk = a[start : start + chunk]
        sq = np.einsum("ij,ij->i", blk, blk)[:, None] + bb[None, :] - 2.0 * (blk @ b.T)
        np.maximum(sq, 0.0, out=sq)
        total += float(np.sqrt(sq).sum())
    return total / (na * nb)


def _cross_mean_distance_loops(a, b):
    na, d = a.shape
    nb = b.shape[0]
    total = 0.0
    for i in range(na):
        for j in range(nb):
            s = 0.0
            for q in range(d):
                diff = a[i, q] - b[j, q]
                s += diff * diff
            total += np.sqrt(s)
    return total / (na * nb)


def within_mean_distance_np(a):
    """Mean Euclidean distance over distinct ordered row pairs of ``a``."""
    n = a.shape[0]
    if n < 2:
        return 0.0
    # diagonal pairs contribute exactly zero, so the full cross sum over
    # (a, a) equals the sum over distinct pairs
    return cross_mean_distance_np(a, a) * (n * n) / (n * (n - 1))


def _within_mean_distance_loops(a):
    n, d = a.shape
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for q in range(d):
                diff = a[i, q] - a[j, q]
                s += diff * diff
            total += np.sqrt(s)
    return 2.0 * total / (n * (n - 1))


# ---------------------------------------------------------------------------
# compiled twins + public binding

if HAVE_NUMBA:
    thomas_solve_nb = njit(cache=True)(thomas_solve_np)
    wave_field_nb = njit(cache=True)(_wave_field_loops)
    wave_records_nb = njit(cache=True)(_wave_records_loops)
    cross_mean_distance_nb = njit(cache=True)(_cross_mean_distance_loops)
    within_mean_distance_nb = njit(cache=True)(_within_mean_distance_loops)

if USE_NUMBA:
    thomas_solve = thomas_solve_nb
    wave_field = wave_field_nb
    wave_records = wave_records_nb
    cross_mean_distance = cross_mean_distance_nb
    within_mean_distance = within_mean_distance_nb
else:
    thomas_solve = thomas_solve_np
    wave_field = wave_field_np
    wave_records = wave_records_np
    cross_mean_distance = cross_mean_distance_np
    within_mean_distance = within_mean_distance_np
