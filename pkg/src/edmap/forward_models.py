"""The three forward operators: quadratic scalar map, 1D Darcy pressure
observation, and a 1D wave equation with level-set wavespeed and
first-arrival extraction.

All PDE work happens on the same midpoint grid as the prior fields.  The
Darcy discretization is conservative with harmonic-mean interface
coefficients; its boundary fluxes come from one-sided quadratic
reconstructions so that constant-coefficient quadratic solutions are
reproduced exactly (the scheme's self-test).  The wave solver is plain
leapfrog with mirrored-ghost Neumann boundaries and a separable
Ricker-in-time / Gaussian-in-space source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grf import GridField, field_values, midpoints

_SIGMA_OBS_MIN = 1e-12


@dataclass(frozen=True)
class DarcyConfig:
    """Grid size and observation locations for the Darcy problem."""

    n: int = 64
    obs_points: tuple = tuple(j / 9 for j in range(1, 9))

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        pts = np.asarray(self.obs_points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("obs_points must be a nonempty sequence")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("obs_points must be strictly increasing")
        if pts[0] <= 0 or pts[-1] >= 1:
            raise ValueError("obs_points must be strictly interior to (0,1)")


@dataclass(frozen=True)
class WaveConfig:
    """Discretization, source, receivers and thresholding for the wave problem."""

    n: int = 128
    t_final: float = 1.0
    cfl: float = 0.5
    receivers: tuple = tuple(j / 9 for j in range(1, 9))
    x_s: float = 0.5
    w_s: float = 0.02
    f0: float = 15.0
    t0: float = 0.1
    amplitude: float = 100.0
    threshold_frac: float = 0.2
    c_high: float = math.exp(0.27)
    c_low: float = math.exp(-0.27)

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if not 0 < self.cfl < 1:
            raise ValueError(f"cfl must lie in (0,1), got {self.cfl}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        rec = np.asarray(self.receivers, dtype=float)
        if rec.size == 0 or np.any(rec <= 0) or np.any(rec >= 1):
            raise ValueError("receivers must be interior to (0,1)")
        # the thresholding example at frac = 1.0 (arrival = time of the peak)
        # is a legal boundary case, so the open interval excludes only 0
        if not 0 < self.threshold_frac <= 1:
            raise ValueError("threshold_frac must lie in (0,1]")
        if not 0 < self.c_low < self.c_high:
            raise ValueError("need 0 < c_low < c_high")
        if self.w_s <= 0 or self.f0 <= 0:
            raise ValueError("w_s and f0 must be positive")

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)


@dataclass
class Observation:
    """Noisy observation vector with its noise scale."""

    y: np.ndarray
    sigma_obs: float

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observation entries must be finite")
        if not self.sigma_obs >= _SIGMA_OBS_MIN:
            raise ValueError(
                f"sigma_obs must be >= {_SIGMA_OBS_MIN:g}, got {self.sigma_obs}"
            )


def quadratic_forward(u):
    """G(u) = u^2 (works on scalars and arrays)."""
    return np.square(u)


# ---------------------------------------------------------------------------
# Darcy: -(a p')' = 1 on (0,1), p(0) = p(1) = 0, a = exp(u)


def darcy_solve(log_perm, cfg: DarcyConfig = DarcyConfig()) -> GridField:
    """Pressure for -(exp(u) p')' = 1 with homogeneous Dirichlet ends.

    Conservative second-order scheme: interior interface coefficients are
    harmonic means of the adjacent cell coefficients; at each boundary the
    flux is evaluated from the quadratic through the boundary value and the
    two nearest midpoints, with the coefficient log-linearly extrapolated.
    The resulting tridiagonal system is an M-matrix (solved by Thomas
    elimination without pivoting).
    """
    u = field_values(log_perm)
    n = u.shape[0]
    if n != cfg.n:
        raise ValueError(f"field has n={n}, config expects n={cfg.n}")
    h = 1.0 / n
    a = np.exp(u)
    w = 2.0 * a[:-1] * a[1:] / (a[:-1] + a[1:])  # interfaces 1..n-1
    a_b0 = math.exp((3.0 * u[0] - u[1]) / 2.0)
    a_b1 = math.exp((3.0 * u[-1] - u[-2]) / 2.0)

    diag = np.empty(n)
    lower = np.empty(n - 1)
    upper = np.empty(n - 1)
    diag[0] = w[0] + 3.0 * a_b0
    upper[0] = -(w[0] + a_b0 / 3.0)
    diag[1:-1] = w[:-1] + w[1:]
    lower[:-1] = -w[:-1]
    upper[1:] = -w[1:]
    diag[-1] = w[-1] + 3.0 * a_b1
    lower[-1] = -(w[-1] + a_b1 / 3.0)
    rhs = np.full(n, h * h)

    p = kernels.thomas_solve(lower, diag, upper, rhs)
    assert np.all(np.isfinite(p)), "tridiagonal solve produced non-finite pressure"
    return GridField(p)


def darcy_observe(p, cfg: DarcyConfig = DarcyConfig()) -> np.ndarray:
    """Pressure linearly interpolated at the observation points."""
    v = field_values(p)
    return np.interp(np.asarray(cfg.obs_points, dtype=float), midpoints(v.shape[0]), v)


def darcy_forward(log_perm, cfg: DarcyConfig = DarcyConfig()) -> np.ndarray:
    """G(u) for the Darcy experiment: solve then observe."""
    return darcy_observe(darcy_solve(log_perm, cfg), cfg)


# ---------------------------------------------------------------------------
# wave: p_tt - c^2 p_xx = f, Neumann boundaries, zero initial data


def levelset(u, cfg: WaveConfig = WaveConfig()) -> GridField:
    """Binary wavespeed: c_high where u > 0, c_low where u <= 0."""
    v = field_values(u)
    return GridField(np.where(v > 0, cfg.c_high, cfg.c_low))


def ricker(t, f0: float, t0: float):
    """Ricker wavelet (second derivative of a Gaussian), peak at t0."""
    arg = (np.pi * f0 * (np.asarray(t, dtype=float) - t0)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def _source_profiles(c: np.ndarray, cfg: WaveConfig):
    """Time grid plus the separable source factors used by the kernels."""
    n = c.shape[0]
    dx = 1.0 / n
    c_max = float(np.max(c))
    if not (c_max > 0 and np.all(np.isfinite(c)) and np.all(c > 0)):
        raise ValueError("wavespeed must be finite and positive")
    dt = cfg.cfl * dx / c_max
    r = (c * dt / dx) ** 2
    if np.max(r) > 1.0:
        raise ValueError(
            f"CFL violation: max (c dt/dx)^2 = {np.max(r):.3f} > 1"
        )
    n_steps = int(math.ceil(cfg.t_final / dt))
    t = np.arange(n_steps + 1) * dt
    src_t = dt * dt * cfg.amplitude * ricker(t, cfg.f0, cfg.t0)
    x = midpoints(n)
    src_x = np.exp(-((x - cfg.x_s) ** 2) / (2.0 * cfg.w_s**2))
    return t, r, src_t, src_x, n_steps


def _receiver_weights(n: int, cfg: WaveConfig):
    """Bracketing midpoint index and interpolation weight per receiver."""
    pos = np.asarray(cfg.receivers, dtype=float) * n - 0.5
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    wgt = np.clip(pos - i0, 0.0, 1.0)
    return i0, wgt


def wave_solve(c, cfg: WaveConfig = WaveConfig()):
    """Full space-time field; returns (t, p) with p of shape (n_t + 1, n)."""
    cv = field_values(c)
    t, r, src_t, src_x, n_steps = _source_profiles(cv, cfg)
    return t, kernels.wave_field(r, src_t, src_x, n_steps)


def wave_record(c, cfg: WaveConfig = WaveConfig()):
    """Receiver traces only; returns (t, records) with records (n_t + 1, N_r)."""
    cv = field_values(c)
    t, r, src_t, src_x, n_steps = _source_profiles(cv, cfg)
    i0, wgt = _receiver_weights(cv.shape[0], cfg)
    return t, kernels.wave_records(r, src_t, src_x, i0, wgt, n_steps)


def arrival_times(records, t, cfg: WaveConfig = WaveConfig()) -> np.ndarray:
    """First time each |trace| exceeds threshold_frac of its own maximum.

    The crossing is linearly interpolated between the bracketing time
    samples.  A trace that never moves has no arrival and is an error.
    """
    rec = np.asarray(records, dtype=float)
    if rec.ndim != 2 or rec.shape[0] != t.shape[0]:
        raise ValueError("records must be (n_times, n_receivers) matching t")
    out = np.empty(rec.shape[1])
    for j in range(rec.shape[1]):
        mag = np.abs(rec[:, j])
        peak = float(mag.max())
        if peak <= 0.0:
            raise ValueError(f"receiver {j}: signal is identically zero, no arrival")
        thr = cfg.threshold_frac * peak
        idx = int(np.argmax(mag >= thr))
        if idx == 0:
            out[j] = t[0]
        else:
            a0, a1 = mag[idx - 1], mag[idx]
            frac = (thr - a0) / (a1 - a0) if a1 > a0 else 1.0
            out[j] = t[idx - 1] + frac * (t[idx] - t[idx - 1])
    return out


def wave_forward(u, cfg: WaveConfig = WaveConfig()) -> np.ndarray:
    """G(u) for the wave experiment: levelset -> propagate -> first arrivals."""
    c = levelset(u, cfg)
    t, rec = wave_record(c, cfg)
    return arrival_times(rec, t, cfg)


def add_noise(y_clean, sigma_obs: float, rng: np.random.Generator) -> Observation:
    """y = y_clean + sigma_obs * xi with iid standard normal xi."""
    if not sigma_obs >= _SIGMA_OBS_MIN:
        raise ValueError(f"sigma_obs must be >= {_SIGMA_OBS_MIN:g}, got {sigma_obs}")
    y_clean = np.atleast_1d(np.asarray(y_clean, dtype=float))
    return Observation(
        y=y_clean + sigma_obs * rng.standard_normal(y_clean.shape),
        sigma_obs=sigma_obs,
    )
