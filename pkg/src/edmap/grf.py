"""Gaussian measures on (0,1) in the Neumann cosine basis.

Fields live on the midpoint grid x_i = (i + 1/2)/n.  The orthonormal basis
is {1, sqrt(2) cos(k pi x)} under the (1/n)-weighted discrete inner product;
sampling the cosines at midpoints keeps the discrete basis exactly
orthogonal, so analysis/synthesis (a DCT-II pair up to scaling) round-trip
to machine precision.  The covariance sigma^2 (-Laplacian + tau^2 I)^(-alpha)
is diagonal in this basis with eigenvalues sigma^2 ((k pi)^2 + tau^2)^(-alpha);
the constant mode is excluded everywhere: prior samples have zero spatial
mean, C^(1/2) refuses inputs carrying a constant component, and the
Cameron-Martin norm is defined only for (numerically) mean-free perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# tolerance for "this field has no constant component"
_MEAN_TOL = 1e-10
_C0_TOL = 1e-12


def midpoints(n: int) -> np.ndarray:
    """Grid locations x_i = (i + 1/2)/n."""
    return (np.arange(n) + 0.5) / n


@dataclass(frozen=True)
class CovarianceSpec:
    """Parameters of the prior covariance sigma^2 (-Lap + tau^2 I)^(-alpha).

    k_modes is the number of retained nonconstant cosine modes; sampling a
    field on n points requires k_modes <= n - 1.
    """

    sigma: float
    tau: float
    alpha: float
    k_modes: int

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (isinstance(self.k_modes, (int, np.integer)) and self.k_modes >= 1):
            raise ValueError(f"k_modes must be a positive integer, got {self.k_modes}")


@dataclass
class GridField:
    """Real-valued function sampled on the midpoint grid."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.shape[0] < 2:
            raise ValueError("GridField needs a 1-d value vector with n >= 2")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class SpectralCoeffs:
    """Coefficients (c0, ck) of {1, sqrt(2) cos(k pi x)}, k = 1..len(ck)."""

    c0: float
    ck: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.c0 = float(self.c0)
        self.ck = np.asarray(self.ck, dtype=float)


@dataclass(frozen=True)
class ScalarPrior:
    """Gaussian prior N(m0, sigma0^2) for scalar parameters."""

    m0: float = 0.0
    sigma0: float = 1.0

    def __post_init__(self):
        if not (self.sigma0 > 0 and np.isfinite(self.sigma0)):
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")


def field_values(f) -> np.ndarray:
    """Accept a GridField or a bare array and return the value vector."""
    return f.values if isinstance(f, GridField) else np.asarray(f, dtype=float)


@lru_cache(maxsize=32)
def _basis(n: int, k_modes: int) -> np.ndarray:
    """Rows 0..k_modes of the orthonormal cosine basis sampled at midpoints."""
    x = midpoints(n)
    k = np.arange(k_modes + 1)
    b = np.cos(np.outer(k, np.pi * x))
    b[1:] *= np.sqrt(2.0)
    b.setflags(write=False)
    return b


def eigenvalue(k, spec: CovarianceSpec) -> float:
    """Covariance eigenvalue sigma^2 ((k pi)^2 + tau^2)^(-alpha), k >= 1."""
    karr = np.asarray(k)
    if not np.issubdtype(karr.dtype, np.integer):
        raise ValueError("mode index k must be an integer")
    if np.any(karr < 1):
        raise ValueError("mode index k must be >= 1 (constant mode is excluded)")
    lam = spec.sigma**2 * ((karr * np.pi) ** 2 + spec.tau**2) ** (-spec.alpha)
    return float(lam) if np.isscalar(k) else lam


def eigenvalues(spec: CovarianceSpec, k_max: int | None = None) -> np.ndarray:
    """Eigenvalues for modes 1..k_max (default spec.k_modes)."""
    k_max = spec.k_modes if k_max is None else k_max
    return eigenvalue(np.arange(1, k_max + 1), spec)


def dct_forward(f, k_modes: int) -> SpectralCoeffs:
    """Analysis onto modes 0..k_modes under the (1/n) inner product."""
    v = field_values(f)
    n = v.shape[0]
    if k_modes > n - 1:
        raise ValueError(f"k_modes={k_modes} exceeds n-1={n - 1}")
    c = _basis(n, k_modes) @ v / n
    return SpectralCoeffs(c0=c[0], ck=c[1:])


def dct_inverse(c: SpectralCoeffs, n: int) -> GridField:
    """Synthesis of (c0, ck) on an n-point midpoint grid."""
    k_modes = c.ck.shape[0]
    if k_modes > n - 1:
        raise ValueError(f"{k_modes} modes cannot be represented on n={n} points")
    b = _basis(n, k_modes)
    return GridField(c.c0 * b[0] + c.ck @ b[1:])


def sample_prior(spec: CovarianceSpec, n: int, rng: np.random.Generator) -> GridField:
    """One draw u = sum_k sqrt(lambda_k) xi_k e_k, xi_k iid standard normal."""
    return GridField(sample_prior_batch(spec, n, 1, rng)[0])


def sample_prior_batch(
    spec: CovarianceSpec, n: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """(count, n) array of independent prior draws (batch flavor of sample_prior)."""
    if spec.k_modes > n - 1:
        raise ValueError(
            f"k_modes={spec.k_modes} aliases on an n={n} grid (need k_modes <= n-1)"
        )
    xi = rng.standard_normal((count, spec.k_modes))
    scaled = xi * np.sqrt(eigenvalues(spec))
    return scaled @ _basis(n, spec.k_modes)[1:]


def apply_cov_sqrt(c: SpectralCoeffs, spec: CovarianceSpec) -> SpectralCoeffs:
    """Scale each coefficient by sqrt(lambda_k); the spectral action of C^(1/2).

    Inputs carrying a constant component are rejected: such a field is not
    in the support of the constant-mode-free prior, so smuggling it through
    the smoothing would silently change the measure.
    """
    if abs(c.c0) > _C0_TOL:
        raise ValueError(
            f"constant-mode coefficient {c.c0:.3e} must be zero before C^(1/2)"
        )
    k = c.ck.shape[0]
    if k == 0:
        return SpectralCoeffs(0.0, c.ck.copy())
    return SpectralCoeffs(0.0, c.ck * np.sqrt(eigenvalue(np.arange(1, k + 1), spec)))


def project_kl(f, k: int, spec: CovarianceSpec) -> float:
    """Coefficient <f, sqrt(2) cos(k pi .)> under the (1/n) inner product."""
    v = field_values(f)
    n = v.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"mode index {k} outside 1..{n - 1}")
    return float(_basis(n, k)[k] @ v / n)


def project_kl_batch(fields: np.ndarray, modes) -> np.ndarray:
    """(M, len(modes)) KL coefficients of the rows of an (M, n) array."""
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    n = fields.shape[1]
    modes = np.asarray(modes, dtype=int)
    if modes.size and (modes.min() < 1 or modes.max() > n - 1):
        raise ValueError(f"mode indices must lie in 1..{n - 1}")
    b = _basis(n, int(modes.max()) if modes.size else 0)
    return fields @ b[modes].T / n


def u_norm(f) -> float:
    """Discrete L2 norm sqrt((1/n) sum f_i^2)."""
    v = field_values(f)
    return float(np.sqrt(np.mean(v**2)))


def cm_norm(perturbation, spec: CovarianceSpec) -> float:
    """Cameron-Martin norm sqrt(sum_k h_k^2 / lambda_k) over modes 1..k_modes.

    Requires a (numerically) mean-free input; a constant component lies
    outside the Cameron-Martin space and makes the norm meaningless.
    """
    v = field_values(perturbation)
    if abs(float(np.mean(v))) > _MEAN_TOL:
        raise ValueError(
            f"perturbation has nonzero spatial mean {np.mean(v):.3e}; "
            "not in the Cameron-Martin space"
        )
    hk = dct_forward(v, min(spec.k_modes, v.shape[0] - 1)).ck
    lam = eigenvalues(spec, hk.shape[0])
    return float(np.sqrt(np.sum(hk**2 / lam)))
