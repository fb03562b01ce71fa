"""Preconditioned Crank-Nicolson sampling, the reference posterior oracle.

The chain targets the posterior of a Gaussian prior conditioned through a
forward map with additive Gaussian observation noise.  Proposals

    u' = m + sqrt(1 - beta^2) (u - m) + beta xi,     xi ~ prior fluctuation

leave the prior invariant, so the accept test only involves the data
misfit and the acceptance rule is dimension-robust.  For function-space
priors the chain walks the whitened KL coordinates (standard normal by
construction) and synthesizes the grid field on demand, which keeps the
proposal exact rather than grid-dependent.

Step size can adapt toward a target acceptance rate during burn-in
(multiplicative, every fixed number of steps); after burn-in beta is
frozen so the collected samples come from a fixed kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grf import CovarianceSpec, ScalarPrior, _basis, eigenvalues
from .transport import PosteriorEnsemble


def potential(u, y_obs: np.ndarray, forward, sigma_obs: float) -> float:
    """Data misfit Phi(u) = ||y - G(u)||^2 / (2 sigma_obs^2)."""
    resid = np.asarray(y_obs, dtype=float) - np.asarray(forward(u), dtype=float)
    return float(np.sum(resid * resid) / (2.0 * sigma_obs * sigma_obs))


@dataclass(frozen=True)
class PcnConfig:
    """Chain length, step size, thinning, and burn-in adaptation."""

    beta: float = 0.25
    n_steps: int = 200_000
    burn_in: int = 20_000
    thin: int = 20
    adapt: bool = True
    seed: int = 0
    target_accept: float = 0.25
    adapt_every: int = 100
    adapt_factor: float = 1.05

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.n_steps < 1 or self.burn_in < 0 or self.burn_in >= self.n_steps:
            raise ValueError("need 0 <= burn_in < n_steps")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.adapt_every < 1 or self.adapt_factor <= 1.0:
            raise ValueError("adapt_every >= 1 and adapt_factor > 1 required")


def run_chain(
    y_obs,
    forward,
    prior,
    sigma_obs: float,
    cfg: PcnConfig,
    n: int | None = None,
):
    """Sample the posterior; returns (ensemble, diagnostics).

    ``forward`` maps a state (scalar or grid field) to the observation
    vector.  ``prior`` selects the state space: a :class:`ScalarPrior`
    walks a single real parameter, a :class:`CovarianceSpec` (with grid
    size ``n``) walks the whitened coefficients of the random field.
    """
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if sigma_obs <= 0:
        raise ValueError("sigma_obs must be positive")
    rng = np.random.default_rng(cfg.seed)

    scalar = isinstance(prior, ScalarPrior)
    if scalar:
        state = prior.m0 + prior.sigma0 * rng.standard_normal()

        def synthesize(z):
            return z

        def propose(z, beta):
            step = prior.sigma0 * rng.standard_normal()
            return prior.m0 + np.sqrt(1.0 - beta * beta) * (z - prior.m0) + beta * step

    elif isinstance(prior, CovarianceSpec):
        if n is None or n < 2:
            raise ValueError("field priors need the grid size n")
        if prior.k_modes > n - 1:
            raise ValueError(f"k_modes={prior.k_modes} aliases on an n={n} grid")
        sqrt_lam = np.sqrt(eigenvalues(prior))
        basis1 = _basis(n, prior.k_modes)[1:]
        state = rng.standard_normal(prior.k_modes)

        def synthesize(z):
            return (sqrt_lam * z) @ basis1

        def propose(z, beta):
            return np.sqrt(1.0 - beta * beta) * z + beta * rng.standard_normal(z.shape)

    else:
        raise TypeError("prior must be a ScalarPrior or CovarianceSpec")

    beta = cfg.beta
    phi = potential(synthesize(state), y_obs, forward, sigma_obs)
    kept = []
    phi_trace = []
    accepted_total = 0
    accepted_window = 0
    accepted_sampling = 0
    sampling_steps = 0

    for step in range(1, cfg.n_steps + 1):
        proposal = propose(state, beta)
        phi_new = potential(synthesize(proposal), y_obs, forward, sigma_obs)
        if np.log(rng.uniform()) < phi - phi_new:
            state, phi = proposal, phi_new
            accepted_total += 1
            accepted_window += 1
            if step > cfg.burn_in:
                accepted_sampling += 1
        if step > cfg.burn_in:
            sampling_steps += 1
            if (step - cfg.burn_in) % cfg.thin == 0:
                field = synthesize(state)
                kept.append(np.atleast_1d(np.asarray(field, dtype=float)).copy())
                phi_trace.append(phi)
        elif cfg.adapt and step % cfg.adapt_every == 0:
            rate = accepted_window / cfg.adapt_every
            if rate > cfg.target_accept:
                beta = min(1.0, beta * cfg.adapt_factor)
            else:
                beta = beta / cfg.adapt_factor
            accepted_window = 0

    samples = np.stack(kept) if kept else np.zeros((0, 1))
    diagnostics = {
        "acceptance_rate": accepted_total / cfg.n_steps,
        "acceptance_rate_sampling": (
            accepted_sampling / sampling_steps if sampling_steps else float("nan")
        ),
        "beta_final": beta,
        "phi_trace": np.asarray(phi_trace),
        "n_kept": samples.shape[0],
    }
    ensemble = PosteriorEnsemble(
        samples=samples,
        y_obs=y_obs,
        provenance="pcn",
        meta={
            "beta": cfg.beta,
            "beta_final": beta,
            "n_steps": cfg.n_steps,
            "burn_in": cfg.burn_in,
            "thin": cfg.thin,
            "seed": cfg.seed,
            "acceptance_rate": diagnostics["acceptance_rate"],
        },
    )
    return ensemble, diagnostics
