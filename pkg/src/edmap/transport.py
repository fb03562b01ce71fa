"""Observation-conditioned transport maps and their pushforward samplers.

A transport model wraps a network from :mod:`.nn_core` into a residual map
``T(p; y) = p + correction`` that carries reference draws ``p`` to
(approximate) posterior samples given an observation ``y``.  Three
variants are supported:

``mlp_residual``
    Dense network on the concatenated ``(p, y)`` vector; for
    finite-dimensional problems.
``operator_baseline``
    Spectral operator acting on the discretized field, correction added
    raw.  Has no structural control over rough directions.
``cameron_martin``
    Same operator, but the correction is first stripped of its mean and
    then smoothed through the square root of the prior covariance, so the
    map moves the reference measure only along directions in which the
    posterior can actually differ from the prior.

Reference draws come either from the prior or from rows of a joint
dataset (the map then also conditions on the observation those rows were
generated with, and the target observation is appended to the
conditioning vector).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import dataset as _dataset
from . import nn_core
from .grf import CovarianceSpec, ScalarPrior, eigenvalues, field_values, sample_prior_batch
from .nn_core import ArchDescriptor

VARIANTS = ("mlp_residual", "operator_baseline", "cameron_martin")
REFERENCES = ("prior", "joint")


@lru_cache(maxsize=16)
def _cm_matrix(spec: CovarianceSpec, n: int) -> np.ndarray:
    """Symmetric n-by-n action of mean-strip followed by C^{1/2}.

    In the cosine basis this is diag(0, sqrt(lam_1), ..., sqrt(lam_{n-1})),
    assembled once per (covariance, grid) pair.
    """
    from .grf import _basis

    phi1 = _basis(n, n - 1)[1:]
    scale = np.sqrt(eigenvalues(spec, k_max=n - 1))
    mat = phi1.T @ (scale[:, None] * phi1) / n
    mat.flags.writeable = False
    return mat


@dataclass(frozen=True)
class PosteriorEnsemble:
    """A bag of posterior samples tagged with how they were produced."""

    samples: np.ndarray  # (count, d_u)
    y_obs: np.ndarray  # (d_y,)
    provenance: str
    meta: dict

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        y_obs = np.asarray(self.y_obs, dtype=float).ravel()
        if not np.all(np.isfinite(samples)):
            raise ValueError("ensemble contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "y_obs", y_obs)

    def __len__(self):
        return self.samples.shape[0]


def save_ensemble(ens: PosteriorEnsemble, path) -> None:
    """Persist an ensemble using the joint-dataset container (d_y = 0)."""
    meta = dict(ens.meta)
    meta["provenance"] = ens.provenance
    meta["y_obs"] = [float(v) for v in ens.y_obs]
    ds = _dataset.JointDataset(
        u=ens.samples, y=np.zeros((len(ens), 0)), meta=meta
    )
    _dataset.save(ds, path)


def load_ensemble(path) -> PosteriorEnsemble:
    ds = _dataset.load(path)
    meta = dict(ds.meta)
    provenance = meta.pop("provenance", "unknown")
    y_obs = np.asarray(meta.pop("y_obs", []), dtype=float)
    return PosteriorEnsemble(samples=ds.u, y_obs=y_obs, provenance=provenance, meta=meta)


@dataclass(frozen=True)
class TransportModel:
    """A parameterized residual map ``T(p; y)`` plus its reference measure.

    ``prior`` is a :class:`ScalarPrior` for ``mlp_residual`` and a
    :class:`CovarianceSpec` for the field variants; ``n`` fixes the
    training grid for field variants (evaluation may use another grid).
    """

    variant: str
    arch: ArchDescriptor
    theta: np.ndarray
    prior: object
    n: int | None = None
    reference: str = "prior"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.reference not in REFERENCES:
            raise ValueError(f"reference must be one of {REFERENCES}")
        wanted = "mlp" if self.variant == "mlp_residual" else "dct_operator"
        if self.arch.kind != wanted:
            raise ValueError(f"variant {self.variant} needs a {wanted} architecture")
        if self.variant == "cameron_martin" and not isinstance(self.prior, CovarianceSpec):
            raise ValueError("cameron_martin requires a CovarianceSpec prior")
        if self.variant == "mlp_residual" and not isinstance(self.prior, ScalarPrior):
            raise ValueError("mlp_residual requires a ScalarPrior")
        if self.variant != "mlp_residual":
            if not isinstance(self.prior, CovarianceSpec):
                raise ValueError("field variants require a CovarianceSpec prior")
            if self.n is None or self.n < 2:
                raise ValueError("field variants need the training grid size n")
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)

    # -- forward ----------------------------------------------------------

    def apply_batch(self, p: np.ndarray, y: np.ndarray) -> np.ndarray:
        out, _ = self.apply_batch_cached(p, y)
        return out

    def apply(self, p, y) -> np.ndarray:
        p = np.asarray(field_values(p) if not np.isscalar(p) else [p], dtype=float)
        out = self.apply_batch(p[None, :], np.atleast_1d(np.asarray(y, float))[None, :])
        return out[0]

    def apply_batch_cached(self, p: np.ndarray, y: np.ndarray):
        """Map a batch of reference draws; returns (T, ctx) for backward."""
        p = np.asarray(p, dtype=float)
        y = np.asarray(y, dtype=float)
        if p.ndim != 2 or y.ndim != 2 or p.shape[0] != y.shape[0]:
            raise ValueError("apply_batch wants aligned 2-D (p, y) batches")
        if self.variant == "mlp_residual":
            x = np.concatenate([p, y], axis=1)
            if x.shape[1] != self.arch.d_in or p.shape[1] != self.arch.d_out:
                raise ValueError(
                    f"(p, y) dims {p.shape[1]}+{y.shape[1]} do not fit architecture "
                    f"d_in={self.arch.d_in}, d_out={self.arch.d_out}"
                )
            s, cache = nn_core.forward_cached(self.theta, self.arch, x)
            return p + s, {"cache": cache, "variant": self.variant}
        s, cache = nn_core.forward_cached(self.theta, self.arch, p, y)
        if self.variant == "operator_baseline":
            return p + s, {"cache": cache, "variant": self.variant}
        mat = _cm_matrix(self.prior, p.shape[1])
        return p + s @ mat, {"cache": cache, "variant": self.variant, "mat": mat}

    def backward_batch(self, ctx, d_t: np.ndarray) -> np.ndarray:
        """Parameter gradient of sum(d_t * T) for the cached batch."""
        d_s = np.asarray(d_t, dtype=float)
        if ctx["variant"] == "cameron_martin":
            d_s = d_s @ ctx["mat"]  # the smoothing matrix is symmetric
        d_theta, _ = nn_core.backward(ctx["cache"], d_s)
        return d_theta

    # -- convenience ------------------------------------------------------

    def with_theta(self, theta: np.ndarray) -> "TransportModel":
        return replace(self, theta=np.asarray(theta, dtype=float))

    @property
    def d_u(self) -> int:
        return self.arch.d_out if self.variant == "mlp_residual" else int(self.n)


def reference_batch(
    model: TransportModel,
    count: int,
    rng: np.random.Generator,
    joint_data: "_dataset.JointDataset | None" = None,
):
    """Draw reference inputs for ``count`` map evaluations.

    Returns (p, y_ref): ``y_ref`` is None for prior references and the
    matching observation rows for joint references.
    """
    if model.reference == "prior":
        if model.variant == "mlp_residual":
            draws = model.prior.m0 + model.prior.sigma0 * rng.standard_normal(
                (count, model.arch.d_out)
            )
            return draws, None
        return sample_prior_batch(model.prior, model.n, count, rng), None
    if joint_data is None:
        raise ValueError("joint reference needs the training dataset to resample from")
    idx = rng.integers(0, len(joint_data), size=count)
    return joint_data.u[idx].copy(), joint_data.y[idx].copy()


def pushforward(
    model: TransportModel,
    y_obs,
    count: int,
    rng: np.random.Generator,
    joint_data: "_dataset.JointDataset | None" = None,
) -> PosteriorEnsemble:
    """Push ``count`` reference draws through the map conditioned on ``y_obs``."""
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    p, y_ref = reference_batch(model, count, rng, joint_data)
    y_tile = np.broadcast_to(y_obs, (count, y_obs.shape[0]))
    cond = y_tile if y_ref is None else np.concatenate([y_ref, y_tile], axis=1)
    samples = model.apply_batch(p, cond)
    return PosteriorEnsemble(
        samples=samples,
        y_obs=y_obs,
        provenance=f"transport:{model.variant}",
        meta={"reference": model.reference, "count": int(count)},
    )


# ---------------------------------------------------------------------------
# persistence


def _prior_to_dict(prior) -> dict:
    if isinstance(prior, ScalarPrior):
        return {"type": "scalar", "m0": prior.m0, "sigma0": prior.sigma0}
    return {
        "type": "grf",
        "sigma": prior.sigma,
        "tau": prior.tau,
        "alpha": prior.alpha,
        "k_modes": prior.k_modes,
    }


def _prior_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "scalar":
        return ScalarPrior(**d)
    if kind == "grf":
        return CovarianceSpec(**d)
    raise ValueError(f"unknown prior type {kind!r}")


def save_model(model: TransportModel, path, extra: dict | None = None) -> None:
    """Checkpoint the map: architecture + variant + prior + parameters."""
    descriptor = {
        "arch": model.arch.to_dict(),
        "variant": model.variant,
        "reference": model.reference,
        "prior": _prior_to_dict(model.prior),
        "n": model.n,
    }
    if extra:
        descriptor["extra"] = extra
    nn_core.save_checkpoint(path, descriptor, model.theta)


def load_model(path) -> TransportModel:
    descriptor, theta = nn_core.load_checkpoint(path)
    return TransportModel(
        variant=descriptor["variant"],
        arch=ArchDescriptor.from_dict(descriptor["arch"]),
        theta=theta,
        prior=_prior_from_dict(descriptor["prior"]),
        n=descriptor.get("n"),
        reference=descriptor.get("reference", "prior"),
    )
