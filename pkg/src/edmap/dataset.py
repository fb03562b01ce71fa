"""Joint-sample datasets {(u_i, y_i)} ~ gamma: generation and persistence.

Rows are drawn independently: u from the prior, y = G(u) plus Gaussian
observation noise.  Generation is blocked (block b uses seed base + b) so a
parallel implementation would produce the identical dataset; rows inside a
block are sequential.  A forward-model failure for one row (possible in
principle for the wave model's arrival picking) is retried with fresh draws
up to 100 times before giving up loudly.

On disk a dataset is a fixed little-endian binary (magic "ATJD") holding
both matrices, with a JSON sidecar carrying every config field needed to
regenerate it.  The binary payload is bit-exact reproducible from
(configs, seed); the sidecar additionally records a creation timestamp.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import struct
from dataclasses import dataclass

import numpy as np

from .forward_models import (
    DarcyConfig,
    WaveConfig,
    darcy_forward,
    quadratic_forward,
    wave_forward,
)
from .grf import CovarianceSpec, ScalarPrior, _basis, eigenvalues

_MAGIC = b"ATJD"
_VERSION = 1
_BLOCK = 1024
_MAX_RETRIES = 100

EXPERIMENTS = ("quadratic", "darcy", "wave")


class DatasetFormatError(RuntimeError):
    """Raised when a dataset file does not parse as valid ATJD."""


@dataclass
class JointDataset:
    u: np.ndarray  # (N, d_u)
    y: np.ndarray  # (N, d_y)
    meta: dict

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"row counts differ: u has {self.u.shape[0]}, y has {self.y.shape[0]}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset entries must be finite")

    def __len__(self) -> int:
        return self.u.shape[0]


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _config_dict(obj) -> dict:
    out = dataclasses.asdict(obj)
    for key, val in out.items():
        if isinstance(val, tuple):
            out[key] = list(val)
    return out


def generate(
    experiment: str,
    count: int,
    *,
    prior,
    sigma_obs: float,
    seed: int,
    forward_cfg=None,
) -> JointDataset:
    """Draw ``count`` iid joint samples for one experiment.

    quadratic: prior is a ScalarPrior, forward_cfg unused.
    darcy / wave: prior is a CovarianceSpec, forward_cfg the matching
    DarcyConfig / WaveConfig (defaults used when omitted).
    """
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; pick one of {EXPERIMENTS}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if not sigma_obs >= 1e-12:
        raise ValueError(f"sigma_obs must be >= 1e-12, got {sigma_obs}")

    if experiment == "quadratic":
        if not isinstance(prior, ScalarPrior):
            raise ValueError("quadratic experiment needs a ScalarPrior")
        u, y, retries = _generate_quadratic(count, prior, sigma_obs, seed)
        fwd_meta = {}
    else:
        if not isinstance(prior, CovarianceSpec):
            raise ValueError(f"{experiment} experiment needs a CovarianceSpec prior")
        if experiment == "darcy":
            cfg = forward_cfg if forward_cfg is not None else DarcyConfig()
            forward = lambda field: darcy_forward(field, cfg)  # noqa: E731
        else:
            cfg = forward_cfg if forward_cfg is not None else WaveConfig()
            forward = lambda field: wave_forward(field, cfg)  # noqa: E731
        u, y, retries = _generate_field_rows(count, prior, cfg.n, forward, sigma_obs, seed)
        fwd_meta = _config_dict(cfg)

    meta = {
        "experiment": experiment,
        "prior": _config_dict(prior),
        "forward": fwd_meta,
        "sigma_obs": sigma_obs,
        "seed": seed,
        "n_samples": count,
        "d_u": u.shape[1],
        "d_y": y.shape[1],
        "resample_retries": retries,
        "created_utc": _utc_now(),
    }
    return JointDataset(u=u, y=y, meta=meta)


def _generate_quadratic(count, prior, sigma_obs, seed):
    u = np.empty((count, 1))
    y = np.empty((count, 1))
    for block, start in enumerate(range(0, count, _BLOCK)):
        stop = min(start + _BLOCK, count)
        rng = np.random.default_rng(seed + block)
        ub = prior.m0 + prior.sigma0 * rng.standard_normal(stop - start)
        yb = quadratic_forward(ub) + sigma_obs * rng.standard_normal(stop - start)
        u[start:stop, 0] = ub
        y[start:stop, 0] = yb
    return u, y, 0


def _generate_field_rows(count, spec, n, forward, sigma_obs, seed):
    if spec.k_modes > n - 1:
        raise ValueError(f"k_modes={spec.k_modes} aliases on an n={n} grid")
    basis = _basis(n, spec.k_modes)[1:]
    sqrt_lam = np.sqrt(eigenvalues(spec))
    u = np.empty((count, n))
    y = None
    retries = 0
    for block, start in enumerate(range(0, count, _BLOCK)):
        stop = min(start + _BLOCK, count)
        rng = np.random.default_rng(seed + block)
        for row in range(start, stop):
            for attempt in range(_MAX_RETRIES + 1):
                field = (sqrt_lam * rng.standard_normal(spec.k_modes)) @ basis
                try:
                    clean = forward(field)
                except ValueError:
                    retries += 1
                    continue
                break
            else:
                raise RuntimeError(
                    f"forward model failed {_MAX_RETRIES} times in a row "
                    f"(row {row}, block seed {seed + block})"
                )
            if y is None:
                y = np.empty((count, clean.shape[0]))
            u[row] = field
            y[row] = clean + sigma_obs * rng.standard_normal(clean.shape[0])
    return u, y, retries


# ---------------------------------------------------------------------------
# persistence


def save(ds: JointDataset, path) -> None:
    """Write the binary payload to ``path`` and the sidecar to ``path``.meta.json."""
    path = str(path)
    n, d_u = ds.u.shape
    d_y = ds.y.shape[1]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQQ", n, d_u, d_y))
        fh.write(np.ascontiguousarray(ds.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.y, dtype="<f8").tobytes())
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(ds.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> JointDataset:
    """Read an ATJD file and its sidecar back into a JointDataset."""
    path = str(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 32:
        raise DatasetFormatError(f"{path}: truncated header ({len(buf)} bytes)")
    if buf[:4] != _MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    n, d_u, d_y = struct.unpack_from("<QQQ", buf, 8)
    expect = 32 + 8 * n * (d_u + d_y)
    if len(buf) < expect:
        raise DatasetFormatError(
            f"{path}: truncated payload ({len(buf)} bytes, expected {expect})"
        )
    if len(buf) > expect:
        raise DatasetFormatError(
            f"{path}: {len(buf) - expect} trailing bytes after payload"
        )
    u = np.frombuffer(buf, dtype="<f8", count=n * d_u, offset=32).reshape(n, d_u)
    y = np.frombuffer(buf, dtype="<f8", count=n * d_y, offset=32 + 8 * n * d_u)
    y = y.reshape(n, d_y)
    try:
        with open(path + ".meta.json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DatasetFormatError(f"{path}: missing sidecar {path}.meta.json") from None
    return JointDataset(u=u.copy(), y=y.copy(), meta=meta)
