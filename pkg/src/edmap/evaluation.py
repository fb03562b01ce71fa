"""Comparison metrics and studies for trained maps.

Four layers, all estimator-matched so that different posterior
approximations are judged by identical machinery:

* a quadrature ground truth for the scalar quadratic problem (trapezoid
  rule on the exact unnormalized density, with inverse-CDF resampling so
  truth enters every comparison as samples, never as a density),
* one-dimensional Wasserstein-1 via quantile functions on 512 levels,
* per-KL-mode marginal errors between field ensembles, and
* the dataset-size scaling harness: train one map per (K, architecture,
  seed) cell under equal optimizer-step budgets and fit the log-log rate
  of the panel-averaged squared energy distance against K.

Metric values are carried as append-only records serializable to JSON
Lines, and exported as per-figure-class CSV files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import dataset as _dataset
from .grf import ScalarPrior, project_kl_batch
from .nn_core import ArchDescriptor, init_params
from .objective import energy_distance_sq
from .training import TrainConfig, TrainingDiverged, fit
from .transport import TransportModel, pushforward

W1_LEVELS = 512

# |X - median| of a standard normal has median Phi^{-1}(3/4): converts a
# normal scale sigma into its median absolute deviation sigma * 0.6745.
NORMAL_MAD_FACTOR = 0.6744897501960817


# ---------------------------------------------------------------------------
# quadrature ground truth (scalar quadratic problem)


@dataclass(frozen=True)
class QuadraturePosterior:
    """Grid representation of the scalar posterior with precomputed CDF."""

    grid: np.ndarray
    weights: np.ndarray  # cellwise probabilities, sum to 1
    z: float  # normalizing constant of the unnormalized density
    cdf: np.ndarray

    def mean(self) -> float:
        return float(self.weights @ self.grid)

    def var(self) -> float:
        mu = self.mean()
        return float(self.weights @ (self.grid - mu) ** 2)

    def quantiles(self, levels) -> np.ndarray:
        levels = np.asarray(levels, dtype=float)
        if np.any(levels < 0) or np.any(levels > 1):
            raise ValueError("quantile levels must lie in [0, 1]")
        return np.interp(levels, self.cdf, self.grid)

    def resample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws; the truth enters comparisons as samples."""
        return np.interp(rng.uniform(size=count), self.cdf, self.grid)


def quadrature_posterior(
    y_obs: float,
    m0: float = 0.0,
    sigma0: float = 1.0,
    sigma_obs: float = 1.0,
    half_width: float = 6.0,
    num: int = 2001,
) -> QuadraturePosterior:
    """Trapezoid-rule posterior for the squaring forward map.

    The unnormalized log density is
    -(u-m0)^2/(2 sigma0^2) - (y - u^2)^2/(2 sigma_obs^2); the Gaussian
    tails vanish to machine precision at the interval ends, so the
    trapezoid rule converges far faster than its generic second order.
    """
    grid = np.linspace(m0 - half_width * sigma0, m0 + half_width * sigma0, num)
    logp = -((grid - m0) ** 2) / (2.0 * sigma0 * sigma0) - (
        (y_obs - grid * grid) ** 2
    ) / (2.0 * sigma_obs * sigma_obs)
    shift = logp.max()
    dens = np.exp(logp - shift)
    step = grid[1] - grid[0]
    cell = np.full(num, step)
    cell[0] = cell[-1] = 0.5 * step
    raw_z = float(np.sum(dens * cell))
    if not np.isfinite(raw_z) or raw_z <= 0.0:
        raise RuntimeError(f"posterior mass underflowed for y={y_obs}")
    weights = dens * cell / raw_z
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * step)])
    cdf /= cdf[-1]
    return QuadraturePosterior(
        grid=grid, weights=weights, z=raw_z * float(np.exp(shift)), cdf=cdf
    )


# ---------------------------------------------------------------------------
# Wasserstein-1 in one dimension


def _quantiles_of(x, levels: np.ndarray) -> np.ndarray:
    if hasattr(x, "quantiles"):
        return np.asarray(x.quantiles(levels), dtype=float)
    if callable(x):
        return np.asarray(x(levels), dtype=float)
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("cannot take quantiles of an empty sample")
    return np.quantile(arr, levels)


def w1_1d(a, b) -> float:
    """Wasserstein-1 distance via quantile functions on 512 midpoint levels.

    Either argument may be a 1-D sample array, a quantile-function
    callable, or an object exposing ``.quantiles(levels)`` (such as
    :class:`QuadraturePosterior`), so sample-vs-sample and
    sample-vs-truth comparisons share one estimator.
    """
    levels = (np.arange(W1_LEVELS) + 0.5) / W1_LEVELS
    return float(np.mean(np.abs(_quantiles_of(a, levels) - _quantiles_of(b, levels))))


def sample_mad(x) -> float:
    """Median absolute deviation about the median (robust spread)."""
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("cannot take the spread of an empty sample")
    return float(np.median(np.abs(arr - np.median(arr))))


def per_mode_wasserstein(ens_a, ens_b, modes) -> np.ndarray:
    """W1 between two field ensembles' KL-coefficient marginals, per mode."""
    sa = np.asarray(getattr(ens_a, "samples", ens_a), dtype=float)
    sb = np.asarray(getattr(ens_b, "samples", ens_b), dtype=float)
    if sa.ndim != 2 or sb.ndim != 2:
        raise ValueError("expected (count, n) sample arrays")
    if sa.shape[1] != sb.shape[1]:
        raise ValueError(
            f"ensembles live on different grids: n={sa.shape[1]} vs n={sb.shape[1]}"
        )
    modes = np.asarray(modes, dtype=int)
    ca = project_kl_batch(sa, modes)
    cb = project_kl_batch(sb, modes)
    return np.array([w1_1d(ca[:, i], cb[:, i]) for i in range(modes.size)])


# ---------------------------------------------------------------------------
# metric records


@dataclass(frozen=True)
class MetricsRecord:
    """One metric value: which experiment/observation/mode it belongs to,
    plus the sample sizes and seed that produced it."""

    experiment: str
    observation: str
    metric: str
    value: float
    mode: int | None = None
    n_a: int = 0
    n_b: int = 0
    seed: int = 0


def write_jsonl(records, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True))
            fh.write("\n")


def read_jsonl(path):
    records = []
    with open(str(path), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(MetricsRecord(**json.loads(line)))
    return records


_CSV_COLUMNS = ("experiment", "observation", "metric", "mode", "value", "n_a", "n_b", "seed")

_FIGURE_FILES = (
    ("posterior_overlay.csv", ("posterior",)),
    ("kl_histograms.csv", ("kl_coeff",)),
    ("per_mode_w1.csv", ("w1_mode",)),
    ("scaling_curves.csv", ("scaling",)),
)


def export_plot_data(records, out_dir) -> dict:
    """Write one CSV per figure class; always emits all four headers.

    Records route by metric-name prefix: ``posterior*`` rows feed the
    overlay file, ``kl_coeff*`` the histogram file, ``w1_mode*`` the
    per-mode error file, ``scaling*`` the scaling curves.  Returns
    {filename: path}.
    """
    import os

    os.makedirs(str(out_dir), exist_ok=True)
    paths = {}
    for fname, prefixes in _FIGURE_FILES:
        path = os.path.join(str(out_dir), fname)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for rec in records:
                if rec.metric.startswith(prefixes):
                    writer.writerow(
                        [
                            rec.experiment,
                            rec.observation,
                            rec.metric,
                            "" if rec.mode is None else rec.mode,
                            repr(rec.value),
                            rec.n_a,
                            rec.n_b,
                            rec.seed,
                        ]
                    )
        paths[fname] = path
    return paths


# ---------------------------------------------------------------------------
# dataset-size scaling harness


@dataclass(frozen=True)
class ScalingCell:
    """One grid cell: dataset size, architecture width, replicate seed."""

    k: int
    width: int
    seed: int
    reference: str
    error: float
    diverged: bool


@dataclass
class ScalingResult:
    cells: list
    slopes: dict  # width -> fitted log-log slope (needs >= 3 dataset sizes)
    records: list

    def errors_by_k(self, width: int) -> dict:
        """Mean error over replicate seeds for each dataset size."""
        out = {}
        for cell in self.cells:
            if cell.width == width and not cell.diverged:
                out.setdefault(cell.k, []).append(cell.error)
        return {k: float(np.mean(v)) for k, v in sorted(out.items())}

    def errors_by_width(self, k: int) -> dict:
        out = {}
        for cell in self.cells:
            if cell.k == k and not cell.diverged:
                out.setdefault(cell.width, []).append(cell.error)
        return {w: float(np.mean(v)) for w, v in sorted(out.items())}


def _resolve_arch(entry, reference: str) -> ArchDescriptor:
    if isinstance(entry, ArchDescriptor):
        return entry
    width = int(entry)
    d_in = 3 if reference == "joint" else 2  # (p, y_ref?, y_target)
    return ArchDescriptor(kind="mlp", depth=3, width=width, d_in=d_in, d_out=1)


def scaling_study(
    experiment: str,
    k_list,
    arch_list,
    reference: str = "prior",
    seeds=(0, 1),
    *,
    sigma_obs: float = 1.0,
    train_steps: int = 3000,
    batch_size: int = 256,
    m: int = 4,
    lr: float = 1e-3,
    eval_count: int = 10_000,
    y_panel=(-1.0, 0.0, 1.0, 2.0),
    base_seed: int = 1234,
) -> ScalingResult:
    """Train one map per (K, arch, seed) cell and measure truth error.

    Every cell gets the same optimizer-step budget, so differences across
    K isolate the dataset-size effect.  Error per cell is the mean, over
    the fixed observation panel, of the squared energy distance between
    ``eval_count`` pushforward samples and an equal-size inverse-CDF
    resample of the quadrature posterior.  Cells whose training diverges
    are flagged and excluded from the fit.  Slopes (per architecture)
    need at least 3 distinct dataset sizes; with fewer the slope table is
    empty and only the cell table is meaningful.  Fully deterministic
    given (k_list, arch_list, reference, seeds, base_seed).
    """
    if experiment != "quadratic":
        raise ValueError("the scaling harness targets the quadratic experiment")
    if reference not in ("prior", "joint"):
        raise ValueError("reference must be 'prior' or 'joint'")
    k_list = [int(k) for k in k_list]
    if not k_list or not list(arch_list):
        raise ValueError("need at least one dataset size and one architecture")

    prior = ScalarPrior()
    truth = [quadrature_posterior(y, sigma_obs=sigma_obs) for y in y_panel]
    cells = []
    records = []
    for ki, k in enumerate(k_list):
        for ai, entry in enumerate(arch_list):
            arch = _resolve_arch(entry, reference)
            for rep in seeds:
                cell_seed = base_seed + 1000 * ki + 100 * ai + int(rep)
                data = _dataset.generate(
                    "quadratic", k, prior=prior, sigma_obs=sigma_obs, seed=cell_seed
                )
                model = TransportModel(
                    variant="mlp_residual",
                    arch=arch,
                    theta=init_params(arch, np.random.default_rng(cell_seed + 3)),
                    prior=prior,
                    reference=reference,
                )
                steps_per_epoch = max(1, math.ceil(k / batch_size))
                cfg = TrainConfig(
                    epochs=math.ceil(train_steps / steps_per_epoch),
                    batch_size=batch_size,
                    m=m,
                    lr=lr,
                    seed=cell_seed + 1,
                    max_steps=train_steps,
                )
                diverged = False
                error = float("nan")
                try:
                    trained, _ = fit(model, data, cfg)
                    eval_rng = np.random.default_rng(cell_seed + 2)
                    panel = []
                    for qp, y_val in zip(truth, y_panel):
                        ens = pushforward(
                            trained, [y_val], eval_count, eval_rng, joint_data=data
                        )
                        ref = qp.resample(eval_count, eval_rng)
                        panel.append(energy_distance_sq(ens.samples[:, 0], ref))
                    error = float(np.mean(panel))
                except TrainingDiverged:
                    diverged = True
                cells.append(
                    ScalingCell(
                        k=k,
                        width=arch.width,
                        seed=int(rep),
                        reference=reference,
                        error=error,
                        diverged=diverged,
                    )
                )
                records.append(
                    MetricsRecord(
                        experiment="quadratic",
                        observation=f"K={k};width={arch.width};ref={reference}",
                        metric="scaling_error" if not diverged else "scaling_diverged",
                        value=error,
                        mode=None,
                        n_a=eval_count,
                        n_b=eval_count,
                        seed=cell_seed,
                    )
                )

    slopes = {}
    widths = sorted({c.width for c in cells})
    for width in widths:
        by_k = ScalingResult(cells, {}, []).errors_by_k(width)
        if len(by_k) >= 3:
            logs_k = np.log(np.array(list(by_k.keys()), dtype=float))
            logs_e = np.log(np.array(list(by_k.values())))
            slopes[width] = float(np.polyfit(logs_k, logs_e, 1)[0])
    return ScalingResult(cells=cells, slopes=slopes, records=records)
