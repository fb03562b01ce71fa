"""Minibatch training loop for transport models.

Each step draws a batch of joint rows, draws m fresh reference inputs per
row (from the prior, or from the dataset itself for joint-reference
maps), evaluates the energy-distance minibatch objective, and applies one
Adam update.  The loop is a pure function of (model, data, config): all
randomness flows through the config seed, so a run is exactly
repeatable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import JointDataset
from .grf import sample_prior_batch
from .nn_core import AdamState, adam_step
from .objective import LossConfig, minibatch_loss_and_grad
from .transport import TransportModel


class TrainingDiverged(RuntimeError):
    """Raised when the loss or gradient stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule.

    ``lr_drop_epoch`` rescales the learning rate once, at the start of
    that (0-based) epoch; ``max_steps`` caps total optimizer steps
    regardless of epochs (useful for equal-compute comparisons).
    """

    epochs: int
    batch_size: int = 128
    m: int = 4
    lr: float = 1e-3
    seed: int = 0
    norm_eps: float = 1e-8
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 0.1
    max_steps: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1 when given")


def _reference_draws(model: TransportModel, data: JointDataset, b: int, m: int, rng):
    """(ref_p, ref_y) for one batch: fresh prior draws, or dataset rows."""
    if model.reference == "joint":
        idx = rng.integers(0, len(data), size=(b, m))
        return data.u[idx], data.y[idx]
    if model.variant == "mlp_residual":
        d = model.arch.d_out
        draws = model.prior.m0 + model.prior.sigma0 * rng.standard_normal((b, m, d))
        return draws, None
    draws = sample_prior_batch(model.prior, model.n, b * m, rng)
    return draws.reshape(b, m, model.n), None


def fit(model: TransportModel, data: JointDataset, cfg: TrainConfig):
    """Train the map on a joint dataset; returns (trained model, history).

    History records the mean loss of each epoch, the total step count,
    and the last step's loss.  Non-finite loss raises
    :class:`TrainingDiverged` with the offending step index.
    """
    if not isinstance(data, JointDataset):
        raise TypeError("fit expects a JointDataset")
    count = len(data)
    rng = np.random.default_rng(cfg.seed)
    loss_cfg = LossConfig(m=cfg.m, batch_size=cfg.batch_size, norm_eps=cfg.norm_eps)
    adam = AdamState.for_params(model.theta, lr=cfg.lr)
    theta = model.theta
    step = 0
    epoch_losses = []
    last_loss = float("nan")
    done = False
    for epoch in range(cfg.epochs):
        if cfg.lr_drop_epoch is not None and epoch == cfg.lr_drop_epoch:
            adam.lr *= cfg.lr_drop_factor
        perm = rng.permutation(count)
        running = 0.0
        batches = 0
        for start in range(0, count, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            ref_p, ref_y = _reference_draws(model, data, rows.size, cfg.m, rng)
            current = model.with_theta(theta)
            loss, grad = minibatch_loss_and_grad(
                current, data.u[rows], data.y[rows], ref_p, loss_cfg, ref_y
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step + 1}")
            theta = adam_step(adam, theta, grad)
            step += 1
            running += loss
            batches += 1
            last_loss = loss
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
        if batches:
            epoch_losses.append(running / batches)
        if done:
            break
    history = {
        "epoch_loss": epoch_losses,
        "steps": step,
        "final_loss": last_loss,
    }
    return model.with_theta(theta), history
