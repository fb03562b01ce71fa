"""Command-line orchestration.

One JSON config file describes a run; any leaf can be overridden on the
command line with dotted flags (``--training.lr=1e-3``).  The schema is
validated up front and unknown keys are rejected, so typos fail fast
instead of silently using defaults.

Subcommands: ``gen-data`` (joint dataset), ``train`` (fit a transport
map), ``sample`` (pushforward ensemble), ``pcn`` (reference chain),
``eval`` (metrics for one model/observation), ``scaling`` (dataset-size
study), ``gradcheck`` (finite-difference gradient audit).

Every command writes its artifact plus a ``<artifact>.manifest.json``
recording the resolved config, its hash, the seed, library versions,
wall time, and output paths — enough to re-execute the run without the
original shell line.  Binary artifacts are byte-reproducible from
(config, seed); manifests carry wall time and are not.

Randomness derives from one per-run ``seed``: each component hashes its
name together with that seed (see ``component_seed``), and explicit
per-section seeds override the derivation.

Exit codes: 0 success, 1 configuration/validation error (bad schema,
missing or malformed files), 2 runtime error (divergence, solver
preconditions, unexpected failures).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import forward_models as fm
from . import nn_core, pcn, transport
from .grf import CovarianceSpec, ScalarPrior
from .objective import LossConfig, minibatch_loss_and_grad
from .training import TrainConfig, fit


class ConfigError(ValueError):
    """Configuration rejected before any work started."""


# ---------------------------------------------------------------------------
# schema

_NUM = (int, float)
_OPT_INT = (int, type(None))

_SCHEMA = {
    "seed": (int,),
    "experiment": {
        "id": (str,),
        "darcy": {"n": (int,), "obs_points": (list,)},
        "wave": {
            "n": (int,),
            "t_final": _NUM,
            "cfl": _NUM,
            "receivers": (list,),
            "x_s": _NUM,
            "w_s": _NUM,
            "f0": _NUM,
            "t0": _NUM,
            "amplitude": _NUM,
            "threshold_frac": _NUM,
            "c_high": _NUM,
            "c_low": _NUM,
        },
    },
    "prior": {
        "type": (str,),
        "m0": _NUM,
        "sigma0": _NUM,
        "sigma": _NUM,
        "tau": _NUM,
        "alpha": _NUM,
        "k_modes": (int,),
    },
    "dataset": {"n_samples": (int,), "sigma_obs": _NUM, "seed": (int,)},
    "training": {
        "variant": (str,),
        "reference": (str,),
        "depth": (int,),
        "width": (int,),
        "k_modes": (int,),
        "activation": (str,),
        "epochs": (int,),
        "batch_size": (int,),
        "m": (int,),
        "lr": _NUM,
        "seed": (int,),
        "norm_eps": _NUM,
        "lr_drop_epoch": _OPT_INT,
        "lr_drop_factor": _NUM,
        "max_steps": _OPT_INT,
    },
    "pcn": {
        "beta": _NUM,
        "n_steps": (int,),
        "burn_in": (int,),
        "thin": (int,),
        "adapt": (bool,),
        "seed": (int,),
        "target_accept": _NUM,
    },
    "eval": {"count": (int,), "modes": (list,), "seed": (int,)},
    "scaling": {
        "k_list": (list,),
        "widths": (list,),
        "reference": (str,),
        "seeds": (list,),
        "train_steps": (int,),
        "batch_size": (int,),
        "m": (int,),
        "lr": _NUM,
        "eval_count": (int,),
        "y_panel": (list,),
        "base_seed": (int,),
    },
    "paths": {"out_dir": (str,)},
}


def _validate(node, schema, path=""):
    if not isinstance(node, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be an object")
    for key, val in node.items():
        where = f"{path}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key '{where}'")
        sub = schema[key]
        if isinstance(sub, dict):
            _validate(val, sub, where + ".")
        else:
            if isinstance(val, bool) and bool not in sub:
                raise ConfigError(f"config key '{where}' has wrong type bool")
            if not isinstance(val, sub):
                names = "/".join(t.__name__ for t in sub)
                raise ConfigError(
                    f"config key '{where}' must be {names}, got {type(val).__name__}"
                )


def _apply_override(cfg: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-object key '{key}'")
    node[keys[-1]] = value


def load_config(path: str | None, overrides) -> dict:
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    else:
        cfg = {}
    for dotted, raw in overrides:
        _apply_override(cfg, dotted, raw)
    _validate(cfg, _SCHEMA)
    return cfg


def _parse_overrides(extra) -> list:
    pairs = []
    items = list(extra)
    i = 0
    while i < len(items):
        tok = items[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise ConfigError(f"unrecognized argument '{tok}'")
        body = tok[2:]
        if "=" in body:
            dotted, raw = body.split("=", 1)
        else:
            if i + 1 >= len(items):
                raise ConfigError(f"override '{tok}' is missing a value")
            dotted, raw = body, items[i + 1]
            i += 1
        pairs.append((dotted, raw))
        i += 1
    return pairs


def component_seed(base: int, name: str) -> int:
    """Stable per-component seed: first 8 bytes of sha256('<base>:<name>')."""
    digest = hashlib.sha256(f"{int(base)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def _seed_for(cfg: dict, section: str, run_seed: int) -> int:
    explicit = cfg.get(section, {}).get("seed")
    return int(explicit) if explicit is not None else component_seed(run_seed, section)


# ---------------------------------------------------------------------------
# config -> objects


def _build_prior(cfg: dict):
    section = dict(cfg.get("prior", {"type": "scalar"}))
    kind = section.pop("type", "scalar")
    try:
        if kind == "scalar":
            return ScalarPrior(**section)
        if kind == "grf":
            return CovarianceSpec(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid prior section: {exc}") from exc
    raise ConfigError(f"prior.type must be 'scalar' or 'grf', got {kind!r}")


def _build_forward(cfg: dict):
    """(experiment id, forward config or None, field->observation callable)."""
    section = cfg.get("experiment", {})
    exp_id = section.get("id", "quadratic")
    try:
        if exp_id == "quadratic":
            return exp_id, None, lambda u: np.atleast_1d(fm.quadratic_forward(u))
        if exp_id == "darcy":
            fcfg = fm.DarcyConfig(**_listfree(section.get("darcy", {})))
            return exp_id, fcfg, lambda u: fm.darcy_forward(u, fcfg)
        if exp_id == "wave":
            fcfg = fm.WaveConfig(**_listfree(section.get("wave", {})))
            return exp_id, fcfg, lambda u: fm.wave_forward(u, fcfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment section: {exc}") from exc
    raise ConfigError(f"experiment.id must be one of {ds.EXPERIMENTS}, got {exp_id!r}")


def _listfree(section: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}


def _write_manifest(artifact_path, command, cfg, seed, outputs, extra, started) -> str:
    try:
        import numba

        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    import scipy

    from . import __version__

    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "seed": seed,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba_version,
            "edmap": __version__,
        },
        "wall_time_s": round(time.time() - started, 3),
        "outputs": [str(p) for p in outputs],
        "extra": extra or {},
    }
    path = str(artifact_path) + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _observation_from_args(args, d_y_expected=None):
    """Resolve the target observation from --y or --data/--y-index."""
    if getattr(args, "y", None) is not None:
        try:
            vec = np.atleast_1d(np.asarray(json.loads(args.y), dtype=float))
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"--y must be a JSON number or array: {exc}") from exc
        return vec, None
    if getattr(args, "data", None) is not None:
        data = ds.load(args.data)
        idx = int(getattr(args, "y_index", 0) or 0)
        if not 0 <= idx < len(data):
            raise ConfigError(f"--y-index {idx} outside dataset of {len(data)} rows")
        return data.y[idx].copy(), data
    raise ConfigError("provide an observation via --y or --data/--y-index")


# ---------------------------------------------------------------------------
# commands


def _cmd_gen_data(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0)) if args.seed is None else int(args.seed)
    section = cfg.get("dataset", {})
    count = int(section.get("n_samples", 1000)) if args.n is None else int(args.n)
    sigma_obs = float(section.get("sigma_obs", 1.0))
    seed = (
        int(section["seed"])
        if "seed" in section and args.seed is None
        else component_seed(run_seed, "dataset")
    )
    prior = _build_prior(cfg)
    exp_id, fcfg, _ = _build_forward(cfg)
    data = ds.generate(
        exp_id, count, prior=prior, sigma_obs=sigma_obs, seed=seed, forward_cfg=fcfg
    )
    ds.save(data, args.out)
    _write_manifest(
        args.out,
        "gen-data",
        cfg,
        run_seed,
        [args.out, args.out + ".meta.json"],
        {"n_samples": count, "dataset_seed": seed, "resample_retries": data.meta.get("resample_retries")},
        started,
    )
    print(f"wrote {args.out} ({count} rows, d_u={data.u.shape[1]}, d_y={data.y.shape[1]})")
    return 0


def _training_arch(cfg_train: dict, variant: str, reference: str, d_u: int, d_y: int):
    cond = 2 * d_y if reference == "joint" else d_y
    depth = int(cfg_train.get("depth", 3))
    width = int(cfg_train.get("width", 64))
    activation = cfg_train.get("activation", "gelu")
    try:
        if variant == "mlp_residual":
            return nn_core.ArchDescriptor(
                kind="mlp",
                depth=depth,
                width=width,
                d_in=d_u + cond,
                d_out=d_u,
                activation=activation,
            )
        return nn_core.ArchDescriptor(
            kind="dct_operator",
            depth=depth,
            width=width,
            d_y=cond,
            k_modes=int(cfg_train.get("k_modes", 16)),
            activation=activation,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid training architecture: {exc}") from exc


def _cmd_train(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    data = ds.load(args.data)
    d_u, d_y = data.u.shape[1], data.y.shape[1]
    section = cfg.get("training", {})
    variant = section.get("variant", "mlp_residual")
    reference = section.get("reference", "prior")
    if variant not in transport.VARIANTS:
        raise ConfigError(f"training.variant must be one of {transport.VARIANTS}")
    if reference not in transport.REFERENCES:
        raise ConfigError(f"training.reference must be one of {transport.REFERENCES}")
    prior = _build_prior(cfg)
    arch = _training_arch(section, variant, reference, d_u, d_y)
    seed = _seed_for(cfg, "training", run_seed)
    try:
        model = transport.TransportModel(
            variant=variant,
            arch=arch,
            theta=nn_core.init_params(arch, np.random.default_rng(seed)),
            prior=prior,
            n=d_u if variant != "mlp_residual" else None,
            reference=reference,
        )
        train_cfg = TrainConfig(
            epochs=int(section.get("epochs", 1)),
            batch_size=int(section.get("batch_size", 128)),
            m=int(section.get("m", 4)),
            lr=float(section.get("lr", 1e-3)),
            seed=seed,
            norm_eps=float(section.get("norm_eps", 1e-8)),
            lr_drop_epoch=section.get("lr_drop_epoch"),
            lr_drop_factor=float(section.get("lr_drop_factor", 0.1)),
            max_steps=section.get("max_steps"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training section: {exc}") from exc
    trained, history = fit(model, data, train_cfg)
    transport.save_model(
        trained,
        args.out,
        extra={"experiment": data.meta.get("experiment"), "sigma_obs": data.meta.get("sigma_obs")},
    )
    _write_manifest(
        args.out,
        "train",
        cfg,
        run_seed,
        [args.out],
        {
            "final_loss": history["final_loss"],
            "steps": history["steps"],
            "epoch_loss": history["epoch_loss"],
            "training_seed": seed,
        },
        started,
    )
    print(
        f"wrote {args.out} (variant={variant}, steps={history['steps']}, "
        f"final_loss={history['final_loss']:.6g})"
    )
    return 0


def _cmd_sample(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    model = transport.load_model(args.model)
    y_obs, data = _observation_from_args(args)
    if model.reference == "joint" and data is None:
        raise ConfigError("joint-reference models need --data to resample references")
    count = int(args.count)
    seed = component_seed(run_seed, "sample")
    rng = np.random.default_rng(seed)
    ens = transport.pushforward(model, y_obs, count, rng, joint_data=data)
    transport.save_ensemble(ens, args.out)
    _write_manifest(
        args.out,
        "sample",
        cfg,
        run_seed,
        [args.out, args.out + ".meta.json"],
        {"count": count, "sample_seed": seed, "variant": model.variant},
        started,
    )
    print(f"wrote {args.out} ({count} pushforward samples)")
    return 0


def _cmd_pcn(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    prior = _build_prior(cfg)
    _, fcfg, forward = _build_forward(cfg)
    y_obs, _ = _observation_from_args(args)
    section = cfg.get("pcn", {})
    sigma_obs = float(cfg.get("dataset", {}).get("sigma_obs", 1.0))
    seed = _seed_for(cfg, "pcn", run_seed)
    try:
        pcn_cfg = pcn.PcnConfig(
            beta=float(section.get("beta", 0.25)),
            n_steps=int(section.get("n_steps", 200_000)),
            burn_in=int(section.get("burn_in", 20_000)),
            thin=int(section.get("thin", 20)),
            adapt=bool(section.get("adapt", True)),
            seed=seed,
            target_accept=float(section.get("target_accept", 0.25)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid pcn section: {exc}") from exc
    n = None
    if isinstance(prior, CovarianceSpec):
        n = int(getattr(fcfg, "n", 0)) or None
        if n is None:
            raise ConfigError("field-prior chains need a grid size from the experiment config")
    scalar_prior = isinstance(prior, ScalarPrior)
    chain_forward = (lambda u: forward(float(u))) if scalar_prior else forward
    ens, diag = pcn.run_chain(y_obs, chain_forward, prior, sigma_obs, pcn_cfg, n=n)
    transport.save_ensemble(ens, args.out)
    _write_manifest(
        args.out,
        "pcn",
        cfg,
        run_seed,
        [args.out, args.out + ".meta.json"],
        {
            "acceptance_rate": diag["acceptance_rate"],
            "beta_final": diag["beta_final"],
            "n_kept": diag["n_kept"],
            "pcn_seed": seed,
        },
        started,
    )
    print(
        f"wrote {args.out} ({diag['n_kept']} samples, "
        f"acceptance {diag['acceptance_rate']:.3f})"
    )
    return 0


def _cmd_eval(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    model = transport.load_model(args.model)
    data = ds.load(args.dataset)
    idx = int(args.y_index)
    if not 0 <= idx < len(data):
        raise ConfigError(f"--y-index {idx} outside dataset of {len(data)} rows")
    y_obs = data.y[idx].copy()
    section = cfg.get("eval", {})
    count = int(section.get("count", 4000))
    seed = _seed_for(cfg, "eval", run_seed)
    rng = np.random.default_rng(seed)
    joint = data if model.reference == "joint" else None
    ens = transport.pushforward(model, y_obs, count, rng, joint_data=joint)

    exp_id = data.meta.get("experiment", "quadratic")
    obs_id = f"row{idx}"
    levels = np.linspace(0.005, 0.995, 100)
    records = []

    def _quantile_rows(metric, values):
        qs = np.quantile(values, levels)
        for lev, q in zip(levels, qs):
            records.append(
                ev.MetricsRecord(
                    experiment=exp_id,
                    observation=f"{obs_id};level={lev:.3f}",
                    metric=metric,
                    value=float(q),
                    n_a=count,
                    n_b=0,
                    seed=seed,
                )
            )

    if exp_id == "quadratic":
        sigma_obs = float(data.meta.get("sigma_obs", 1.0))
        prior_meta = data.meta.get("prior", {})
        qp = ev.quadrature_posterior(
            float(y_obs[0]),
            m0=float(prior_meta.get("m0", 0.0)),
            sigma0=float(prior_meta.get("sigma0", 1.0)),
            sigma_obs=sigma_obs,
        )
        records.append(
            ev.MetricsRecord(
                experiment=exp_id,
                observation=obs_id,
                metric="w1_quadrature",
                value=ev.w1_1d(ens.samples[:, 0], qp),
                n_a=count,
                n_b=0,
                seed=seed,
            )
        )
        _quantile_rows("posterior_quantile", ens.samples[:, 0])
        _quantile_rows("posterior_truth_quantile", qp.resample(count, rng))
    else:
        spec = _build_prior(cfg)
        if not isinstance(spec, CovarianceSpec):
            raise ConfigError("field-experiment eval needs a grf prior section")
        n = ens.samples.shape[1]
        modes = [int(k) for k in section.get("modes", list(range(1, min(17, n))))]
        from .grf import project_kl_batch, sample_prior_batch

        prior_draws = sample_prior_batch(spec, n, count, rng)
        w1_modes = ev.per_mode_wasserstein(ens.samples, prior_draws, modes)
        coeffs = project_kl_batch(ens.samples, modes)
        for i, k in enumerate(modes):
            records.append(
                ev.MetricsRecord(
                    experiment=exp_id,
                    observation=obs_id,
                    metric="w1_mode_prior",
                    value=float(w1_modes[i]),
                    mode=k,
                    n_a=count,
                    n_b=count,
                    seed=seed,
                )
            )
            qs = np.quantile(coeffs[:, i], levels)
            for lev, q in zip(levels, qs):
                records.append(
                    ev.MetricsRecord(
                        experiment=exp_id,
                        observation=f"{obs_id};level={lev:.3f}",
                        metric="kl_coeff_quantile",
                        value=float(q),
                        mode=k,
                        n_a=count,
                        n_b=0,
                        seed=seed,
                    )
                )
        _quantile_rows("posterior_norm_quantile", np.sqrt(np.mean(ens.samples**2, axis=1)))

    ev.write_jsonl(records, args.out)
    plot_dir = args.plot_dir or (os.path.dirname(os.path.abspath(args.out)) or ".")
    paths = ev.export_plot_data(records, plot_dir)
    _write_manifest(
        args.out,
        "eval",
        cfg,
        run_seed,
        [args.out, *paths.values()],
        {"n_records": len(records), "eval_seed": seed, "count": count},
        started,
    )
    print(f"wrote {args.out} ({len(records)} metric records)")
    return 0


def _cmd_scaling(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    section = cfg.get("scaling", {})
    result = ev.scaling_study(
        "quadratic",
        section.get("k_list", [1000, 4000, 16000, 64000]),
        section.get("widths", [64]),
        reference=section.get("reference", "prior"),
        seeds=tuple(section.get("seeds", [0, 1])),
        train_steps=int(section.get("train_steps", 3000)),
        batch_size=int(section.get("batch_size", 256)),
        m=int(section.get("m", 4)),
        lr=float(section.get("lr", 1e-3)),
        eval_count=int(section.get("eval_count", 10_000)),
        y_panel=tuple(section.get("y_panel", [-1.0, 0.0, 1.0, 2.0])),
        base_seed=int(section.get("base_seed", component_seed(run_seed, "scaling"))),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    jsonl_path = os.path.join(args.out_dir, "scaling_metrics.jsonl")
    ev.write_jsonl(result.records, jsonl_path)
    paths = ev.export_plot_data(result.records, args.out_dir)
    _write_manifest(
        jsonl_path,
        "scaling",
        cfg,
        run_seed,
        [jsonl_path, *paths.values()],
        {
            "slopes": {str(k): v for k, v in result.slopes.items()},
            "cells": [
                {
                    "k": c.k,
                    "width": c.width,
                    "seed": c.seed,
                    "reference": c.reference,
                    "error": c.error,
                    "diverged": c.diverged,
                }
                for c in result.cells
            ],
        },
        started,
    )
    print(f"wrote {jsonl_path}; slopes: {result.slopes}")
    return 0


def _cmd_gradcheck(args, cfg):
    started = time.time()
    run_seed = int(cfg.get("seed", 0))
    seed = component_seed(run_seed, "gradcheck")
    rng = np.random.default_rng(seed)
    report = {}

    arch = nn_core.ArchDescriptor(kind="mlp", depth=3, width=16, d_in=2, d_out=1)
    theta = nn_core.init_params(arch, rng)
    x = rng.standard_normal((8, 2))
    w = rng.standard_normal((8, 1))
    out, cache = nn_core.forward_cached(theta, arch, x)
    grad, _ = nn_core.backward(cache, w)
    report["mlp"] = nn_core.gradient_check(
        lambda t: float(np.sum(w * nn_core.forward_cached(t, arch, x)[0])),
        theta,
        grad,
        rng,
        num_coords=48,
    )

    oarch = nn_core.ArchDescriptor(kind="dct_operator", depth=2, width=8, d_y=3, k_modes=4)
    otheta = nn_core.init_params(oarch, rng)
    u = rng.standard_normal((6, 16))
    y = rng.standard_normal((6, 3))
    wo = rng.standard_normal((6, 16))
    _, ocache = nn_core.forward_cached(otheta, oarch, u, y)
    ograd, _ = nn_core.backward(ocache, wo)
    report["dct_operator"] = nn_core.gradient_check(
        lambda t: float(np.sum(wo * nn_core.forward_cached(t, oarch, u, y)[0])),
        otheta,
        ograd,
        rng,
        num_coords=48,
    )

    spec = CovarianceSpec(sigma=1.0, tau=3.0, alpha=2.0, k_modes=8)
    model = transport.TransportModel(
        variant="cameron_martin",
        arch=oarch,
        theta=otheta,
        prior=spec,
        n=16,
    )
    loss_cfg = LossConfig(m=3, batch_size=4)
    bu = rng.standard_normal((4, 16))
    by = rng.standard_normal((4, 3))
    rp = rng.standard_normal((4, 3, 16))
    _, grad_full = minibatch_loss_and_grad(model, bu, by, rp, loss_cfg)
    report["training_loss"] = nn_core.gradient_check(
        lambda t: minibatch_loss_and_grad(model.with_theta(t), bu, by, rp, loss_cfg)[0],
        otheta,
        grad_full,
        rng,
        num_coords=48,
    )

    worst = max(report.values())
    for name, value in report.items():
        print(f"{name}: max relative error {value:.3e}")
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({k: float(v) for k, v in report.items()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(
            args.out, "gradcheck", cfg, run_seed, [args.out], {"worst": worst}, started
        )
    if worst > 1e-4:
        print(f"gradient check FAILED (worst {worst:.3e} > 1e-4)", file=sys.stderr)
        return 2
    print(f"gradient check passed (worst {worst:.3e})")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edmap",
        description="Amortized posterior sampling with energy-distance transport maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p):
        p.add_argument("--config", default=None, help="JSON config file")

    p = sub.add_parser("gen-data", help="generate a joint (parameter, observation) dataset")
    _common(p)
    p.add_argument("--n", type=int, default=None, help="number of rows (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    p.add_argument("--out", default="dataset.bin")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="fit a transport map on a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="model.bin")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="pushforward samples from a trained map")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--y", default=None, help="observation as JSON (number or array)")
    p.add_argument("--data", default=None, help="dataset to take the observation from")
    p.add_argument("--y-index", type=int, default=0)
    p.add_argument("--count", type=int, default=4000)
    p.add_argument("--out", default="ensemble.bin")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("pcn", help="reference posterior via preconditioned Crank-Nicolson")
    _common(p)
    p.add_argument("--y", default=None, help="observation as JSON (number or array)")
    p.add_argument("--data", default=None)
    p.add_argument("--y-index", type=int, default=0)
    p.add_argument("--out", default="pcn_ensemble.bin")
    p.set_defaults(func=_cmd_pcn)

    p = sub.add_parser("eval", help="metrics for one model against one observation")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--y-index", type=int, default=0)
    p.add_argument("--out", default="metrics.jsonl")
    p.add_argument("--plot-dir", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("scaling", help="dataset-size scaling study (quadratic problem)")
    _common(p)
    p.add_argument("--out-dir", default="scaling_out")
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("gradcheck", help="finite-difference audit of all gradients")
    _common(p)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        overrides = _parse_overrides(extra)
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except (
        ConfigError,
        FileNotFoundError,
        ds.DatasetFormatError,
        nn_core.CheckpointFormatError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 2 on usage errors; those are validation failures here
        code = exc.code if isinstance(exc.code, int) else 0
        return 1 if code not in (0, 1) else code
    except Exception as exc:  # noqa: BLE001 — boundary: report and signal runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
