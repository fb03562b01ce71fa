"""Minimal differentiable compute for the two fixed architectures.

There is no general autodiff here: the package needs exactly two network
shapes — a dense MLP and a spectral operator whose blocks mix a per-mode
linear action in the cosine basis with a pointwise affine bypass — so the
forward passes cache what their hand-written reverse passes need and
nothing else.  Parameters live in one flat vector with a deterministic
layout derived from the architecture descriptor; gradients come back in
the same layout.  Correctness is anchored by central finite differences
(see ``gradient_check``).

The spectral operator is resolution-independent: its per-mode weights act
on the lowest ``k_modes`` cosine modes (the constant mode participates
internally) regardless of the grid the input arrives on, so one parameter
vector can be evaluated at any n > k_modes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .grf import _basis, midpoints

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_CKPT_MAGIC = b"ATMC"
_CKPT_VERSION = 1

ACTIVATIONS = ("relu", "gelu", "tanh")
KINDS = ("mlp", "dct_operator")


class CheckpointFormatError(RuntimeError):
    """Raised when a checkpoint file does not parse as valid ATMC."""


@dataclass(frozen=True)
class ArchDescriptor:
    """Shape of one network: kind, depth, width, and IO dimensions.

    mlp: maps d_in -> d_out through ``depth`` hidden layers of ``width``.
    dct_operator: maps a field plus a d_y conditioning vector to a field;
    ``k_modes`` spectral modes carry width-by-width weight matrices.
    """

    kind: str
    depth: int
    width: int
    d_in: int = 1
    d_out: int = 1
    d_y: int = 0
    k_modes: int = 0
    activation: str = "gelu"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be positive")
        if self.kind == "mlp":
            if self.d_in < 1 or self.d_out < 1:
                raise ValueError("mlp dimensions must be positive")
        else:
            if self.k_modes < 0:
                raise ValueError("k_modes must be >= 0")
            if self.d_y < 0:
                raise ValueError("d_y must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchDescriptor":
        return cls(**d)


@dataclass(frozen=True)
class ParamLayout:
    """Named-tensor layout of a flat parameter vector."""

    entries: tuple  # ((name, shape, start, stop), ...)
    size: int

    def slot(self, theta: np.ndarray, name: str) -> np.ndarray:
        for ename, shape, start, stop in self.entries:
            if ename == name:
                return theta[start:stop].reshape(shape)
        raise KeyError(name)

    def names(self):
        return [e[0] for e in self.entries]


@lru_cache(maxsize=64)
def layout_for(arch: ArchDescriptor) -> ParamLayout:
    shapes = []
    if arch.kind == "mlp":
        dims = [arch.d_in] + [arch.width] * arch.depth + [arch.d_out]
        for layer in range(arch.depth + 1):
            shapes.append((f"W{layer}", (dims[layer + 1], dims[layer])))
            shapes.append((f"b{layer}", (dims[layer + 1],)))
    else:
        c_in = 2 + arch.d_y
        shapes.append(("lift_W", (arch.width, c_in)))
        shapes.append(("lift_b", (arch.width,)))
        for layer in range(arch.depth):
            shapes.append((f"spec{layer}", (arch.k_modes, arch.width, arch.width)))
            shapes.append((f"byp_W{layer}", (arch.width, arch.width)))
            shapes.append((f"byp_b{layer}", (arch.width,)))
        shapes.append(("proj_W", (1, arch.width)))
        shapes.append(("proj_b", (1,)))
    entries = []
    offset = 0
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        entries.append((name, shape, offset, offset + size))
        offset += size
    return ParamLayout(entries=tuple(entries), size=offset)


def init_params(arch: ArchDescriptor, rng: np.random.Generator) -> np.ndarray:
    """Fresh parameter vector: Glorot-uniform affine weights, zero biases,
    spectral weights scaled by 1/width."""
    lay = layout_for(arch)
    theta = np.zeros(lay.size)
    for name, shape, start, stop in lay.entries:
        if name.startswith("spec"):
            theta[start:stop] = rng.standard_normal(stop - start) / arch.width
        elif name.startswith(("W", "lift_W", "byp_W", "proj_W")):
            fan_out, fan_in = shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            theta[start:stop] = rng.uniform(-lim, lim, stop - start)
        # biases stay zero
    return theta


# ---------------------------------------------------------------------------
# activations


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "gelu":
        return 0.5 * z * (1.0 + erf(z / _SQRT2))
    return np.tanh(z)


def _act_grad(name, z):
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "gelu":
        return 0.5 * (1.0 + erf(z / _SQRT2)) + z * np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    t = np.tanh(z)
    return 1.0 - t * t


def _fingerprint(theta: np.ndarray):
    return (float(theta[0]), float(theta[-1]), float(theta.sum()))


# ---------------------------------------------------------------------------
# MLP


def _mlp_forward_cached(theta, arch, x):
    lay = layout_for(arch)
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != arch.d_in:
        raise ValueError(f"input dim {h.shape[1]} != arch d_in {arch.d_in}")
    layers = []
    for layer in range(arch.depth):
        w = lay.slot(theta, f"W{layer}")
        b = lay.slot(theta, f"b{layer}")
        z = h @ w.T + b
        layers.append((h, z))
        h = _act(arch.activation, z)
    w = lay.slot(theta, f"W{arch.depth}")
    b = lay.slot(theta, f"b{arch.depth}")
    out = h @ w.T + b
    cache = {
        "kind": "mlp",
        "arch": arch,
        "theta": theta,
        "fp": _fingerprint(theta),
        "layers": layers,
        "last_h": h,
        "squeeze": squeeze,
    }
    return (out[0] if squeeze else out), cache


def _mlp_backward(cache, d_out):
    arch = cache["arch"]
    theta = cache["theta"]
    lay = layout_for(arch)
    d_theta = np.zeros(lay.size)

    d_out = np.asarray(d_out, dtype=float)
    if cache["squeeze"]:
        d_out = d_out[None, :]
    w = lay.slot(theta, f"W{arch.depth}")
    _store(d_theta, lay, f"W{arch.depth}", d_out.T @ cache["last_h"])
    _store(d_theta, lay, f"b{arch.depth}", d_out.sum(axis=0))
    d_h = d_out @ w
    for layer in range(arch.depth - 1, -1, -1):
        h_in, z = cache["layers"][layer]
        d_z = d_h * _act_grad(arch.activation, z)
        _store(d_theta, lay, f"W{layer}", d_z.T @ h_in)
        _store(d_theta, lay, f"b{layer}", d_z.sum(axis=0))
        d_h = d_z @ lay.slot(theta, f"W{layer}")
    d_x = d_h[0] if cache["squeeze"] else d_h
    return d_theta, (d_x,)


def _store(d_theta, lay, name, grad):
    for ename, shape, start, stop in lay.entries:
        if ename == name:
            d_theta[start:stop] += np.asarray(grad).ravel()
            return
    raise KeyError(name)


# ---------------------------------------------------------------------------
# DCT-spectral operator


def _mode_basis(n: int, k_modes: int) -> np.ndarray:
    """Rows 0..k_modes-1 of the orthonormal cosine basis on n midpoints."""
    if k_modes == 0:
        return np.zeros((0, n))
    return _basis(n, k_modes - 1)[:k_modes]


def _operator_forward_cached(theta, arch, u, y):
    lay = layout_for(arch)
    u = np.asarray(u, dtype=float)
    squeeze = u.ndim == 1
    u2 = u[None, :] if squeeze else u
    batch, n = u2.shape
    if arch.k_modes > n - 1:
        raise ValueError(f"k_modes={arch.k_modes} needs a grid with n >= {arch.k_modes + 1}")
    y2 = np.zeros((batch, arch.d_y))
    if arch.d_y:
        if y is None:
            raise ValueError(f"architecture expects d_y={arch.d_y} conditioning values")
        y = np.asarray(y, dtype=float)
        if y.ndim == 1 and y.shape[0] == arch.d_y:
            y2 = np.broadcast_to(y[None, :], (batch, arch.d_y))
        elif y.ndim == 2 and y.shape == (batch, arch.d_y):
            y2 = y
        else:
            raise ValueError(f"conditioning shape {y.shape} != d_y {arch.d_y}")

    feats = np.empty((batch, n, 2 + arch.d_y))
    feats[:, :, 0] = u2
    feats[:, :, 1] = midpoints(n)
    if arch.d_y:
        feats[:, :, 2:] = y2[:, None, :]

    v = feats @ lay.slot(theta, "lift_W").T + lay.slot(theta, "lift_b")
    phi = _mode_basis(n, arch.k_modes)
    blocks = []
    for layer in range(arch.depth):
        r = lay.slot(theta, f"spec{layer}")
        byp_w = lay.slot(theta, f"byp_W{layer}")
        byp_b = lay.slot(theta, f"byp_b{layer}")
        if arch.k_modes:
            # analysis, per-mode mix, synthesis — all batched matmuls
            coeffs = (phi @ v) / n  # (B, K, C)
            wc = (coeffs.transpose(1, 0, 2) @ r.transpose(0, 2, 1)).transpose(1, 0, 2)
            z = phi.T @ wc + v @ byp_w.T + byp_b
        else:
            coeffs = wc = None
            z = v @ byp_w.T + byp_b
        blocks.append((v, coeffs, z))
        v = _act(arch.activation, z)
    out = (v @ lay.slot(theta, "proj_W").T + lay.slot(theta, "proj_b"))[:, :, 0]
    cache = {
        "kind": "dct_operator",
        "arch": arch,
        "theta": theta,
        "fp": _fingerprint(theta),
        "feats": feats,
        "blocks": blocks,
        "last_v": v,
        "phi": phi,
        "n": n,
        "squeeze": squeeze,
    }
    return (out[0] if squeeze else out), cache


def _operator_backward(cache, d_out):
    arch = cache["arch"]
    theta = cache["theta"]
    lay = layout_for(arch)
    n = cache["n"]
    phi = cache["phi"]
    d_theta = np.zeros(lay.size)

    d_out = np.asarray(d_out, dtype=float)
    if cache["squeeze"]:
        d_out = d_out[None, :]
    width = arch.width
    proj_w = lay.slot(theta, "proj_W")
    last_v = cache["last_v"]
    _store(d_theta, lay, "proj_W", d_out.ravel() @ last_v.reshape(-1, width))
    _store(d_theta, lay, "proj_b", d_out.sum())
    d_v = d_out[:, :, None] * proj_w[0]
    for layer in range(arch.depth - 1, -1, -1):
        v_in, coeffs, z = cache["blocks"][layer]
        d_z = d_v * _act_grad(arch.activation, z)
        byp_w = lay.slot(theta, f"byp_W{layer}")
        _store(
            d_theta,
            lay,
            f"byp_W{layer}",
            d_z.reshape(-1, width).T @ v_in.reshape(-1, width),
        )
        _store(d_theta, lay, f"byp_b{layer}", d_z.sum(axis=(0, 1)))
        d_v = d_z @ byp_w
        if arch.k_modes:
            r = lay.slot(theta, f"spec{layer}")
            d_wc = phi @ d_z  # (B, K, C)
            _store(
                d_theta,
                lay,
                f"spec{layer}",
                d_wc.transpose(1, 2, 0) @ coeffs.transpose(1, 0, 2),
            )
            d_coeffs = (d_wc.transpose(1, 0, 2) @ r).transpose(1, 0, 2)
            d_v += phi.T @ d_coeffs / n
    lift_w = lay.slot(theta, "lift_W")
    feats = cache["feats"]
    _store(
        d_theta,
        lay,
        "lift_W",
        d_v.reshape(-1, width).T @ feats.reshape(-1, feats.shape[-1]),
    )
    _store(d_theta, lay, "lift_b", d_v.sum(axis=(0, 1)))
    d_u = (d_v @ lift_w)[:, :, 0]
    if cache["squeeze"]:
        d_u = d_u[0]
    return d_theta, (d_u,)


# ---------------------------------------------------------------------------
# public forward/backward


def forward_cached(theta, arch: ArchDescriptor, *inputs):
    """Run the forward pass and keep what the reverse pass needs.

    mlp: inputs = (x,); dct_operator: inputs = (u, y).
    Returns (output, cache); pass the cache to ``backward``.
    """
    theta = np.asarray(theta, dtype=float)
    lay = layout_for(arch)
    if theta.shape != (lay.size,):
        raise ValueError(f"theta has {theta.shape}, layout wants ({lay.size},)")
    if arch.kind == "mlp":
        (x,) = inputs
        return _mlp_forward_cached(theta, arch, x)
    u, y = inputs
    return _operator_forward_cached(theta, arch, u, y)


def backward(cache, d_out):
    """Reverse pass: gradient of sum(d_out * output) in theta and inputs.

    The cache pins the parameter vector it saw; mutating that vector in
    place between forward and backward invalidates the cached
    pre-activations, so it is an error rather than a wrong answer.
    """
    if _fingerprint(cache["theta"]) != cache["fp"]:
        raise RuntimeError(
            "parameter vector was mutated after the forward pass; rerun forward"
        )
    if cache["kind"] == "mlp":
        return _mlp_backward(cache, d_out)
    return _operator_backward(cache, d_out)


def mlp_forward(theta, arch: ArchDescriptor, x) -> np.ndarray:
    """Dense forward pass (no cache kept)."""
    out, _ = forward_cached(theta, arch, x)
    return out


def dct_operator_forward(theta, arch: ArchDescriptor, u, y=None) -> np.ndarray:
    """Spectral-operator forward pass (no cache kept)."""
    out, _ = forward_cached(theta, arch, u, y)
    return out


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Adam moments plus hyperparameters; operates on flat vectors."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, theta: np.ndarray, lr: float = 1e-3) -> "AdamState":
        return cls(m=np.zeros_like(theta), v=np.zeros_like(theta), lr=lr)


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One Adam update; mutates the moment state, returns the new parameters."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != theta.shape or grad.shape != state.m.shape:
        raise ValueError("theta/gradient/moment shapes disagree")
    if not np.all(np.isfinite(grad)):
        raise ValueError(f"non-finite gradient at optimizer step {state.t + 1}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# verification


def gradient_check(
    loss_fn,
    theta: np.ndarray,
    grad: np.ndarray,
    rng: np.random.Generator,
    num_coords: int = 50,
    step: float = 1e-5,
) -> float:
    """Max relative error of ``grad`` against central differences of ``loss_fn``.

    Probes ``num_coords`` random coordinates (all of them when theta is
    small).  ``loss_fn`` maps a parameter vector to a scalar.
    """
    size = theta.shape[0]
    if num_coords >= size:
        coords = np.arange(size)
    else:
        coords = rng.choice(size, size=num_coords, replace=False)
    worst = 0.0
    for idx in coords:
        probe = theta.copy()
        probe[idx] = theta[idx] + step
        up = loss_fn(probe)
        probe[idx] = theta[idx] - step
        down = loss_fn(probe)
        fd = (up - down) / (2.0 * step)
        denom = max(abs(fd), abs(grad[idx]), 1e-8)
        worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, descriptor: dict, theta: np.ndarray) -> None:
    """Write a descriptor + parameter vector as a little-endian ATMC file."""
    blob = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode("utf-8")
    theta = np.asarray(theta, dtype=float)
    with open(str(path), "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", theta.shape[0]))
        fh.write(np.ascontiguousarray(theta, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read back (descriptor, theta) from an ATMC file."""
    with open(str(path), "rb") as fh:
        buf = fh.read()
    if len(buf) < 12 or buf[:4] != _CKPT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _CKPT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    (desc_len,) = struct.unpack_from("<I", buf, 8)
    desc_end = 12 + desc_len
    if len(buf) < desc_end + 8:
        raise CheckpointFormatError(f"{path}: truncated descriptor")
    try:
        descriptor = json.loads(buf[12:desc_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: descriptor is not valid JSON") from exc
    (count,) = struct.unpack_from("<Q", buf, desc_end)
    start = desc_end + 8
    if len(buf) != start + 8 * count:
        raise CheckpointFormatError(f"{path}: truncated payload")
    theta = np.frombuffer(buf, dtype="<f8", count=count, offset=start).copy()
    return descriptor, theta
