"""Small fully connected networks with hand-written derivatives.

A network is described by an :class:`MlpSpec` and a flat float64 parameter
vector. Layer ``l`` maps ``h -> W_l h + b_l`` and every layer except the last
applies the activation. Parameters are stored layer by layer, weight matrix
(row-major) first, then the bias.

Three derivative routines are provided:

* :func:`vjp` -- reverse mode for parameters and inputs given an upstream
  cotangent on the outputs;
* :func:`grad_input` -- ``grad_x D(x)`` for scalar-output networks;
* :func:`penalty_param_grad` -- the parameter gradient of
  ``(||grad_x D(x)|| - 1)^2``. A forward tangent pass along
  ``u = d penalty / d grad_x D`` gives the directional derivative
  ``grad_x D . u``, which is then differentiated in reverse mode with
  respect to the parameters (second-order terms enter through ``act''``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import NumericError, ValidationError

ACTIVATIONS = ("tanh", "softplus", "leaky_relu")
NORM_FLOOR = 1e-12
CHECKPOINT_MAGIC = b"W1LABMLP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "tanh"
    slope: float = 0.2

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise ValidationError("an MLP needs input, at least one hidden layer and output widths")
        if min(widths) < 1:
            raise ValidationError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}; pick one of {ACTIVATIONS}")

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        w = self.layer_widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes)

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "activation": self.activation, "slope": self.slope}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["layer_widths"]), d.get("activation", "tanh"), d.get("slope", 0.2))

    @classmethod
    def mlp(cls, in_dim: int, hidden: int, depth: int, out_dim: int, activation: str = "tanh") -> "MlpSpec":
        return cls((in_dim, *([hidden] * depth), out_dim), activation)


def unflatten(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``[(W_1, b_1), ...]`` into the flat parameter vector."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ValidationError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    pos = 0
    for o, i in spec.shapes:
        W = params[pos : pos + o * i].reshape(o, i)
        pos += o * i
        b = params[pos : pos + o]
        pos += o
        layers.append((W, b))
    return layers


def weight_mask(spec: MlpSpec) -> np.ndarray:
    """Boolean mask selecting weight-matrix entries (not biases)."""
    mask = np.zeros(spec.n_params, dtype=bool)
    pos = 0
    for o, i in spec.shapes:
        mask[pos : pos + o * i] = True
        pos += o * i + o
    return mask


def init_params(spec: MlpSpec, rng) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    from .measures import as_generator

    gen = as_generator(rng)
    parts = []
    for o, i in spec.shapes:
        limit = np.sqrt(6.0 / (i + o))
        parts.append(gen.uniform(-limit, limit, size=o * i))
        parts.append(np.zeros(o))
    return np.concatenate(parts)


# -- activations ------------------------------------------------------------


def _act(spec: MlpSpec, z: np.ndarray):
    """Activation value and its first two derivatives."""
    if spec.activation == "tanh":
        t = np.tanh(z)
        d1 = 1.0 - t * t
        return t, d1, -2.0 * t * d1
    if spec.activation == "softplus":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))  # logistic, overflow-free
        return np.logaddexp(0.0, z), s, s * (1.0 - s)
    pos = z > 0
    d1 = np.where(pos, 1.0, spec.slope)
    return z * d1, d1, np.zeros_like(z)


def activation_lipschitz(spec: MlpSpec) -> float:
    if spec.activation == "leaky_relu":
        return max(1.0, abs(spec.slope))
    return 1.0


# -- forward / reverse ------------------------------------------------------


def _as_batch(spec: MlpSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValidationError(f"input width {x.shape[-1]} does not match network input {spec.in_dim}")
    return x, single


def _forward_cache(spec, layers, x):
    hs = [x]
    derivs = []
    h = x
    for W, b in layers[:-1]:
        z = h @ W.T + b
        h, d1, d2 = _act(spec, z)
        hs.append(h)
        derivs.append((d1, d2))
    W, b = layers[-1]
    return h @ W.T + b, hs, derivs


def forward(spec: MlpSpec, params: np.ndarray, x) -> np.ndarray:
    """Network output; ``(batch, out)`` for a batch, ``(out,)`` for one point."""
    xb, single = _as_batch(spec, x)
    out, _, _ = _forward_cache(spec, unflatten(spec, params), xb)
    return out[0] if single else out


def vjp(spec: MlpSpec, params: np.ndarray, x, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(upstream * forward(x))`` wrt parameters and inputs."""
    xb, _ = _as_batch(spec, x)
    layers = unflatten(spec, params)
    up = np.asarray(upstream, dtype=np.float64).reshape(xb.shape[0], spec.out_dim)
    _, hs, derivs = _forward_cache(spec, layers, xb)
    grads = [None] * len(layers)
    delta = up
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        grads[l] = (delta.T @ hs[l], delta.sum(axis=0))
        back = delta @ W
        if l > 0:
            delta = back * derivs[l - 1][0]
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return flat, back


def grad_params(spec: MlpSpec, params: np.ndarray, x, upstream) -> np.ndarray:
    """Parameter gradient of the scalar ``sum_i upstream_i . D(x_i)``.

    For a batch-mean loss ``L = mean_i l(D(x_i))`` pass
    ``upstream_i = l'(D(x_i)) / batch``.
    """
    g, _ = vjp(spec, params, x, upstream)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite parameter gradient")
    return g


def grad_input(spec: MlpSpec, params: np.ndarray, x) -> np.ndarray:
    """``grad_x D(x)`` for a scalar-output network, row per input point."""
    if spec.out_dim != 1:
        raise ValidationError("grad_input needs a scalar-output network")
    xb, single = _as_batch(spec, x)
    _, gx = vjp(spec, params, xb, np.ones((xb.shape[0], 1)))
    return gx[0] if single else gx


class PenaltyGradient(NamedTuple):
    value: float
    grad: np.ndarray
    grad_norms: np.ndarray
    degenerate: int


def penalty_param_grad(spec: MlpSpec, params: np.ndarray, x) -> PenaltyGradient:
    """Value and parameter gradient of ``mean_i (||grad_x D(x_i)|| - 1)^2``.

    Points where ``||grad_x D|| < 1e-12`` contribute ``(0 - 1)^2`` to the value
    but a zero (sub)gradient; their count is reported as ``degenerate``.
    """
    if spec.out_dim != 1:
        raise ValidationError("the gradient penalty needs a scalar-output network")
    xb, _ = _as_batch(spec, x)
    layers = unflatten(spec, params)
    n = xb.shape[0]
    _, hs, derivs = _forward_cache(spec, layers, xb)
    L = len(layers)

    # Reverse pass for g = grad_x D, keeping the per-layer cotangents.
    W_last = layers[-1][0]
    gs = [None] * L  # gs[l]: cotangent on z_l (hidden layer l, 0-based)
    back = np.broadcast_to(W_last, (n, W_last.shape[1]))
    for l in range(L - 2, -1, -1):
        gs[l] = back * derivs[l][0]
        back = gs[l] @ layers[l][0]
    gx = back
    norms = np.linalg.norm(gx, axis=1)
    value = float(np.mean((norms - 1.0) ** 2))
    degenerate = norms < NORM_FLOOR
    scale = np.where(degenerate, 0.0, 2.0 * (norms - 1.0) / np.where(degenerate, 1.0, norms)) / n
    u = gx * scale[:, None]  # d value / d grad_x D

    # Tangent pass: zdot_l = W_l hdot_{l-1}, hdot_l = act'(z_l) zdot_l, hdot_0 = u.
    hdots = [u]
    zdots = []
    hd = u
    for l in range(L - 1):
        zd = hd @ layers[l][0].T
        zdots.append(zd)
        hd = derivs[l][0] * zd
        hdots.append(hd)
    # s = sum_i W_L hdot_{L-1,i} equals value's directional part; reverse it.
    grads = [None] * L
    grads[L - 1] = (hdots[L - 1].sum(axis=0)[None, :], np.zeros(1))
    hbar = np.zeros_like(hs[L - 1])
    hdbar = np.broadcast_to(W_last, hdots[L - 1].shape)
    for l in range(L - 2, -1, -1):
        d1, d2 = derivs[l]
        zdbar = d1 * hdbar
        zbar = d1 * hbar + d2 * zdots[l] * hdbar
        W = layers[l][0]
        gW = zbar.T @ hs[l] + zdbar.T @ hdots[l]
        grads[l] = (gW, zbar.sum(axis=0))
        hbar = zbar @ W
        hdbar = zdbar @ W
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    if not np.all(np.isfinite(flat)):
        raise NumericError("non-finite gradient-penalty gradient")
    return PenaltyGradient(value, flat, norms, int(degenerate.sum()))


def penalty_value(spec: MlpSpec, params: np.ndarray, x) -> float:
    norms = np.linalg.norm(grad_input(spec, params, np.atleast_2d(x)), axis=1)
    return float(np.mean((norms - 1.0) ** 2))


# -- optimizer --------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps_num: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must lie in [0, 1)")
        if self.lr <= 0:
            raise ValidationError("learning rate must be positive")


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, direction: str = "descend"):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to Adam")
    if direction not in ("ascend", "descend"):
        raise ValidationError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    if m.shape != params.shape:
        raise ValidationError("Adam moments do not match the parameter vector")
    t = state.step + 1
    m = state.beta1 * m + (1.0 - state.beta1) * grad
    v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps_num)
    new_params = params + update if direction == "ascend" else params - update
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps_num, m, v, t)
    return new_params, new_state


# -- weight constraints -----------------------------------------------------


@dataclass(frozen=True)
class NoConstraint:
    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class WeightClip:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError("clip bound must be positive")

    def to_dict(self):
        return {"kind": "clip", "c": self.c}


@dataclass(frozen=True)
class RowNormalize:
    """Rescale each weight-matrix row to euclidean norm at most one."""

    def to_dict(self):
        return {"kind": "rownorm"}


@dataclass(frozen=True)
class SpectralNormalize:
    """Rescale each weight matrix to spectral norm at most one."""

    def to_dict(self):
        return {"kind": "spectral"}


ConstraintMode = NoConstraint | WeightClip | RowNormalize | SpectralNormalize


def constraint_from_dict(d: dict) -> ConstraintMode:
    kind = d.get("kind", "none")
    if kind == "none":
        return NoConstraint()
    if kind == "clip":
        return WeightClip(float(d["c"]))
    if kind == "rownorm":
        return RowNormalize()
    if kind == "spectral":
        return SpectralNormalize()
    raise ValidationError(f"unknown constraint kind {kind!r}")


def apply_constraint(mode: ConstraintMode, spec: MlpSpec, params: np.ndarray) -> np.ndarray:
    if isinstance(mode, NoConstraint):
        return params
    if isinstance(mode, WeightClip):
        return np.clip(params, -mode.c, mode.c)
    out = params.copy()
    for W, _ in unflatten(spec, out):
        if isinstance(mode, RowNormalize):
            norms = np.linalg.norm(W, axis=1, keepdims=True)
            W /= np.maximum(norms, 1.0)
        elif isinstance(mode, SpectralNormalize):
            W /= max(1.0, float(np.linalg.norm(W, 2)))
        else:
            raise ValidationError(f"unsupported constraint {mode!r}")
    return out


def lipschitz_upper_bound(spec: MlpSpec, params: np.ndarray) -> float:
    """Product of layer spectral norms times activation Lipschitz constants."""
    bound = 1.0
    for W, _ in unflatten(spec, params):
        bound *= float(np.linalg.norm(W, 2))
    return bound * activation_lipschitz(spec) ** (len(spec.shapes) - 1)


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(path, spec: MlpSpec, params: np.ndarray, extra: dict | None = None) -> None:
    """Binary checkpoint plus a JSON sidecar (``<path>.json``) echoing the network spec.

    Layout: 8-byte magic, u32 version, u32 descriptor length, UTF-8 JSON
    descriptor, u64 parameter count, little-endian float64 parameters.
    """
    path = Path(path)
    desc = json.dumps(spec.to_dict(), sort_keys=True).encode()
    params = np.asarray(params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(desc)))
        fh.write(desc)
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
    sidecar = {"spec": spec.to_dict(), "n_params": int(params.size), **(extra or {})}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[MlpSpec, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a network checkpoint")
    version, dlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    spec = MlpSpec.from_dict(json.loads(data[off : off + dlen]))
    off += dlen
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    params = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64)
    if count != spec.n_params:
        raise ValidationError(f"{path}: {count} parameters stored, spec needs {spec.n_params}")
    return spec, params
