"""Loss vocabulary for critic/generator training and Lipschitz-normalized estimates.

Each loss comes in two forms: a plain evaluation (``value_fn``,
``ctransform_loss``, ...) and a ``*_grads`` helper returning the loss together
with the cotangents needed by the training loops.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ..errors import ValidationError
from ..exact_ot import pairwise_distances
from ..measures import EmpiricalMeasure, as_generator
from ..nn import (
    MlpSpec,
    forward,
    grad_input,
    init_params,
    lipschitz_upper_bound,
    penalty_param_grad,
    unflatten,
    vjp,
)

LIP_FLOOR = 1e-9
LOG_FLOOR = np.log(1e-12)


@dataclass(frozen=True)
class Net:
    """A network spec bundled with its parameters."""

    spec: MlpSpec
    params: np.ndarray

    @classmethod
    def init(cls, spec: MlpSpec, rng) -> "Net":
        return cls(spec, init_params(spec, rng))

    def __call__(self, x) -> np.ndarray:
        out = forward(self.spec, self.params, np.atleast_2d(x))
        return out[:, 0] if self.spec.out_dim == 1 else out

    def with_params(self, params) -> "Net":
        return replace(self, params=params)

    def scale_last_layer(self, K: float) -> "Net":
        """Multiply the final affine layer (weights and bias) by ``K``."""
        p = self.params.copy()
        W, b = unflatten(self.spec, p)[-1]
        W *= K
        b *= K
        return self.with_params(p)


def _pw(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, EmpiricalMeasure):
        return batch.points, batch.weights
    pts = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValidationError("empty batch")
    return pts, np.full(pts.shape[0], 1.0 / pts.shape[0])


def value_fn(D: Net, a_batch, b_batch) -> float:
    """``E_a[D] - E_b[D]`` under the batches' weights."""
    a, wa = _pw(a_batch)
    b, wb = _pw(b_batch)
    return float(wa @ D(a) - wb @ D(b))


def interpolate_tau(a_batch, b_batch, rng, t=None) -> np.ndarray:
    """Points ``t_i x_i + (1 - t_i) x~_i`` with ``t_i ~ U[0, 1]`` (or given ``t``)."""
    a, _ = _pw(a_batch)
    b, _ = _pw(b_batch)
    if a.shape != b.shape:
        raise ValidationError(f"interpolation needs equal batch shapes, got {a.shape} and {b.shape}")
    if t is None:
        t = as_generator(rng).random(a.shape[0])
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (a.shape[0],))
    return t[:, None] * a + (1.0 - t[:, None]) * b


def gradient_penalty(D: Net, tau_batch) -> float:
    """``mean (||grad_x D(x)|| - 1)^2`` over the interpolation points."""
    tau, _ = _pw(tau_batch)
    norms = np.linalg.norm(grad_input(D.spec, D.params, tau), axis=1)
    return float(np.mean((norms - 1.0) ** 2))


class LipschitzEstimate(NamedTuple):
    lower: float
    upper: float


def lipschitz_bounds(D: Net, tau_batch) -> LipschitzEstimate:
    """Sampled lower bound ``max ||grad D||`` and the operator-norm upper bound."""
    tau, _ = _pw(tau_batch)
    lower = float(np.linalg.norm(grad_input(D.spec, D.params, tau), axis=1).max())
    return LipschitzEstimate(lower, lipschitz_upper_bound(D.spec, D.params))


class NormalizedEstimate(NamedTuple):
    raw: float
    normalized_lower: float
    normalized_upper: float
    lipschitz: LipschitzEstimate
    undefined: bool


def normalized_w1_estimate(D: Net, a, b, tau) -> NormalizedEstimate:
    """Critic value gap divided by the sampled and the certified Lipschitz bounds.

    ``normalized_lower`` divides by the sampled gradient maximum;
    ``normalized_upper`` divides by the certified upper bound, which makes it a
    guaranteed lower bound on the exact W1 of ``a`` and ``b``. When the
    sampled bound falls below ``1e-9`` both are NaN and ``undefined`` is set.
    """
    raw = value_fn(D, a, b)
    lip = lipschitz_bounds(D, tau)
    if lip.lower < LIP_FLOOR:
        return NormalizedEstimate(raw, float("nan"), float("nan"), lip, True)
    return NormalizedEstimate(raw, raw / lip.lower, raw / lip.upper, lip, False)


# -- c-transform loss ---------------------------------------------------------


def _ctransform_parts(D: Net, a, b, support: str):
    if support == "real":
        S = a
    elif support == "generated":
        S = b
    else:
        raise ValidationError(f"c-transform support must be 'real' or 'generated', got {support!r}")
    if S.shape[0] == 0:
        raise ValidationError("empty c-transform support")
    dS = D(S)
    M = pairwise_distances(b, S) - dS[None, :]
    arg = np.argmin(M, axis=1)
    return S, dS, M[np.arange(b.shape[0]), arg], arg


def ctransform_loss(D: Net, a_batch, b_batch, support: str = "real") -> float:
    """``E_a[D] + E_b[D^c]`` with ``D^c(x) = min_{y in S} ||x - y|| - D(y)``.

    ``support='real'`` minimizes over the real batch ``a`` (this is the
    semi-dual of the batch transport problem, so the loss never exceeds the
    batch W1); ``support='generated'`` minimizes over ``b`` itself.
    """
    a, wa = _pw(a_batch)
    b, wb = _pw(b_batch)
    _, _, dc, _ = _ctransform_parts(D, a, b, support)
    return float(wa @ D(a) + wb @ dc)


def ctransform_grads(D: Net, a, b, support: str = "real"):
    """Loss, critic-parameter gradient and gradient wrt the points of ``b``."""
    n_a, n_b = a.shape[0], b.shape[0]
    S, _, dc, arg = _ctransform_parts(D, a, b, support)
    loss = float(D(a).mean() + dc.mean())
    counts = np.bincount(arg, minlength=S.shape[0]) / n_b
    diff = b - S[arg]
    norm = np.linalg.norm(diff, axis=1, keepdims=True)
    unit = np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
    gb = unit / n_b
    if support == "real":
        up = np.full(n_a, 1.0 / n_a) - counts
        g_alpha, _ = vjp(D.spec, D.params, a, up[:, None])
    else:
        g_a, _ = vjp(D.spec, D.params, a, np.full((n_a, 1), 1.0 / n_a))
        g_S, gx_S = vjp(D.spec, D.params, b, -counts[:, None])
        g_alpha = g_a + g_S
        # Each minimizer y* = b_j also moves: -unit from the distance, -grad D from -D(y*).
        np.add.at(gb, arg, -unit / n_b)
        gb += gx_S
    return loss, g_alpha, gb


# -- gradient-penalty WGAN ----------------------------------------------------


def wgan_gp_disc_grads(D: Net, a, b, tau, lam: float):
    """``L_D = V(D, a, b) - lam * R(D, tau)`` and its critic gradient."""
    n_a, n_b = a.shape[0], b.shape[0]
    x = np.concatenate([a, b])
    up = np.concatenate([np.full(n_a, 1.0 / n_a), np.full(n_b, -1.0 / n_b)])[:, None]
    g, _ = vjp(D.spec, D.params, x, up)
    out = D(x)
    v = float(out[:n_a].mean() - out[n_a:].mean())
    if lam == 0:
        return v, g
    pen = penalty_param_grad(D.spec, D.params, tau)
    return v - lam * pen.value, g - lam * pen.grad


def wgan_gen_grads(D: Net, a, b):
    """``L_G = V(D, a, b)`` and its gradient wrt the generated points."""
    v = float(D(a).mean() - D(b).mean())
    return v, -grad_input(D.spec, D.params, b) / b.shape[0]


# -- non-saturating GAN ---------------------------------------------------------


def _log_sigmoid(t):
    return np.maximum(-np.logaddexp(0.0, -t), LOG_FLOOR)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def nsgan_losses(D: Net, a_batch, b_batch) -> tuple[float, float]:
    """``(disc_loss, gen_loss)`` with a logistic squashing of the critic output."""
    a, wa = _pw(a_batch)
    b, wb = _pw(b_batch)
    da, db = D(a), D(b)
    disc = -(wa @ _log_sigmoid(da) + wb @ _log_sigmoid(-db))
    gen = -(wb @ _log_sigmoid(db))
    return float(disc), float(gen)


def nsgan_disc_grads(D: Net, a, b):
    """Ascent objective ``-disc_loss`` and its critic gradient."""
    n_a, n_b = a.shape[0], b.shape[0]
    x = np.concatenate([a, b])
    out = D(x)
    s = _sigmoid(out)
    up = np.concatenate([(1.0 - s[:n_a]) / n_a, -s[n_a:] / n_b])[:, None]
    g, _ = vjp(D.spec, D.params, x, up)
    disc, _ = nsgan_losses(D, a, b)
    return -disc, g


def nsgan_gen_grads(D: Net, b, saturating: bool = False):
    """Generator loss and its gradient wrt generated points.

    The non-saturating loss is ``-mean log sigmoid(D(b))``; the saturating
    variant ``mean log(1 - sigmoid(D(b)))`` is exposed for comparison.
    """
    n = b.shape[0]
    db = D(b)
    s = _sigmoid(db)
    gx = grad_input(D.spec, D.params, b)
    if saturating:
        loss = float(np.mean(_log_sigmoid(-db)))
        return loss, (-s)[:, None] * gx / n
    loss = float(-np.mean(_log_sigmoid(db)))
    return loss, (-(1.0 - s))[:, None] * gx / n
