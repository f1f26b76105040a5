"""Entropy-regularized transport with euclidean ground cost.

``W_eps(a, b) = min_g <g, C> + eps * KL(g | a x b)`` over couplings ``g`` of
``a`` and ``b``, solved by Sinkhorn iterations on the dual potentials
``(f, g)``; the optimal plan is ``a_i b_j exp((f_i + g_j - C_ij) / eps)``.
The debiased divergence is ``S = W_eps(a, b) - (W_eps(a, a) + W_eps(b, b)) / 2``.

Soft-min convention: the (c, eps)-transform of ``f`` on a support ``{y_j}``
with weights ``w`` is ``-eps * log sum_j w_j exp((f_j - ||x - y_j||) / eps)``.
As ``eps -> 0`` it tends to ``min_j ||x - y_j|| - f_j``, the hard c-transform
used by the c-transform WGAN loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NumericError, ValidationError
from .exact_ot import cost_matrix, pairwise_distances
from .measures import EmpiricalMeasure

PLAIN_DOMAIN_RATIO = 0.1


@dataclass(frozen=True)
class SinkhornParams:
    epsilon: float
    max_iter: int = 10000
    tol: float = 1e-6
    log_domain: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")


@dataclass(frozen=True)
class SinkhornState:
    potential_f: np.ndarray
    potential_g: np.ndarray
    iterations_used: int
    converged: bool
    marginal_error: float
    plan: np.ndarray
    error_history: tuple[float, ...] = ()


def _softmin(M: np.ndarray, axis: int) -> np.ndarray:
    """``log sum exp`` along ``axis`` with max-shift, no scipy overhead."""
    mx = M.max(axis=axis, keepdims=True)
    out = np.log(np.exp(M - mx).sum(axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis)


def _solve_log(C, a_w, b_w, eps, max_iter, tol):
    log_a, log_b = np.log(a_w), np.log(b_w)
    Ce = C / eps
    g = np.zeros(len(b_w))
    f = -eps * _softmin(g[None, :] / eps - Ce + log_b[None, :], axis=1)
    history = []
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = -eps * _softmin(f[:, None] / eps - Ce + log_a[:, None], axis=0)
        # Columns are exact after the g update. The next f update measures how far
        # the rows are off: row_i = a_i * exp((f_i - f_next_i) / eps).
        f_next = -eps * _softmin(g[None, :] / eps - Ce + log_b[None, :], axis=1)
        err = float(np.abs(a_w * np.expm1((f - f_next) / eps)).sum())
        history.append(err)
        if err <= tol or it == max_iter:
            break
        f = f_next
    plan = np.exp((f[:, None] + g[None, :]) / eps - Ce + log_a[:, None] + log_b[None, :])
    return f, g, it, err, plan, history


def _solve_plain(C, a_w, b_w, eps, max_iter, tol):
    K = np.exp(-C / eps)
    u = np.ones(len(a_w))
    v = np.ones(len(b_w))
    history = []
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        u = 1.0 / (K @ (b_w * v))
        v = 1.0 / (K.T @ (a_w * u))
        rows = a_w * u * (K @ (b_w * v))
        err = float(np.abs(rows - a_w).sum())
        history.append(err)
        if err <= tol:
            break
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(u > 0) and np.all(v > 0)):
        raise NumericError("plain-domain Sinkhorn under/overflowed; use log_domain=True")
    f, g = eps * np.log(u), eps * np.log(v)
    plan = (a_w * u)[:, None] * K * (b_w * v)[None, :]
    return f, g, it, err, plan, history


def sinkhorn_from_cost(C: np.ndarray, a_w: np.ndarray, b_w: np.ndarray, params: SinkhornParams):
    """Run Sinkhorn on an explicit cost matrix; returns ``(value, state)``."""
    eps = params.epsilon
    use_plain = not params.log_domain and eps >= PLAIN_DOMAIN_RATIO * float(np.median(C))
    solver = _solve_plain if use_plain else _solve_log
    f, g, it, err, plan, history = solver(C, a_w, b_w, eps, params.max_iter, params.tol)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericError(f"Sinkhorn potentials became non-finite (eps={eps:g})")
    transport = float((plan * C).sum())
    value = transport + eps * kl_to_product(plan, a_w, b_w)
    state = SinkhornState(f, g, it, err <= params.tol, err, plan, tuple(history))
    return value, state


def kl_to_product(plan: np.ndarray, a_w: np.ndarray, b_w: np.ndarray) -> float:
    """Generalized KL divergence of ``plan`` from ``a x b``."""
    ref = np.outer(a_w, b_w)
    mask = plan > 0
    kl = float(np.sum(plan[mask] * np.log(plan[mask] / ref[mask])))
    return kl - float(plan.sum()) + 1.0


def sinkhorn_cost(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams):
    """Entropic cost ``W_eps(a, b)`` evaluated at the computed plan.

    Returns ``(value, state)``. Non-convergence is reported through
    ``state.converged`` rather than raised.
    """
    C = cost_matrix(a, b, 1.0)
    return sinkhorn_from_cost(C, a.weights, b.weights, params)


def _divergence_parts(a, b, params):
    ab = sinkhorn_cost(a, b, params)
    aa = sinkhorn_cost(a, a, params)
    bb = sinkhorn_cost(b, b, params)
    return ab, aa, bb


def sinkhorn_divergence(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> float:
    """Debiased divergence ``W_eps(a,b) - (W_eps(a,a) + W_eps(b,b)) / 2``."""
    (vab, _), (vaa, _), (vbb, _) = _divergence_parts(a, b, params)
    return vab - 0.5 * (vaa + vbb)


def sinkhorn_divergence_with_states(a, b, params):
    (vab, sab), (vaa, saa), (vbb, sbb) = _divergence_parts(a, b, params)
    return vab - 0.5 * (vaa + vbb), (sab, saa, sbb)


def ceps_transform(f, support: EmpiricalMeasure, x, epsilon: float) -> float:
    """Soft c-transform ``-eps log sum_j w_j exp((f_j - ||x - y_j||) / eps)``."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if f.shape[0] != support.n:
        raise ValidationError(f"{f.shape[0]} potential values for {support.n} support atoms")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    dist = pairwise_distances(x, support.points)[0]
    return float(-epsilon * logsumexp((f - dist) / epsilon, b=support.weights))


def _unit_rows(diff: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    out = np.zeros_like(diff)
    np.divide(diff, norm, out=out, where=norm > 0)
    return out


def sinkhorn_grad_points(a: EmpiricalMeasure, b: EmpiricalMeasure, params: SinkhornParams) -> np.ndarray:
    """Gradient of ``S_eps(a, b)`` with respect to the support points of ``b``.

    Uses the converged plans (envelope theorem): each sub-problem contributes
    ``sum_i plan_ij * d/dy_j ||x_i - y_j||``. Raises if any of the three
    Sinkhorn solves did not converge.
    """
    _, (sab, saa, sbb) = sinkhorn_divergence_with_states(a, b, params)
    for name, st in (("W(a,b)", sab), ("W(a,a)", saa), ("W(b,b)", sbb)):
        if not st.converged:
            raise NumericError(
                f"{name} did not converge: marginal error {st.marginal_error:.3e} "
                f"after {st.iterations_used} iterations"
            )
    return _grad_from_plans(a.points, b.points, sab.plan, sbb.plan)


def _grad_from_plans(x, y, plan_ab, plan_bb):
    # d/dy_j ||x_i - y_j|| = (y_j - x_i) / ||y_j - x_i||
    unit_ab = _unit_rows(y[None, :, :] - x[:, None, :])
    grad = np.einsum("ij,ijk->jk", plan_ab, unit_ab)
    # W(b, b) moves both arguments; by symmetry of the plan the two halves agree,
    # so the self term contributes -1/2 * 2 * sum_i plan_ij * unit(y_j - y_i).
    unit_bb = _unit_rows(y[None, :, :] - y[:, None, :])
    sym = 0.5 * (plan_bb + plan_bb.T)
    grad -= np.einsum("ij,ijk->jk", sym, unit_bb)
    return grad
