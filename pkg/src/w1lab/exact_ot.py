"""Exact discrete optimal transport between empirical measures.

Three independent routes to the same number:

* :func:`exact_w1` / :func:`exact_wp` solve the transportation LP
  (HiGHS dual simplex) for arbitrary weights;
* :func:`assignment_w1` solves the uniform, equal-size case as a linear
  assignment problem (shortest augmenting path);
* :func:`brute_force_w1` enumerates all permutations, for tests only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .errors import NumericError, ValidationError
from .measures import EmpiricalMeasure

MARGINAL_TOL = 1e-9
BRUTE_FORCE_MAX_N = 8


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def marginal_error(self) -> float:
        return max(
            float(np.abs(self.coupling.sum(axis=1) - self.row_marginal).max()),
            float(np.abs(self.coupling.sum(axis=0) - self.col_marginal).max()),
        )


@dataclass(frozen=True)
class W1Result:
    """Optimal value, an optimal plan and the solver that produced them.

    For cost power ``p`` the ``value`` is the transport cost
    ``sum(coupling * cost)``, i.e. ``W_p ** p``.
    """

    value: float
    plan: TransportPlan
    solver: str


def cost_matrix(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 1.0) -> np.ndarray:
    """Pairwise euclidean distances ``||x_i - y_j||_2 ** p``."""
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if p < 1:
        raise ValidationError("cost power must be >= 1")
    return pairwise_distances(a.points, b.points, p)


def pairwise_distances(x: np.ndarray, y: np.ndarray, p: float = 1.0) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if p == 2:
        return sq
    dist = np.sqrt(sq)
    return dist if p == 1 else dist**p


def _check_weights(m: EmpiricalMeasure, name: str):
    if m.weights.sum() <= 0:
        raise ValidationError(f"{name} has degenerate (all-zero) weights")


def exact_wp(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 1.0) -> W1Result:
    """Solve the transportation LP with ground cost ``||x - y|| ** p``."""
    C = cost_matrix(a, b, p)
    _check_weights(a, "a")
    _check_weights(b, "b")
    n, m = C.shape
    if n == 1 or m == 1:
        coupling = np.outer(a.weights, b.weights)
        plan = TransportPlan(coupling, a.weights.copy(), b.weights.copy())
        return W1Result(float((coupling * C).sum()), plan, "lp")

    # Row constraints sum_j g_ij = a_i, column constraints sum_i g_ij = b_j.
    # One column constraint is redundant; dropping it keeps the system full rank.
    rows = sparse.kron(sparse.identity(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.identity(m))
    A_eq = sparse.vstack([rows, cols.tocsr()[:-1]]).tocsc()
    b_eq = np.concatenate([a.weights, b.weights[:-1]])
    res = linprog(
        C.ravel(),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericError(f"transportation LP failed: {res.message}")
    coupling = np.clip(res.x.reshape(n, m), 0.0, None)
    plan = TransportPlan(coupling, a.weights.copy(), b.weights.copy())
    if plan.marginal_error() > MARGINAL_TOL:
        raise NumericError(f"LP plan violates marginals by {plan.marginal_error():.3e}")
    return W1Result(float((coupling * C).sum()), plan, "lp")


def exact_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> W1Result:
    """Wasserstein-1 distance by the transportation LP, any weights."""
    return exact_wp(a, b, 1.0)


def _require_uniform_square(a: EmpiricalMeasure, b: EmpiricalMeasure):
    if a.n != b.n:
        raise ValidationError(f"assignment needs equal sizes, got {a.n} and {b.n}")
    if not (a.is_uniform and b.is_uniform):
        raise ValidationError("assignment needs uniform weights")


def assignment_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> W1Result:
    """``(1/n) min_sigma sum_i ||x_i - y_sigma(i)||`` for uniform equal-size measures."""
    _require_uniform_square(a, b)
    C = cost_matrix(a, b, 1.0)
    rows, cols = linear_sum_assignment(C)
    n = a.n
    coupling = np.zeros_like(C)
    coupling[rows, cols] = 1.0 / n
    plan = TransportPlan(coupling, a.weights.copy(), b.weights.copy())
    return W1Result(float(C[rows, cols].sum() / n), plan, "assignment")


def brute_force_w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exhaustive minimum over all ``n!`` matchings. Refuses ``n > 8``."""
    _require_uniform_square(a, b)
    n = a.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValidationError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX_N}")
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += math.dist(a.points[i], b.points[j])
        best = min(best, total)
    return best / n


def w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exact W1 value, taking the assignment fast path when it applies."""
    if a.n == b.n and a.is_uniform and b.is_uniform:
        return assignment_w1(a, b).value
    return exact_w1(a, b).value


def sorted_w1_1d(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Closed form for 1-D uniform equal-size measures: match sorted coordinates."""
    _require_uniform_square(a, b)
    if a.dim != 1:
        raise ValidationError("sorted matching only applies in one dimension")
    return float(np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))))
