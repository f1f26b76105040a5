"""Geometric medians, geometric k-medians and nearest-neighbour projections.

The projection measure of ``rho`` onto a finite set ``S`` moves every atom to
its nearest point of ``S`` (ties go to the lowest index). Its W_p distance to
``rho`` is the mean p-th power distance to ``S``, and it is the W_p-closest
measure supported in ``S``; with ``S`` the geometric k-medians centroids it is
therefore the W1-closest measure on k atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .exact_ot import pairwise_distances
from .measures import EmpiricalMeasure, RngSeed, as_generator


@dataclass(frozen=True)
class WeiszfeldParams:
    max_iter: int = 1000
    tol: float = 1e-10
    anchor_epsilon: float = 1e-12

    def __post_init__(self):
        if self.max_iter < 1 or not self.tol > 0 or not self.anchor_epsilon > 0:
            raise ValidationError("Weiszfeld parameters must be positive")


@dataclass(frozen=True)
class ClusterSet:
    centroids: np.ndarray
    assignment: np.ndarray
    objective: float
    history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def median_objective(points, weights, m) -> float:
    return float(weights @ np.linalg.norm(points - m, axis=1))


def geometric_median(points, weights=None, params: WeiszfeldParams = WeiszfeldParams(), start=None) -> np.ndarray:
    """Minimizer of ``sum_i w_i ||x_i - m||`` by Weiszfeld iteration.

    When an iterate lands on a data point (within ``anchor_epsilon``) the
    point is checked for optimality via its subgradient; if it is not optimal
    the iterate steps off it along the descent direction instead of dividing
    by zero.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = X.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    if n == 1:
        return X[0].copy()
    if w.sum() <= 0:
        raise ValidationError("weights must have positive mass")
    y = (w @ X) / w.sum() if start is None else np.asarray(start, dtype=np.float64).copy()
    best, best_obj = y, median_objective(X, w, y)
    for _ in range(params.max_iter):
        diff = X - y
        dist = np.linalg.norm(diff, axis=1)
        near = dist < params.anchor_epsilon
        if near.any():
            y_new = _anchor_step(X, w, y, dist, near)
            if y_new is None:
                return y
        else:
            inv = w / dist
            y_new = (inv @ X) / inv.sum()
        step = np.linalg.norm(y_new - y)
        y = y_new
        obj = median_objective(X, w, y)
        if obj < best_obj:
            best, best_obj = y, obj
        if step < params.tol:
            break
    return best


def _anchor_step(X, w, y, dist, near):
    """Subgradient test at a data point; ``None`` means the anchor is optimal."""
    far = ~near
    if not far.any():
        return None
    inv = w[far] / dist[far]
    # Pull of the remaining points, R, versus the mass sitting on the anchor.
    R = inv @ (X[far] - y)
    r = np.linalg.norm(R)
    anchor_mass = w[near].sum()
    if r <= anchor_mass:
        return None
    T = (inv @ X[far]) / inv.sum()
    shrink = max(0.0, 1.0 - anchor_mass / r)
    return y + shrink * (T - y)


def _batched_medians(X, labels, centroids, k, iters=200, tol=1e-10):
    """Weiszfeld on all clusters at once, started from the current centroids.

    A cluster keeps its old centroid unless the new one strictly lowers the
    within-cluster sum of distances, so a Lloyd step never increases the
    objective.
    """
    d = X.shape[1]
    counts = np.bincount(labels, minlength=k)
    Y = centroids.copy()
    for _ in range(iters):
        diff = X - Y[labels]
        dist = np.linalg.norm(diff, axis=1)
        # Vardi-Zhang step: points sitting on the centroid are left out of the
        # Weiszfeld average and instead pull the step back towards the centroid.
        on = dist < 1e-12
        inv = np.where(on, 0.0, 1.0 / np.where(on, 1.0, dist))
        den = np.bincount(labels, weights=inv, minlength=k)
        num = np.zeros((k, d))
        np.add.at(num, labels, X * inv[:, None])
        pull = np.zeros((k, d))
        np.add.at(pull, labels, diff * inv[:, None])
        eta = np.bincount(labels, weights=on.astype(float), minlength=k)
        r = np.linalg.norm(pull, axis=1)
        Y_new = Y.copy()
        ok = (counts > 0) & (den > 0)
        T = num[ok] / den[ok, None]
        frac = np.divide(eta[ok], r[ok], out=np.full(ok.sum(), np.inf), where=r[ok] > 0)
        Y_new[ok] = np.maximum(0.0, 1.0 - frac)[:, None] * T + np.minimum(1.0, frac)[:, None] * Y[ok]
        moved = np.linalg.norm(Y_new - Y, axis=1).max()
        Y = Y_new
        if moved < tol:
            break
    old = np.bincount(labels, weights=np.linalg.norm(X - centroids[labels], axis=1), minlength=k)
    new = np.bincount(labels, weights=np.linalg.norm(X - Y[labels], axis=1), minlength=k)
    keep = new >= old
    Y[keep] = centroids[keep]
    return Y


def _kmeanspp(X, k, gen):
    n = X.shape[0]
    chosen = [int(gen.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(gen.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(gen.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def nearest(X, centroids):
    """Index of and distance to the nearest centroid (lowest index on ties)."""
    D = pairwise_distances(X, centroids)
    idx = np.argmin(D, axis=1)
    return idx, D[np.arange(X.shape[0]), idx]


def _lloyd_run(X, k, gen, max_iter, tol):
    C = _kmeanspp(X, k, gen)
    labels, dist = nearest(X, C)
    history = [float(dist.sum())]
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # Empty cluster: re-seed at the point farthest from its centroid.
            far = int(np.argmax(dist))
            C[j] = X[far]
            labels[far] = j
            dist[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        C = _batched_medians(X, labels, C, k)
        labels, dist = nearest(X, C)
        obj = float(dist.sum())
        improvement = history[-1] - obj
        history.append(obj)
        if improvement < tol:
            break
    return ClusterSet(C, labels, history[-1], tuple(history))


def k_gm_lloyd(data: EmpiricalMeasure, k: int, n_init: int = 100, rng=0, max_iter: int = 100, tol: float = 1e-9) -> ClusterSet:
    """Geometric k-medians by Lloyd iterations with Weiszfeld centroid updates.

    Runs ``n_init`` k-means++-seeded restarts, each on its own random stream,
    and keeps the lowest objective (earliest restart on ties). Atom weights
    are ignored: the objective is the plain sum of distances over atoms.
    """
    X = data.points
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} must lie in [1, {n}]")
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")
    base = rng if isinstance(rng, RngSeed) else None
    best = None
    for r in range(n_init):
        gen = base.child(r).generator() if base is not None else as_generator(RngSeed(int(rng), 0, (r,)))
        run = _lloyd_run(X, k, gen, max_iter, tol)
        if best is None or run.objective < best.objective:
            best = run
    return best


def projection_measure(S, rho: EmpiricalMeasure) -> EmpiricalMeasure:
    """Push ``rho`` forward under nearest-point projection onto ``S``.

    Atoms of ``S`` receiving no mass are dropped.
    """
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] == 0:
        raise ValidationError("projection target set is empty")
    if S.shape[1] != rho.dim:
        raise ValidationError("dimension mismatch between S and rho")
    idx, _ = nearest(rho.points, S)
    mass = np.bincount(idx, weights=rho.weights, minlength=S.shape[0])
    keep = mass > 0
    return EmpiricalMeasure.from_unnormalized(S[keep], mass[keep])


def distance_to_set(x, S, p: float = 1.0) -> np.ndarray:
    _, d = nearest(np.atleast_2d(x), np.atleast_2d(S))
    return d**p


def kgm_batch(data: EmpiricalMeasure, k: int, rng=0, n_init: int = 100) -> EmpiricalMeasure:
    """Projection of ``data`` onto its geometric k-medians centroids."""
    clusters = k_gm_lloyd(data, k, n_init=n_init, rng=rng)
    return projection_measure(clusters.centroids, data)
