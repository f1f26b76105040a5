"""Where the batch W1 loss has its minima: collapsed batches and the Bernoulli case."""

from __future__ import annotations

import math

import numpy as np

from ..clustering import kgm_batch
from ..errors import ValidationError
from ..exact_ot import w1
from ..measures import EmpiricalMeasure, RngSeed, as_generator, mean_batch
from .complexity import LP_SIZE_GUARD, _spec_dict
from .results import ExperimentResult, Stopwatch, run_tasks, summarize

STREAM_REFERENCE = 20
STREAM_KGM = 21
STREAM_REPS = 22

CANDIDATES = ("real", "mean", "kgm")


def _reference(spec, reference, ref_n, seed) -> EmpiricalMeasure:
    if reference is not None:
        return reference
    return EmpiricalMeasure(spec.draw(ref_n, RngSeed(seed, STREAM_REFERENCE).generator()))


def _minima_task(args):
    source, n, seed, rep, cands = args
    gen = RngSeed(seed, STREAM_REPS, (rep,)).generator()
    p_n = EmpiricalMeasure(source(n, gen))
    fresh = EmpiricalMeasure(source(n, gen))
    out = [w1(p_n, fresh)]
    out += [w1(p_n, c) for c in cands]
    return out


class _Resampler:
    """Draws batches without replacement from a fixed point cloud (picklable)."""

    def __init__(self, points):
        self.points = points

    def __call__(self, n, gen):
        return self.points[gen.choice(self.points.shape[0], size=n, replace=False)]


def false_minima(
    spec=None,
    n: int = 64,
    reps: int = 100,
    k: int | None = None,
    seed: int = 0,
    reference: EmpiricalMeasure | None = None,
    ref_n: int = 2000,
    n_init: int = 10,
    include_kgm: bool = True,
    jobs: int = 1,
) -> ExperimentResult:
    """Batch W1 from a real batch to three candidates: a fresh real batch, the mean, k-medians.

    The reference cloud (``reference``, or ``ref_n`` draws from ``spec``)
    stands in for the data distribution: the mean batch is ``n`` copies of its
    mean and the k-medians batch is its projection onto ``k`` (default ``n``)
    geometric k-medians centroids. With ``reference`` given, real batches are
    drawn from it without replacement; otherwise they are fresh draws from
    ``spec``.
    """
    if spec is None and reference is None:
        raise ValidationError("need a distribution spec or a reference data set")
    if n > LP_SIZE_GUARD:
        raise ValidationError(f"batch size {n} above the LP guard of {LP_SIZE_GUARD}")
    k = n if k is None else int(k)
    with Stopwatch() as sw:
        ref = _reference(spec, reference, ref_n, seed)
        cands = [mean_batch(ref, n)]
        names = ["real", "mean"]
        if include_kgm:
            cands.append(kgm_batch(ref, k, rng=RngSeed(seed, STREAM_KGM), n_init=n_init))
            names.append("kgm")
        if reference is not None:
            if n > reference.n:
                raise ValidationError(f"batch size {n} exceeds the {reference.n} reference points")
            source = _Resampler(reference.points)
        else:
            source = spec.draw
        tasks = [(source, n, seed, r, cands) for r in range(reps)]
        values = run_tasks(_minima_task, tasks, jobs)
    rows = [[r] + v for r, v in enumerate(values)]
    summaries = [summarize(name, [v[i] for v in values]) for i, name in enumerate(names)]
    orderings = {}
    for i, x in enumerate(summaries):
        for y in summaries[i + 1 :]:
            orderings[f"{x.group}<{y.group}"] = {
                "mean_difference": x.mean - y.mean,
                "disjoint": x.disjoint_below(y) or y.disjoint_below(x),
            }
    config = {"spec": _spec_dict(spec) if spec is not None else None, "n": n, "reps": reps, "k": k, "ref_n": ref.n, "n_init": n_init, "include_kgm": include_kgm}
    return ExperimentResult(
        "false_minima",
        config,
        seed,
        ["rep"] + [f"w1_{c}" for c in names],
        rows,
        summaries,
        extras={"orderings": orderings},
        wall_time=sw.elapsed,
    )


# -- Bernoulli ------------------------------------------------------------------


MINIMAX_BOUND = 2.0 * math.exp(-2.0)


def _pmf(n, theta):
    return np.array([math.comb(n, k) * theta**k * (1.0 - theta) ** (n - k) for k in range(n + 1)])


def bernoulli_point(n: int, theta_star: float, theta: float) -> dict:
    """Exact expectations over ``k ~ Bin(n, theta_star)`` of ``|k/n - theta|`` and its derivative.

    At a kink ``theta = k/n`` the derivative is only defined up to the
    subgradient interval, so the expected gradient is an interval
    ``[grad_lo, grad_hi]``; both ends coincide at smooth points.
    """
    pmf = _pmf(n, theta_star)
    ks = np.arange(n + 1) / n
    gaps = theta - ks
    loss = float(pmf @ np.abs(gaps))
    kink = np.isclose(gaps, 0.0, rtol=0.0, atol=1e-15)
    smooth_part = float(pmf[~kink] @ np.sign(gaps[~kink]))
    kink_mass = float(pmf[kink].sum())
    true_grad = float(np.sign(theta - theta_star))
    true_kink = math.isclose(theta, theta_star, abs_tol=1e-15)
    nonsmooth = bool(kink.any()) or true_kink
    lo, hi = smooth_part - kink_mass, smooth_part + kink_mass
    bias = float("nan") if nonsmooth else smooth_part - true_grad
    return {
        "theta": theta,
        "expected_loss": loss,
        "true_loss": abs(theta - theta_star),
        "grad_lo": lo,
        "grad_hi": hi,
        "true_grad": true_grad,
        "bias": bias,
        "nonsmooth": nonsmooth,
        "exceeds_bound": (not nonsmooth) and abs(bias) >= MINIMAX_BOUND,
    }


def bernoulli_monte_carlo(n: int, theta_star: float, theta: float, draws: int, rng) -> dict:
    """Sampled counterpart of :func:`bernoulli_point` with standard errors."""
    gen = as_generator(rng)
    x = gen.random((draws, n)) < theta_star
    k = x.sum(axis=1) / n
    loss = np.abs(k - theta)
    grad = np.sign(theta - k)
    return {
        "expected_loss": float(loss.mean()),
        "loss_se": float(loss.std(ddof=1) / math.sqrt(draws)),
        "expected_grad": float(grad.mean()),
        "grad_se": float(grad.std(ddof=1) / math.sqrt(draws)),
    }


def bernoulli_bias(n: int, theta_star: float, theta_grid=None) -> ExperimentResult:
    """Exact sample-gradient bias and the batch-loss minimizer for Bernoulli batches.

    For every ``theta`` on the grid: the expected sample gradient, the true
    gradient of ``|theta - theta_star|`` and their difference. The grid
    point minimizing the expected batch loss is reported as ``theta_bar``
    (smallest on ties) and compared with ``theta_star``.
    """
    if not 1 <= n <= 64:
        raise ValidationError("exact enumeration supports 1 <= n <= 64")
    if not 0.0 <= theta_star <= 1.0:
        raise ValidationError("theta_star must lie in [0, 1]")
    grid = np.arange(1, 100) / 100 if theta_grid is None else np.asarray(theta_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0 or np.any(grid <= 0) or np.any(grid >= 1):
        raise ValidationError("theta grid must be nonempty and inside (0, 1)")
    with Stopwatch() as sw:
        points = [bernoulli_point(n, theta_star, float(t)) for t in grid]
    cols = list(points[0].keys())
    rows = [[p[c] for c in cols] for p in points]
    losses = np.array([p["expected_loss"] for p in points])
    theta_bar = float(grid[int(np.argmin(losses))])
    smooth = [abs(p["bias"]) for p in points if not p["nonsmooth"]]
    extras = {
        "theta_bar": theta_bar,
        "theta_star": theta_star,
        "wrong_minimum": not math.isclose(theta_bar, theta_star, abs_tol=1e-12),
        "max_abs_bias": max(smooth) if smooth else float("nan"),
        "minimax_bound": MINIMAX_BOUND,
        "any_exceeds_bound": any(p["exceeds_bound"] for p in points),
    }
    config = {"n": n, "theta_star": theta_star, "theta_grid": grid.tolist()}
    return ExperimentResult("bernoulli_bias", config, 0, cols, rows, extras=extras, wall_time=sw.elapsed)
