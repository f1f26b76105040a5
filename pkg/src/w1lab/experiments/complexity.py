"""How fast batch distances between two independent samples of one law go to zero."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..entropic_ot import SinkhornParams, sinkhorn_divergence
from ..errors import ValidationError
from ..exact_ot import w1
from ..measures import EmpiricalMeasure, RngSeed, StandardGaussian
from .results import ExperimentResult, Stopwatch, loglog_fit, run_tasks, summarize

LP_SIZE_GUARD = 5000
EXTRAPOLATION_TARGETS = (0.1, 0.01)

STREAM_SAMPLE = 10
STREAM_SINKHORN = 11


def _spec_dict(spec) -> dict:
    return {"kind": type(spec).__name__, **{k: v for k, v in asdict(spec).items()}}


def _pair(spec, n, seed, stream, size_idx, rep):
    gen = RngSeed(seed, stream, (size_idx, rep)).generator()
    return EmpiricalMeasure(spec.draw(n, gen)), EmpiricalMeasure(spec.draw(n, gen))


def _w1_task(args):
    spec, n, seed, size_idx, rep = args
    a, b = _pair(spec, n, seed, STREAM_SAMPLE, size_idx, rep)
    return w1(a, b)


def sample_complexity(d: int, sizes, reps: int = 100, spec=None, seed: int = 0, jobs: int = 1):
    """Monte Carlo ``E[W1(p_n, p~_n)]`` for two independent ``n``-samples of one law.

    Returns the result and a log-log fit of the per-size means, extrapolated
    to the errors in ``EXTRAPOLATION_TARGETS``. Sizes above the LP guard are
    skipped and noted.
    """
    spec = spec if spec is not None else StandardGaussian(d)
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes) or len(set(sizes)) != len(sizes) or min(sizes) < 1:
        raise ValidationError("sizes must be distinct, positive and ascending")
    if reps < 2:
        raise ValidationError("need at least 2 repetitions")
    notes = [f"size {n} skipped: above the LP guard of {LP_SIZE_GUARD}" for n in sizes if n > LP_SIZE_GUARD]
    kept = [(i, n) for i, n in enumerate(sizes) if n <= LP_SIZE_GUARD]
    tasks = [(spec, n, seed, i, r) for i, n in kept for r in range(reps)]
    with Stopwatch() as sw:
        values = run_tasks(_w1_task, tasks, jobs)
    rows = [[n, r, v] for (_, n, _, _, r), v in zip(tasks, values)]
    summaries = [summarize(f"n={n}", [row[2] for row in rows if row[0] == n]) for _, n in kept]
    config = {"d": d, "sizes": sizes, "reps": reps, "spec": _spec_dict(spec)}
    res = ExperimentResult("sample_complexity", config, seed, ["n", "rep", "w1"], rows, summaries, notes=notes, wall_time=sw.elapsed)
    fit = None
    if len(kept) >= 2:
        fit = loglog_fit([n for _, n in kept], [s.mean for s in summaries], EXTRAPOLATION_TARGETS)
        res.fits["loglog"] = fit.to_dict()
    return res, fit


def _sinkhorn_task(args):
    spec, n, eps, seed, size_idx, rep, max_iter = args
    a, b = _pair(spec, n, seed, STREAM_SINKHORN, size_idx, rep)
    s = sinkhorn_divergence(a, b, SinkhornParams(eps, max_iter=max_iter))
    return s, w1(a, b)


def sinkhorn_complexity(d: int, eps, sizes, reps: int = 100, spec=None, seed: int = 0, jobs: int = 1, max_iter: int = 10000) -> ExperimentResult:
    """Paired Monte Carlo of ``S_eps(p_n, p~_n)`` and ``W1(p_n, p~_n)`` on the same draws.

    ``eps`` may be a single value or a list (an epsilon sweep); every
    ``(eps, n)`` cell uses the same draws so cells are directly comparable.
    """
    spec = spec if spec is not None else StandardGaussian(d)
    eps_list = [float(e) for e in np.atleast_1d(eps)]
    sizes = [int(n) for n in sizes]
    if any(n > LP_SIZE_GUARD for n in sizes):
        raise ValidationError(f"sizes above the LP guard of {LP_SIZE_GUARD}")
    tasks = [(spec, n, e, seed, i, r, max_iter) for e in eps_list for i, n in enumerate(sizes) for r in range(reps)]
    with Stopwatch() as sw:
        values = run_tasks(_sinkhorn_task, tasks, jobs)
    rows = [[e, n, r, s, v] for (_, n, e, _, _, r, _), (s, v) in zip(tasks, values)]
    summaries = []
    ratios = {}
    for e in eps_list:
        for n in sizes:
            cell = [row for row in rows if row[0] == e and row[1] == n]
            s_sum = summarize(f"sinkhorn eps={e:g} n={n}", [row[3] for row in cell])
            w_sum = summarize(f"w1 eps={e:g} n={n}", [row[4] for row in cell])
            summaries += [s_sum, w_sum]
            ratios[f"eps={e:g} n={n}"] = s_sum.mean / w_sum.mean
    config = {"d": d, "eps": eps_list, "sizes": sizes, "reps": reps, "spec": _spec_dict(spec), "max_iter": max_iter}
    return ExperimentResult(
        "sinkhorn_complexity",
        config,
        seed,
        ["eps", "n", "rep", "sinkhorn", "w1"],
        rows,
        summaries,
        extras={"mean_ratio_sinkhorn_to_w1": ratios},
        wall_time=sw.elapsed,
    )
