"""How well a trained critic estimates W1: static measures and the three protocol variants.

``minibatch``: minibatch critic ascent on two fixed measures, then evaluation
on the full measures (same as :func:`oracle_static`). ``fullbatch``: full-batch
ascent on the plain value gap under a weight constraint, full-measure
evaluation. ``batch-lp``: per-minibatch comparison of the critic's loss with
the exact W1 of the same minibatches, either for two fixed sources or along
a generator training run.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..exact_ot import w1
from ..gan_lab.losses import Net, interpolate_tau, lipschitz_bounds
from ..gan_lab.training import TrainConfig, _disc_step, reported_loss, train_gan
from ..measures import EmpiricalMeasure, RngSeed, subsample
from ..nn import AdamState, NoConstraint, SpectralNormalize, adam_step, apply_constraint, vjp
from .results import ExperimentResult, Stopwatch, summarize

VARIANTS = ("minibatch", "fullbatch", "batch-lp")
EVAL_PAIRS = 2000

ORACLE_COLUMNS = [
    "iteration",
    "raw",
    "lip_lower",
    "lip_upper",
    "normalized_lower",
    "normalized_upper",
    "exact_w1",
    "ratio_exact_to_normalized",
]


def _batch(m: EmpiricalMeasure, n: int, gen) -> np.ndarray:
    return subsample(m, n, gen, replace=m.n < n).points


def _eval_tau(a: EmpiricalMeasure, b: EmpiricalMeasure, gen) -> np.ndarray:
    m = min(EVAL_PAIRS, max(a.n, b.n))
    pa = a.points[gen.choice(a.n, size=m, p=a.weights)]
    pb = b.points[gen.choice(b.n, size=m, p=b.weights)]
    return interpolate_tau(pa, pb, gen)


def _oracle_row(it, cfg, D, a, b, exact, gen) -> list:
    raw = reported_loss(cfg, D, a, b)
    lip = lipschitz_bounds(D, _eval_tau(a, b, gen))
    nl = raw / lip.lower if lip.lower >= 1e-9 else float("nan")
    nu = raw / lip.upper if lip.upper >= 1e-9 else float("nan")
    ratio = exact / nl if np.isfinite(nl) and nl != 0 else float("nan")
    return [it, raw, lip.lower, lip.upper, nl, nu, exact, ratio]


def _check_pair(a, b, disc_spec):
    if a.dim != b.dim or a.dim != disc_spec.in_dim or disc_spec.out_dim != 1:
        raise ValidationError("measures and critic input width must agree, critic output must be scalar")


def oracle_static(
    a: EmpiricalMeasure,
    b: EmpiricalMeasure,
    disc_spec,
    cfg: TrainConfig,
    N: int,
    eval_every: int = 0,
) -> ExperimentResult:
    """Minibatch critic ascent on fixed ``a`` and ``b``, evaluated on the full measures.

    Rows hold the full-measure value gap, both Lipschitz bounds, both
    normalized estimates and the exact W1 at every ``eval_every``-th step
    and after the last one.
    """
    _check_pair(a, b, disc_spec)
    root = RngSeed(cfg.seed)
    D = Net.init(disc_spec, root.child(1).generator())
    constraint = cfg.effective_constraint()
    D = D.with_params(apply_constraint(constraint, D.spec, D.params))
    gen_batch, gen_tau, gen_eval = root.child(2).generator(), root.child(4).generator(), root.child(5).generator()
    opt = AdamState(cfg.lr_d, cfg.beta1, cfg.beta2)
    rows = []
    with Stopwatch() as sw:
        exact = w1(a, b)
        for it in range(N):
            if eval_every > 0 and it % eval_every == 0:
                rows.append(_oracle_row(it, cfg, D, a, b, exact, gen_eval))
            xa, xb = _batch(a, cfg.batch_n, gen_batch), _batch(b, cfg.batch_n, gen_batch)
            _, g = _disc_step(cfg, D, xa, xb, gen_tau)
            new, opt = adam_step(opt, D.params, g, "ascend")
            D = D.with_params(apply_constraint(constraint, D.spec, new))
        rows.append(_oracle_row(N, cfg, D, a, b, exact, gen_eval))
    config = {"variant": "minibatch", "train": cfg.to_dict(), "N": N, "eval_every": eval_every, "disc_spec": disc_spec.to_dict(), "n_a": a.n, "n_b": b.n}
    res = ExperimentResult("oracle_static", config, cfg.seed, ORACLE_COLUMNS, rows, wall_time=sw.elapsed)
    res.extras["final"] = dict(zip(ORACLE_COLUMNS, rows[-1]))
    res.critic = D
    return res


def _fullbatch(a, b, disc_spec, cfg, N, eval_every):
    _check_pair(a, b, disc_spec)
    root = RngSeed(cfg.seed)
    D = Net.init(disc_spec, root.child(1).generator())
    constraint = cfg.effective_constraint()
    if isinstance(constraint, NoConstraint):
        constraint = SpectralNormalize()
    D = D.with_params(apply_constraint(constraint, D.spec, D.params))
    gen_eval = root.child(5).generator()
    x = np.concatenate([a.points, b.points])
    up = np.concatenate([a.weights, -b.weights])[:, None]
    opt = AdamState(cfg.lr_d, cfg.beta1, cfg.beta2)
    plain = TrainConfig(loss_kind="wgan-clip", seed=cfg.seed)
    rows = []
    with Stopwatch() as sw:
        exact = w1(a, b)
        for it in range(N):
            if eval_every > 0 and it % eval_every == 0:
                rows.append(_oracle_row(it, plain, D, a, b, exact, gen_eval))
            g, _ = vjp(D.spec, D.params, x, up)
            new, opt = adam_step(opt, D.params, g, "ascend")
            D = D.with_params(apply_constraint(constraint, D.spec, new))
        rows.append(_oracle_row(N, plain, D, a, b, exact, gen_eval))
    config = {"variant": "fullbatch", "train": cfg.to_dict(), "constraint": constraint.to_dict(), "N": N, "eval_every": eval_every, "disc_spec": disc_spec.to_dict(), "n_a": a.n, "n_b": b.n}
    res = ExperimentResult("protocol_fullbatch", config, cfg.seed, ORACLE_COLUMNS, rows, wall_time=sw.elapsed)
    res.extras["final"] = dict(zip(ORACLE_COLUMNS, rows[-1]))
    return res


BATCH_LP_COLUMNS = ["round", "critic_loss", "batch_w1", "relative_deviation"]


def _rel_dev(loss, exact):
    return abs(loss - exact) / exact if exact > 0 else abs(loss)


def _batch_lp_static(a_src, b_src, disc_spec, cfg, N, M):
    """Critic trained on minibatches of two fixed sources, compared to LP on fresh ones."""
    root = RngSeed(cfg.seed)
    D = Net.init(disc_spec, root.child(1).generator())
    constraint = cfg.effective_constraint()
    D = D.with_params(apply_constraint(constraint, D.spec, D.params))
    gen_batch, gen_tau, gen_eval = root.child(2).generator(), root.child(4).generator(), root.child(5).generator()
    opt = AdamState(cfg.lr_d, cfg.beta1, cfg.beta2)

    def step(D, opt):
        xa, xb = a_src(cfg.batch_n, gen_batch), b_src(cfg.batch_n, gen_batch)
        _, g = _disc_step(cfg, D, xa, xb, gen_tau)
        new, opt = adam_step(opt, D.params, g, "ascend")
        return D.with_params(apply_constraint(constraint, D.spec, new)), opt

    rows = []
    for _ in range(N):
        D, opt = step(D, opt)
    for r in range(M):
        for _ in range(cfg.n_d):
            D, opt = step(D, opt)
        xa, xb = a_src(cfg.batch_n, gen_eval), b_src(cfg.batch_n, gen_eval)
        loss = reported_loss(cfg, D, xa, xb)
        exact = w1(EmpiricalMeasure(xa), EmpiricalMeasure(xb))
        rows.append([r, loss, exact, _rel_dev(loss, exact)])
    return rows


def _batch_lp_training(target, gen_spec, disc_spec, cfg, M):
    """Relative deviation of the generator loss from the batch LP along a training run."""
    out = train_gan(target, gen_spec, disc_spec, cfg, track_batch_w1=True)
    recs = out.log.records[-M:] if M > 0 else out.log.records
    return [[r.iteration, r.loss_g, r.batch_w1, _rel_dev(r.loss_g, r.batch_w1)] for r in recs]


def _as_source(x):
    if isinstance(x, EmpiricalMeasure):
        return lambda n, gen: _batch(x, n, gen)
    if hasattr(x, "draw"):
        return x.draw
    raise ValidationError(f"cannot draw batches from {type(x).__name__}")


def protocol_variant(
    variant: str,
    a,
    b,
    disc_spec,
    cfg: TrainConfig,
    N: int = 1000,
    M: int = 100,
    gen_spec=None,
    eval_every: int = 0,
) -> ExperimentResult:
    """Run one of the three critic-quality protocols.

    ``minibatch`` and ``fullbatch`` take fixed measures ``a`` and ``b`` and run
    ``N`` ascent steps. ``batch-lp`` takes measures or distribution specs:
    with ``gen_spec`` it trains a generator towards ``a`` for ``cfg.n_g``
    iterations (``b`` unused) and compares the generator loss with the batch
    LP over the last ``M`` iterations; without it, the critic is warmed up
    for ``N`` steps on batches of ``a`` and ``b`` and then compared on ``M``
    fresh batch pairs, with ``cfg.n_d`` further ascent steps between rounds.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown protocol variant {variant!r}; choose from {VARIANTS}")
    if variant == "minibatch":
        res = oracle_static(a, b, disc_spec, cfg, N, eval_every)
        res.name = "protocol_minibatch"
        return res
    if variant == "fullbatch":
        return _fullbatch(a, b, disc_spec, cfg, N, eval_every)
    if M < 1:
        raise ValidationError("batch-lp needs M >= 1 evaluation rounds")
    with Stopwatch() as sw:
        if gen_spec is not None:
            if M > cfg.n_g:
                raise ValidationError(f"M={M} exceeds the {cfg.n_g} generator iterations")
            rows = _batch_lp_training(a, gen_spec, disc_spec, cfg, M)
            mode = "training"
        else:
            rows = _batch_lp_static(_as_source(a), _as_source(b), disc_spec, cfg, N, M)
            mode = "static"
    s = summarize("relative_deviation", [r[3] for r in rows])
    config = {"variant": "batch-lp", "mode": mode, "train": cfg.to_dict(), "N": N, "M": M, "disc_spec": disc_spec.to_dict(), "gen_spec": gen_spec.to_dict() if gen_spec is not None else None}
    res = ExperimentResult("protocol_batch_lp", config, cfg.seed, BATCH_LP_COLUMNS, rows, [s], wall_time=sw.elapsed)
    res.extras["mean_relative_deviation"] = s.mean
    return res
