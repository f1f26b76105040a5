"""Alternating critic/generator training and minibatch-Sinkhorn generator training.

The loop follows the standard WGAN-GP schedule: ``n_d`` critic ascent steps,
each on fresh real and generated batches, then one generator descent step on
new batches. Every generator iteration appends one :class:`TrainRecord`.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..entropic_ot import SinkhornParams, sinkhorn_divergence_with_states, _grad_from_plans
from ..errors import NumericError, ValidationError
from ..exact_ot import w1
from ..measures import EmpiricalMeasure, RngSeed
from ..nn import (
    AdamState,
    ConstraintMode,
    MlpSpec,
    NoConstraint,
    WeightClip,
    adam_step,
    apply_constraint,
    constraint_from_dict,
    save_checkpoint,
    vjp,
)
from .losses import (
    Net,
    ctransform_grads,
    interpolate_tau,
    lipschitz_bounds,
    nsgan_disc_grads,
    nsgan_gen_grads,
    value_fn,
    wgan_gen_grads,
    wgan_gp_disc_grads,
    ctransform_loss,
)

LOSS_KINDS = ("wgan-gp", "wgan-clip", "ctransform", "nsgan", "sinkhorn")
MAX_SKIP_FRACTION = 0.1


@dataclass(frozen=True)
class TrainConfig:
    n_g: int = 1000
    n_d: int = 5
    lam: float = 10.0
    batch_n: int = 64
    loss_kind: str = "wgan-gp"
    clip: float = 0.01
    sinkhorn_eps: float = 0.1
    constraint: ConstraintMode = field(default_factory=NoConstraint)
    lr_d: float = 1e-4
    lr_g: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    latent_dim: int = 2
    seed: int = 0
    ctransform_support: str = "real"
    resample_real_for_generator: bool = True

    def __post_init__(self):
        if self.n_g < 0 or self.n_d < 1 or self.batch_n < 1 or self.latent_dim < 1:
            raise ValidationError("n_g >= 0 and n_d, batch_n, latent_dim >= 1 required")
        if self.lam < 0:
            raise ValidationError("gradient-penalty weight must be nonnegative")
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"unknown loss kind {self.loss_kind!r}; choose from {LOSS_KINDS}")
        if self.ctransform_support not in ("real", "generated"):
            raise ValidationError("ctransform_support must be 'real' or 'generated'")
        if self.loss_kind == "sinkhorn" and not self.sinkhorn_eps > 0:
            raise ValidationError("sinkhorn_eps must be positive")

    def effective_constraint(self) -> ConstraintMode:
        if self.loss_kind == "wgan-clip" and isinstance(self.constraint, NoConstraint):
            return WeightClip(self.clip)
        return self.constraint

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constraint"] = self.constraint.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("constraint"), dict):
            d["constraint"] = constraint_from_dict(d["constraint"])
        return cls(**d)


@dataclass
class TrainRecord:
    iteration: int
    loss_g: float
    loss_d: float
    lip_lower: float
    batch_w1: float = float("nan")
    eval_w1: float = float("nan")
    eval_loss: float = float("nan")
    eval_lip: float = float("nan")
    eval_normalized: float = float("nan")
    skipped: int = 0
    wall_time: float = 0.0


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def evaluated(self) -> list[TrainRecord]:
        return [r for r in self.records if np.isfinite(r.eval_w1)]

    def to_csv(self, path, include_timing: bool = False) -> None:
        names = [f.name for f in fields(TrainRecord) if include_timing or f.name != "wall_time"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.records:
                w.writerow([_fmt(getattr(r, n)) for n in names])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class TrainOutcome:
    generator: Net
    discriminator: Net | None
    log: TrainLog


class TrainingDiverged(NumericError):
    """Raised on a non-finite loss; carries the last finite parameters."""

    def __init__(self, iteration: int, term: str, generator: Net, discriminator: Net | None):
        super().__init__(f"non-finite {term} at generator iteration {iteration}")
        self.iteration = iteration
        self.term = term
        self.generator = generator
        self.discriminator = discriminator

    def save(self, prefix) -> None:
        save_checkpoint(f"{prefix}.gen.bin", self.generator.spec, self.generator.params, {"iteration": self.iteration})
        if self.discriminator is not None:
            save_checkpoint(f"{prefix}.disc.bin", self.discriminator.spec, self.discriminator.params, {"iteration": self.iteration})


class _Streams:
    def __init__(self, seed: int):
        root = RngSeed(seed)
        self.gen_init = root.child(0).generator()
        self.disc_init = root.child(1).generator()
        self.real = root.child(2).generator()
        self.latent = root.child(3).generator()
        self.tau = root.child(4).generator()
        self.eval = root.child(5).generator()


@dataclass(frozen=True)
class GeneratorDistribution:
    """The law of ``G(z)`` with standard-normal ``z``, usable wherever a distribution spec is."""

    net: Net

    @property
    def dim(self) -> int:
        return self.net.spec.out_dim

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return generate(self.net, n, gen)[1]


def generate(G: Net, n: int, gen: np.random.Generator):
    z = gen.standard_normal((n, G.spec.in_dim))
    return z, G(z)


def _check(value, term, it, G, D):
    if not np.all(np.isfinite(value)):
        raise TrainingDiverged(it, term, G, D)


def _disc_step(cfg, D, a, b, tau_gen):
    kind = cfg.loss_kind
    if kind == "wgan-gp":
        tau = interpolate_tau(a, b, tau_gen)
        return wgan_gp_disc_grads(D, a, b, tau, cfg.lam)
    if kind == "wgan-clip":
        return wgan_gp_disc_grads(D, a, b, None, 0.0)
    if kind == "ctransform":
        loss, g, _ = ctransform_grads(D, a, b, cfg.ctransform_support)
        return loss, g
    if kind == "nsgan":
        return nsgan_disc_grads(D, a, b)
    raise ValidationError(f"loss kind {kind!r} has no critic")


def _gen_loss_and_point_grad(cfg, D, a, b):
    kind = cfg.loss_kind
    if kind in ("wgan-gp", "wgan-clip"):
        return wgan_gen_grads(D, a, b)
    if kind == "ctransform":
        loss, _, gb = ctransform_grads(D, a, b, cfg.ctransform_support)
        return loss, gb
    if kind == "nsgan":
        return nsgan_gen_grads(D, b)
    raise ValidationError(f"loss kind {kind!r} has no critic")


def reported_loss(cfg: TrainConfig, D: Net, a, b) -> float:
    """The generator loss ``L_G`` as it is compared against transport distances."""
    if cfg.loss_kind == "ctransform":
        return ctransform_loss(D, a, b, cfg.ctransform_support)
    return value_fn(D, a, b)


def evaluate(cfg, G, D, target, n, gen):
    """True W1 on fresh size-``n`` batches next to the critic's normalized loss."""
    a = target.draw(n, gen)
    _, b = generate(G, n, gen)
    true_w1 = w1(EmpiricalMeasure(a), EmpiricalMeasure(b))
    if D is None:
        return true_w1, float("nan"), float("nan"), float("nan")
    loss = reported_loss(cfg, D, a, b)
    lip = lipschitz_bounds(D, interpolate_tau(a, b, gen)).lower
    norm = loss / lip if lip >= 1e-9 else float("nan")
    return true_w1, loss, lip, norm


def train_gan(
    target,
    gen_spec: MlpSpec,
    disc_spec: MlpSpec,
    cfg: TrainConfig,
    *,
    eval_every: int = 0,
    eval_n: int = 1000,
    track_batch_w1: bool = False,
) -> TrainOutcome:
    """Alternating training for the critic-based losses.

    ``target`` is anything with ``draw(n, generator)`` (a distribution spec).
    With ``eval_every > 0`` the true W1 between ``eval_n``-sample batches and
    the normalized generator loss are recorded every ``eval_every``
    iterations and at the last one. ``track_batch_w1`` solves the exact
    transport problem between the two batches used for every generator step.
    """
    if cfg.loss_kind == "sinkhorn":
        raise ValidationError("use train_minibatch_sinkhorn for the sinkhorn loss")
    if gen_spec.in_dim != cfg.latent_dim:
        raise ValidationError(f"generator input width {gen_spec.in_dim} != latent_dim {cfg.latent_dim}")
    if gen_spec.out_dim != disc_spec.in_dim or disc_spec.out_dim != 1:
        raise ValidationError("generator output must match a scalar critic's input width")
    rs = _Streams(cfg.seed)
    G = Net.init(gen_spec, rs.gen_init)
    D = Net.init(disc_spec, rs.disc_init)
    constraint = cfg.effective_constraint()
    D = D.with_params(apply_constraint(constraint, D.spec, D.params))
    opt_d = AdamState(cfg.lr_d, cfg.beta1, cfg.beta2)
    opt_g = AdamState(cfg.lr_g, cfg.beta1, cfg.beta2)
    log = TrainLog()
    n = cfg.batch_n
    t0 = time.perf_counter()
    for it in range(cfg.n_g):
        loss_d = float("nan")
        for _ in range(cfg.n_d):
            a = target.draw(n, rs.real)
            _, b = generate(G, n, rs.latent)
            loss_d, g_alpha = _disc_step(cfg, D, a, b, rs.tau)
            _check(loss_d, "critic loss", it, G, D)
            new, opt_d = adam_step(opt_d, D.params, g_alpha, "ascend")
            D = D.with_params(apply_constraint(constraint, D.spec, new))

        if cfg.resample_real_for_generator or it == 0:
            a = target.draw(n, rs.real)
        z, b = generate(G, n, rs.latent)
        loss_g, gb = _gen_loss_and_point_grad(cfg, D, a, b)
        _check(loss_g, "generator loss", it, G, D)
        rec = TrainRecord(it, loss_g, loss_d, lipschitz_bounds(D, interpolate_tau(a, b, rs.tau)).lower)
        if track_batch_w1:
            rec.batch_w1 = w1(EmpiricalMeasure(a), EmpiricalMeasure(b))
        if eval_every > 0 and (it % eval_every == 0 or it == cfg.n_g - 1):
            rec.eval_w1, rec.eval_loss, rec.eval_lip, rec.eval_normalized = evaluate(cfg, G, D, target, eval_n, rs.eval)

        g_theta, _ = vjp(G.spec, G.params, z, gb)
        new, opt_g = adam_step(opt_g, G.params, g_theta, "descend")
        G = G.with_params(new)
        rec.wall_time = time.perf_counter() - t0
        log.records.append(rec)
    return TrainOutcome(G, D, log)


def train_minibatch_sinkhorn(
    target,
    gen_spec: MlpSpec,
    cfg: TrainConfig,
    *,
    eval_every: int = 0,
    eval_n: int = 1000,
    sinkhorn: SinkhornParams | None = None,
) -> TrainOutcome:
    """Generator descent on ``S_eps(real batch, generated batch)`` without a critic.

    The divergence gradient wrt the generated points comes from the converged
    Sinkhorn plans and is pulled back through the generator. Iterations whose
    Sinkhorn solves fail to converge are skipped and flagged; more than 10%
    skipped iterations aborts training.
    """
    if cfg.loss_kind != "sinkhorn":
        raise ValidationError("train_minibatch_sinkhorn needs loss_kind='sinkhorn'")
    if gen_spec.in_dim != cfg.latent_dim:
        raise ValidationError(f"generator input width {gen_spec.in_dim} != latent_dim {cfg.latent_dim}")
    params = sinkhorn or SinkhornParams(cfg.sinkhorn_eps)
    rs = _Streams(cfg.seed)
    G = Net.init(gen_spec, rs.gen_init)
    opt_g = AdamState(cfg.lr_g, cfg.beta1, cfg.beta2)
    log = TrainLog()
    skipped = 0
    t0 = time.perf_counter()
    for it in range(cfg.n_g):
        a = target.draw(cfg.batch_n, rs.real)
        z, b = generate(G, cfg.batch_n, rs.latent)
        div, (sab, saa, sbb) = sinkhorn_divergence_with_states(EmpiricalMeasure(a), EmpiricalMeasure(b), params)
        _check(div, "sinkhorn divergence", it, G, None)
        rec = TrainRecord(it, div, float("nan"), float("nan"))
        if eval_every > 0 and (it % eval_every == 0 or it == cfg.n_g - 1):
            rec.eval_w1, _, _, _ = evaluate(cfg, G, None, target, eval_n, rs.eval)
        if sab.converged and saa.converged and sbb.converged:
            gb = _grad_from_plans(a, b, sab.plan, sbb.plan)
            g_theta, _ = vjp(G.spec, G.params, z, gb)
            new, opt_g = adam_step(opt_g, G.params, g_theta, "descend")
            G = G.with_params(new)
        else:
            skipped += 1
            rec.skipped = 1
            if skipped > MAX_SKIP_FRACTION * max(cfg.n_g, 1):
                raise NumericError(f"Sinkhorn failed to converge on {skipped} of {it + 1} iterations")
        rec.wall_time = time.perf_counter() - t0
        log.records.append(rec)
    return TrainOutcome(G, None, log)


def save_train_log(outcome: TrainOutcome, cfg: TrainConfig, prefix, extra: dict | None = None) -> None:
    """CSV log, JSON manifest and network checkpoints under ``prefix``."""
    prefix = Path(prefix)
    outcome.log.to_csv(f"{prefix}.csv")
    save_checkpoint(f"{prefix}.gen.bin", outcome.generator.spec, outcome.generator.params)
    if outcome.discriminator is not None:
        save_checkpoint(f"{prefix}.disc.bin", outcome.discriminator.spec, outcome.discriminator.params)
    manifest = {"config": cfg.to_dict(), **(extra or {})}
    Path(f"{prefix}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
