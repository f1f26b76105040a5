"""``w1lab`` command line: one subcommand per solver and experiment.

Every run writes its outputs and a JSON manifest into ``--out``. The
manifest records the subcommand and every resolved option, so
``w1lab --replay <manifest>`` reruns it and reproduces the raw CSV exactly.
Options can also come from ``--config FILE`` (flat ``key=value`` lines,
keys spelled like the long flags); explicit flags win over the file, the
file wins over built-in defaults.

Exit codes: 0 success, 1 invalid input, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import k_gm_lloyd, projection_measure
from .entropic_ot import SinkhornParams, sinkhorn_cost, sinkhorn_divergence_with_states
from .errors import NumericError, ValidationError
from .exact_ot import assignment_w1, brute_force_w1, exact_wp, w1
from .experiments import (
    bernoulli_bias,
    false_minima,
    oracle_static,
    protocol_variant,
    sample_complexity,
    sinkhorn_complexity,
    track_2d_training,
)
from .experiments.results import plot_series, write_csv
from .experiments.tracking import default_nets
from .gan_lab.training import TrainConfig, TrainingDiverged, train_gan, train_minibatch_sinkhorn
from .measures import EmpiricalMeasure, FromFile, RngSeed, StandardGaussian, eight_mode_mixture, load_measure, save_measure
from .nn import NoConstraint, RowNormalize, SpectralNormalize, WeightClip, save_checkpoint

DEFAULT_OUT = "w1lab-out"


# -- value parsers ----------------------------------------------------------------


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in str(s).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from exc


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in str(s).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def parse_constraint(s: str):
    """``none``, ``clip:C``, ``row`` or ``spectral``."""
    s = s.strip().lower()
    if s == "none":
        return NoConstraint()
    if s == "row":
        return RowNormalize()
    if s == "spectral":
        return SpectralNormalize()
    if s.startswith("clip:"):
        return WeightClip(float(s[5:]))
    raise ValidationError(f"unknown constraint {s!r}; use none, clip:C, row or spectral")


def parse_target(s: str):
    """``eight-mode``, ``gaussian:D`` or a path to a point-cloud file."""
    if s == "eight-mode":
        return eight_mode_mixture()
    if s.startswith("gaussian:"):
        return StandardGaussian(int(s.split(":", 1)[1]))
    if not Path(s).exists():
        raise ValidationError(f"target {s!r} is neither a known distribution nor an existing file")
    return FromFile(s)


# -- parser ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed: bool = True):
    p.add_argument("--out", default=DEFAULT_OUT, help="output directory (default: %(default)s)")
    p.add_argument("--config", help="key=value file overlaying the defaults")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed (default: %(default)s)")


def _pair_inputs(p):
    p.add_argument("--a", required=True, help="first point cloud (CSV or whitespace separated)")
    p.add_argument("--b", required=True, help="second point cloud")
    p.add_argument("--skip-header", type=_bool, default=False, metavar="BOOL")
    p.add_argument("--weight-column", type=_bool, default=False, metavar="BOOL", help="last column holds atom weights")


def _train_options(p, loss_default="wgan-gp", n_g_default=1000, batch_default=64, activation_default="tanh"):
    p.add_argument("--loss", default=loss_default, choices=["wgan-gp", "wgan-clip", "ctransform", "nsgan", "sinkhorn"])
    p.add_argument("--n-g", type=int, default=n_g_default, help="generator iterations")
    p.add_argument("--n-d", type=int, default=5, help="critic steps per generator step")
    p.add_argument("--lam", type=float, default=10.0, help="gradient-penalty weight")
    p.add_argument("--batch-n", type=int, default=batch_default)
    p.add_argument("--clip", type=float, default=0.01, help="weight clip for wgan-clip")
    p.add_argument("--eps", type=float, default=0.1, help="entropic regularization for the sinkhorn loss")
    p.add_argument("--constraint", default="none", help="none | clip:C | row | spectral")
    p.add_argument("--lr-d", type=float, default=1e-4)
    p.add_argument("--lr-g", type=float, default=1e-4)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.9)
    p.add_argument("--latent-dim", type=int, default=2)
    p.add_argument("--support", default="real", choices=["real", "generated"], help="c-transform minimization support")
    p.add_argument("--resample-real", type=_bool, default=True, metavar="BOOL", help="fresh real batch for the generator step")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--activation", default=activation_default, choices=["tanh", "softplus", "leaky_relu"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="w1lab", description="Exact and entropic W1, critic training and W1-estimation experiments.")
    parser.add_argument("--version", action="version", version=f"w1lab {__version__}")
    parser.add_argument("--replay", metavar="MANIFEST", help="rerun the command recorded in a manifest")
    parser.add_argument("--replay-out", metavar="DIR", help="output directory for --replay (default: the recorded one)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("w1", help="exact W1 (or W_p^p) between two point clouds; CSV: n_a,n_b,p,method,value")
    _pair_inputs(p)
    p.add_argument("--p", type=float, default=1.0, help="ground cost exponent; p != 1 reports W_p^p")
    p.add_argument("--method", default="auto", choices=["auto", "lp", "assignment", "brute"])
    _common(p, seed=False)

    p = sub.add_parser("sinkhorn", help="entropic cost or debiased divergence; CSV: quantity,value,iterations,converged,marginal_error")
    _pair_inputs(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--debiased", type=_bool, default=True, metavar="BOOL", help="report S_eps instead of W_eps")
    _common(p, seed=False)

    p = sub.add_parser("kmedians", help="geometric k-medians; CSVs: centroids, assignment, projection (coords + weight)")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-init", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--skip-header", type=_bool, default=False, metavar="BOOL")
    _common(p)

    p = sub.add_parser("train", help="train a generator; CSV: one row per generator iteration")
    p.add_argument("--target", default="eight-mode", help="eight-mode | gaussian:D | path")
    _train_options(p)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--eval-n", type=int, default=1000)
    p.add_argument("--track-batch-w1", type=_bool, default=False, metavar="BOOL")
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-oracle-static", help="critic on two fixed measures vs the exact W1; CSV: iteration,raw,lip_lower,...")
    _static_inputs(p)
    _train_options(p)
    p.add_argument("--steps", type=int, default=2000, help="critic ascent steps N")
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-protocol", help="minibatch | fullbatch | batch-lp critic-quality protocol")
    p.add_argument("--variant", required=True, choices=["minibatch", "fullbatch", "batch-lp"])
    _static_inputs(p)
    _train_options(p, n_g_default=250)
    p.add_argument("--steps", type=int, default=2000, help="critic ascent steps N")
    p.add_argument("--m", type=int, default=100, help="evaluation rounds M")
    p.add_argument("--with-generator", type=_bool, default=False, metavar="BOOL", help="batch-lp: train a generator on the 8-mode mixture")
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-sample-complexity", help="E[W1(p_n, p~_n)] per size with a log-log fit; CSV: n,rep,w1")
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--sizes", type=_int_list, default=[10, 25, 50, 75, 1000])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-sinkhorn-complexity", help="paired S_eps and W1 per size; CSV: eps,n,rep,sinkhorn,w1")
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--eps", type=_float_list, default=[100.0])
    p.add_argument("--sizes", type=_int_list, default=[500])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-false-minima", help="W1 from a real batch to real/mean/k-medians batches; CSV: rep,w1_real,w1_mean,w1_kgm")
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--data", help="point-cloud file used as the data distribution instead of a gaussian")
    p.add_argument("--skip-header", type=_bool, default=False, metavar="BOOL")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--k", type=int, default=0, help="k-medians centroids (0: same as --n)")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--ref-n", type=int, default=2000)
    p.add_argument("--kgm", type=_bool, default=True, metavar="BOOL")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    _common(p)

    p = sub.add_parser("exp-bernoulli", help="exact Bernoulli batch-gradient bias; CSV: one row per theta")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta-star", type=float, required=True)
    p.add_argument("--grid", type=_float_list, default=None, help="comma-separated thetas (default 0.01..0.99)")
    p.add_argument("--plot", action="store_true")
    _common(p, seed=False)

    p = sub.add_parser("exp-track-2d", help="true W1 vs normalized loss on the 8-mode mixture; CSV: one row per generator iteration")
    # Batch 64 with tanh nets dropped modes in every trial run; these are the usual 2-D WGAN-GP settings.
    _train_options(p, n_g_default=3000, batch_default=256, activation_default="leaky_relu")
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--eval-n", type=int, default=1000)
    p.add_argument("--plot", action="store_true")
    _common(p)
    return parser


def _static_inputs(p):
    p.add_argument("--a", help="first measure file (default: synthetic gaussian cloud)")
    p.add_argument("--b", help="second measure file (default: shifted synthetic cloud)")
    p.add_argument("--skip-header", type=_bool, default=False, metavar="BOOL")
    p.add_argument("--d", type=int, default=10, help="dimension of the synthetic clouds")
    p.add_argument("--points", type=int, default=500, help="points per synthetic cloud")
    p.add_argument("--shift", type=float, default=1.0, help="mean offset of the second synthetic cloud")


# -- config overlay -----------------------------------------------------------------


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment; keys may use - or _."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: line {lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(sp: argparse.ArgumentParser, path) -> None:
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in read_config(path).items():
        if key not in actions:
            raise ValidationError(f"{path}: unknown key {key!r}")
        a = actions[key]
        if isinstance(a, argparse._StoreTrueAction):
            defaults[key] = _bool(raw)
            continue
        try:
            val = a.type(raw) if a.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ValidationError(f"{path}: {key}: {exc}") from exc
        if a.choices is not None and val not in a.choices:
            raise ValidationError(f"{path}: {key}: {val!r} not in {sorted(a.choices)}")
        defaults[key] = val
    sp.set_defaults(**defaults)
    for a in sp._actions:
        if a.dest in defaults:
            a.required = False


# -- helpers --------------------------------------------------------------------------


def _write_manifest(out: Path, name: str, command: dict, extra: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    manifest = {"name": name, "version": __version__, "command": command, **extra}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _load_pair(args):
    a = load_measure(args.a, skip_header=args.skip_header, weight_column=args.weight_column)
    b = load_measure(args.b, skip_header=args.skip_header, weight_column=args.weight_column)
    return a, b


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        n_g=args.n_g,
        n_d=args.n_d,
        lam=args.lam,
        batch_n=args.batch_n,
        loss_kind=args.loss,
        clip=args.clip,
        sinkhorn_eps=args.eps,
        constraint=parse_constraint(args.constraint),
        lr_d=args.lr_d,
        lr_g=args.lr_g,
        beta1=args.beta1,
        beta2=args.beta2,
        latent_dim=args.latent_dim,
        seed=args.seed,
        ctransform_support=args.support,
        resample_real_for_generator=args.resample_real,
    )


def _static_measures(args):
    if args.a or args.b:
        if not (args.a and args.b):
            raise ValidationError("give both --a and --b, or neither for synthetic clouds")
        return load_measure(args.a, skip_header=args.skip_header), load_measure(args.b, skip_header=args.skip_header)
    gen = RngSeed(args.seed, 30).generator()
    a = gen.standard_normal((args.points, args.d))
    b = gen.standard_normal((args.points, args.d))
    b[:, 0] += args.shift
    return EmpiricalMeasure(a), EmpiricalMeasure(b)


def _finish(res, out: Path, command: dict, plot=None) -> str:
    res.write(out, command)
    if plot is not None:
        plot(out / f"{res.name}.svg")
    return str(out / f"{res.name}.csv")


# -- subcommands ----------------------------------------------------------------------


def cmd_w1(args, out, command):
    a, b = _load_pair(args)
    if args.method == "brute":
        value, method = brute_force_w1(a, b), "brute"
    elif args.method == "assignment":
        r = assignment_w1(a, b)
        value, method = r.value, r.solver
    elif args.method == "lp" or args.p != 1.0:
        r = exact_wp(a, b, args.p)
        value, method = r.value, r.solver
    else:
        value, method = w1(a, b), "auto"
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "w1.csv", ["n_a", "n_b", "p", "method", "value"], [[a.n, b.n, args.p, method, value]])
    _write_manifest(out, "w1", command, {"value": value})
    print(value)


def cmd_sinkhorn(args, out, command):
    a, b = _load_pair(args)
    params = SinkhornParams(args.eps, max_iter=args.max_iter, tol=args.tol)
    if args.debiased:
        value, states = sinkhorn_divergence_with_states(a, b, params)
        quantity = "divergence"
    else:
        value, st = sinkhorn_cost(a, b, params)
        states, quantity = (st,), "entropic_cost"
    iters = max(s.iterations_used for s in states)
    converged = all(s.converged for s in states)
    err = max(s.marginal_error for s in states)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sinkhorn.csv", ["quantity", "value", "iterations", "converged", "marginal_error"], [[quantity, value, iters, converged, err]])
    _write_manifest(out, "sinkhorn", command, {"value": value, "converged": converged})
    if not converged:
        print(f"warning: Sinkhorn did not reach tol={args.tol:g} (marginal error {err:.3e})", file=sys.stderr)
    print(value)


def cmd_kmedians(args, out, command):
    data = load_measure(args.data, skip_header=args.skip_header)
    cs = k_gm_lloyd(data, args.k, n_init=args.n_init, rng=RngSeed(args.seed), max_iter=args.max_iter)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "centroids.csv", [f"x{i}" for i in range(data.dim)], cs.centroids.tolist())
    write_csv(out / "assignment.csv", ["point", "cluster"], [[i, int(c)] for i, c in enumerate(cs.assignment)])
    save_measure(projection_measure(cs.centroids, data), out / "projection.csv", weight_column=True)
    _write_manifest(out, "kmedians", command, {"objective": cs.objective})
    print(f"objective {cs.objective!r}")


def cmd_train(args, out, command):
    cfg = _train_config(args)
    target = parse_target(args.target)
    dim = target.dim if not isinstance(target, FromFile) else target.measure().dim
    gs, ds = default_nets(dim, args.latent_dim, args.hidden, args.depth, args.activation)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.loss_kind == "sinkhorn":
            res = train_minibatch_sinkhorn(target, gs, cfg, eval_every=args.eval_every, eval_n=args.eval_n)
        else:
            res = train_gan(target, gs, ds, cfg, eval_every=args.eval_every, eval_n=args.eval_n, track_batch_w1=args.track_batch_w1)
    except TrainingDiverged as exc:
        exc.save(out / "diverged")
        raise
    res.log.to_csv(out / "train.csv")
    res.log.to_csv(out / "train_timing.csv", include_timing=True)
    save_checkpoint(out / "generator.bin", res.generator.spec, res.generator.params)
    if res.discriminator is not None:
        save_checkpoint(out / "discriminator.bin", res.discriminator.spec, res.discriminator.params)
    _write_manifest(out, "train", command, {"config": cfg.to_dict()})
    if args.plot:
        it = res.log.column("iteration")
        plot_series(out / "train.svg", {"generator loss": (it, res.log.column("loss_g"))}, "generator iteration", "loss")
    last = res.log.records[-1] if res.log.records else None
    print(f"trained {cfg.n_g} iterations; final generator loss {last.loss_g if last else float('nan')!r}")


def _oracle_plot(res):
    def plot(path):
        it = res.column("iteration")
        plot_series(path, {"normalized (sampled L)": (it, res.column("normalized_lower")), "exact W1": (it, res.column("exact_w1"))}, "critic step", "estimate")

    return plot


def cmd_oracle_static(args, out, command):
    a, b = _static_measures(args)
    cfg = _train_config(args)
    _, ds = default_nets(a.dim, args.latent_dim, args.hidden, args.depth, args.activation)
    res = oracle_static(a, b, ds, cfg, args.steps, args.eval_every)
    _finish(res, out, command, _oracle_plot(res) if args.plot else None)
    f = res.extras["final"]
    print(f"exact W1 {f['exact_w1']!r}; normalized estimate {f['normalized_lower']!r}; ratio {f['ratio_exact_to_normalized']!r}")


def cmd_protocol(args, out, command):
    cfg = _train_config(args)
    if args.variant == "batch-lp" and args.with_generator:
        target = eight_mode_mixture()
        gs, ds = default_nets(2, args.latent_dim, args.hidden, args.depth, args.activation)
        res = protocol_variant("batch-lp", target, None, ds, cfg, N=args.steps, M=args.m, gen_spec=gs)
    else:
        a, b = _static_measures(args)
        _, ds = default_nets(a.dim, args.latent_dim, args.hidden, args.depth, args.activation)
        res = protocol_variant(args.variant, a, b, ds, cfg, N=args.steps, M=args.m, eval_every=args.eval_every)
    plot = None
    if args.plot:
        if args.variant == "batch-lp":
            plot = lambda p: plot_series(p, {"critic loss": (res.column("round"), res.column("critic_loss")), "batch W1": (res.column("round"), res.column("batch_w1"))}, "round", "value")
        else:
            plot = _oracle_plot(res)
    _finish(res, out, command, plot)
    if args.variant == "batch-lp":
        print(f"mean relative deviation {res.extras['mean_relative_deviation']!r}")
    else:
        f = res.extras["final"]
        print(f"exact W1 {f['exact_w1']!r}; normalized estimate {f['normalized_lower']!r}")


def cmd_sample_complexity(args, out, command):
    res, fit = sample_complexity(args.d, args.sizes, args.reps, seed=args.seed, jobs=args.jobs)
    plot = None
    if args.plot:
        ns = [int(s.group[2:]) for s in res.summaries]
        series = {"mean W1": (ns, [s.mean for s in res.summaries])}
        if fit is not None:
            series["log-log fit"] = (ns, fit.predict(np.array(ns, dtype=float)))
        plot = lambda p: plot_series(p, series, "batch size n", "E W1", loglog=True)
    _finish(res, out, command, plot)
    tail = ""
    if fit is not None:
        tail = "; " + ", ".join(f"n for error {t:g}: {n:.3e}" for t, n in fit.extrapolations)
    print(f"slope {fit.slope if fit else float('nan')!r}{tail}")


def cmd_sinkhorn_complexity(args, out, command):
    res = sinkhorn_complexity(args.d, args.eps, args.sizes, args.reps, seed=args.seed, jobs=args.jobs, max_iter=args.max_iter)
    plot = None
    if args.plot:
        series = {}
        for e in args.eps:
            series[f"S eps={e:g}"] = (args.sizes, [res.summary(f"sinkhorn eps={float(e):g} n={n}").mean for n in args.sizes])
        series["W1"] = (args.sizes, [res.summary(f"w1 eps={float(args.eps[0]):g} n={n}").mean for n in args.sizes])
        plot = lambda p: plot_series(p, series, "batch size n", "mean value", loglog=True)
    _finish(res, out, command, plot)
    print("; ".join(f"{k}: S/W1 = {v:.4g}" for k, v in res.extras["mean_ratio_sinkhorn_to_w1"].items()))


def cmd_false_minima(args, out, command):
    k = args.k or None
    if args.data:
        ref = load_measure(args.data, skip_header=args.skip_header)
        res = false_minima(None, args.n, args.reps, k, seed=args.seed, reference=ref, n_init=args.n_init, include_kgm=args.kgm, jobs=args.jobs)
    else:
        res = false_minima(StandardGaussian(args.d), args.n, args.reps, k, seed=args.seed, ref_n=args.ref_n, n_init=args.n_init, include_kgm=args.kgm, jobs=args.jobs)
    plot = None
    if args.plot:
        plot = lambda p: plot_series(p, {"mean W1": (list(range(len(res.summaries))), [s.mean for s in res.summaries])}, "candidate (" + ", ".join(s.group for s in res.summaries) + ")", "E W1")
    _finish(res, out, command, plot)
    print("; ".join(f"{s.group}: {s.mean:.4f} +- {s.ci95:.4f}" for s in res.summaries))


def cmd_bernoulli(args, out, command):
    res = bernoulli_bias(args.n, args.theta_star, args.grid)
    plot = None
    if args.plot:
        th = res.column("theta")
        plot = lambda p: plot_series(p, {"expected batch loss": (th, res.column("expected_loss")), "true loss": (th, res.column("true_loss"))}, "theta", "loss")
    _finish(res, out, command, plot)
    e = res.extras
    print(f"theta_bar {e['theta_bar']!r} (theta* {e['theta_star']!r}); max |bias| {e['max_abs_bias']!r}")


def cmd_track_2d(args, out, command):
    cfg = _train_config(args)
    gs, ds = default_nets(2, args.latent_dim, args.hidden, args.depth, args.activation)
    res = track_2d_training(cfg, gen_spec=gs, disc_spec=ds, eval_every=args.eval_every, eval_n=args.eval_n)
    plot = None
    if args.plot:
        ev = res.outcome.log.evaluated()
        it = [r.iteration for r in ev]
        plot = lambda p: plot_series(p, {"true W1": (it, [r.eval_w1 for r in ev]), "normalized loss": (it, [r.eval_normalized for r in ev])}, "generator iteration", "value")
    _finish(res, out, command, plot)
    e = res.extras
    print(f"final W1 {e['final_eval_w1']!r}; ratio {e['final_ratio']!r}; modes {e['modes_covered']}/{e['modes_total']}")


HANDLERS = {
    "w1": cmd_w1,
    "sinkhorn": cmd_sinkhorn,
    "kmedians": cmd_kmedians,
    "train": cmd_train,
    "exp-oracle-static": cmd_oracle_static,
    "exp-protocol": cmd_protocol,
    "exp-sample-complexity": cmd_sample_complexity,
    "exp-sinkhorn-complexity": cmd_sinkhorn_complexity,
    "exp-false-minima": cmd_false_minima,
    "exp-bernoulli": cmd_bernoulli,
    "exp-track-2d": cmd_track_2d,
}


def _resolve(argv):
    parser = build_parser()
    # Pre-scan without the subcommand's required options, which a config file may supply.
    scan = argparse.ArgumentParser(add_help=False)
    for flag in ("--replay", "--replay-out", "--config"):
        scan.add_argument(flag)
    pre, _ = scan.parse_known_args(argv)
    pre.command = next((tok for tok in argv if tok in HANDLERS), None)
    if pre.replay:
        try:
            manifest = json.loads(Path(pre.replay).read_text())
            command = manifest["command"]
            name, recorded = command["subcommand"], dict(command["args"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"cannot replay {pre.replay}: not a w1lab manifest ({exc})") from exc
        if name not in HANDLERS:
            raise ValidationError(f"{pre.replay}: unknown subcommand {name!r}")
        if pre.replay_out:
            recorded["out"] = pre.replay_out
        return name, argparse.Namespace(**recorded)
    if pre.command is None:
        if any(tok in ("-h", "--help", "--version") for tok in argv):
            parser.parse_args(argv)
        parser.print_help(sys.stderr)
        raise ValidationError("missing subcommand")
    if pre.config:
        _apply_config(_subparser(parser, pre.command), pre.config)
    args = parser.parse_args(argv)
    return args.command, args


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        name, args = _resolve(argv)
        record = {k: v for k, v in vars(args).items() if k not in ("command", "replay", "replay_out", "config")}
        command = {"subcommand": name, "args": record}
        HANDLERS[name](args, Path(args.out), command)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; usage errors are validation errors here.
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    except ValidationError as exc:
        print(f"w1lab: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, FloatingPointError) as exc:
        print(f"w1lab: numeric failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
