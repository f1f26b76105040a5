"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are echoed as they happen (visible with ``-s``) and collected in an
"acceptance criteria" section at the end of the pytest report. Long Monte
Carlo and training runs carry the ``slow`` marker; they are not skipped by
default.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from w1lab.cli import run
from w1lab.clustering import k_gm_lloyd, nearest, projection_measure
from w1lab.entropic_ot import SinkhornParams, sinkhorn_divergence
from w1lab.exact_ot import assignment_w1, brute_force_w1, cost_matrix, exact_w1, exact_wp, w1
from w1lab.experiments import (
    bernoulli_bias,
    false_minima,
    protocol_variant,
    sample_complexity,
    sinkhorn_complexity,
    track_2d_training,
)
from w1lab.experiments.minima import MINIMAX_BOUND, bernoulli_monte_carlo, bernoulli_point
from w1lab.experiments.tracking import default_nets
from w1lab.gan_lab import Net, TrainConfig, interpolate_tau, lipschitz_bounds, normalized_w1_estimate, value_fn
from w1lab.measures import EmpiricalMeasure, StandardGaussian, eight_mode_mixture
from w1lab.nn import MlpSpec, forward, grad_input, grad_params, penalty_param_grad, penalty_value

TRACKING_CONFIG = TrainConfig(n_g=3000, loss_kind="wgan-gp", batch_n=256, seed=0)
PROTOCOL_SEEDS = (0, 1, 2, 3, 4)


def M(points, weights=None):
    return EmpiricalMeasure(np.asarray(points, dtype=float), weights)


def test_01_exact_solvers_agree(verdict):
    rng = np.random.default_rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(500):
        n, d = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        a, b = M(rng.normal(size=(n, d)) * 3), M(rng.normal(size=(n, d)) * 3)
        lp = exact_w1(a, b).value
        worst = max(worst, abs(lp - assignment_w1(a, b).value), abs(lp - brute_force_w1(a, b)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    verdict(1, "exact-OT oracle equivalence", ok, f"max disagreement {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_02_metric_properties(verdict):
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 4))
        a, b, c = (M(rng.normal(size=(int(rng.integers(1, 8)), d))) for _ in range(3))
        worst = max(
            worst,
            abs(w1(a, b) - w1(b, a)),
            w1(a, c) - w1(a, b) - w1(b, c),
            w1(a, a),
        )
    ok = worst <= 1e-9
    verdict(2, "metric properties", ok, f"worst violation {worst:.2e}")
    assert ok


def test_03_sinkhorn_fidelity(verdict):
    rng = np.random.default_rng(103)
    a, b = M(rng.normal(size=(32, 2))), M(rng.normal(size=(32, 2)) + [1.0, 0.5])
    eps = 0.001 * cost_matrix(a, b).mean()
    exact = exact_w1(a, b).value
    rel = abs(sinkhorn_divergence(a, b, SinkhornParams(eps)) - exact) / exact
    worst_self = 0.0
    for eps_self in np.geomspace(1e-2, 1e3, 100):
        n, d = int(rng.integers(2, 30)), int(rng.integers(1, 5))
        p = M(rng.normal(size=(n, d)), rng.dirichlet(np.ones(n)))
        worst_self = max(worst_self, abs(sinkhorn_divergence(p, p, SinkhornParams(float(eps_self)))))
    ok = rel < 0.02 and worst_self <= 1e-8
    verdict(3, "Sinkhorn fidelity", ok, f"|S-W1|/W1 = {rel:.4f}, max |S(p,p)| = {worst_self:.1e}")
    assert ok


def _rel(g, ref):
    return float(np.max(np.abs(g - ref)) / max(np.max(np.abs(ref)), 1e-12))


def _fd(f, p, h=1e-6):
    g = np.empty_like(p)
    for i in range(p.size):
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def test_04_autodiff_matches_finite_differences(verdict):
    rng = np.random.default_rng(104)
    worst = {"grad_params": 0.0, "grad_input": 0.0, "penalty_param_grad": 0.0}
    for k in range(50):
        d = int(rng.integers(1, 5))
        widths = (d, *rng.integers(2, 17, size=int(rng.integers(1, 3))), 1)
        spec = MlpSpec(tuple(int(w) for w in widths), ("tanh", "softplus")[k % 2])
        assert spec.n_params <= 1000
        p = rng.normal(scale=0.8, size=spec.n_params)
        x = rng.normal(size=(3, d))
        up = rng.normal(size=(3, 1))
        g = grad_params(spec, p, x, up)
        worst["grad_params"] = max(worst["grad_params"], _rel(g, _fd(lambda q: float(np.sum(up * forward(spec, q, x))), p)))
        for xi in x:
            gi = grad_input(spec, p, xi)
            worst["grad_input"] = max(worst["grad_input"], _rel(gi, _fd(lambda y: float(forward(spec, p, y)[0]), xi)))
        pen = penalty_param_grad(spec, p, x)
        worst["penalty_param_grad"] = max(worst["penalty_param_grad"], _rel(pen.grad, _fd(lambda q: penalty_value(spec, q, x), p)))
    ok = max(worst.values()) < 1e-4
    verdict(4, "autodiff correctness", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_05_scaling_invariance(verdict):
    rng = np.random.default_rng(105)
    worst_inv, worst_scale = 0.0, 0.0
    for seed in range(10):
        D = Net.init(MlpSpec((3, 12, 12, 1), ("tanh", "softplus", "leaky_relu")[seed % 3]), seed)
        a, b = rng.normal(size=(20, 3)), rng.normal(size=(20, 3)) + 0.7
        tau = interpolate_tau(a, b, seed)
        base = normalized_w1_estimate(D, a, b, tau)
        for K in (0.1, 3.0, 100.0):
            est = normalized_w1_estimate(D.scale_last_layer(K), a, b, tau)
            worst_inv = max(
                worst_inv,
                abs(est.normalized_lower - base.normalized_lower),
                abs(est.normalized_upper - base.normalized_upper),
            )
            pairs = [(est.raw, base.raw), (est.lipschitz.lower, base.lipschitz.lower), (est.lipschitz.upper, base.lipschitz.upper)]
            worst_scale = max(worst_scale, *(abs(s - K * r) / abs(K * r) for s, r in pairs))
    ok = worst_inv <= 1e-9 and worst_scale <= 1e-12
    verdict(5, "last-layer scaling invariance", ok, f"normalized drift {worst_inv:.1e}, scaling error {worst_scale:.1e}")
    assert ok


def test_06_duality_bound(verdict):
    rng = np.random.default_rng(106)
    worst = -np.inf
    for k in range(200):
        d = int(rng.integers(1, 4))
        spec = MlpSpec((d, int(rng.integers(2, 12)), int(rng.integers(2, 12)), 1), ("tanh", "softplus", "leaky_relu")[k % 3])
        D = Net(spec, rng.normal(scale=float(rng.uniform(0.2, 3)), size=spec.n_params))
        a = M(rng.normal(size=(int(rng.integers(1, 12)), d)))
        b = M(rng.normal(size=(int(rng.integers(1, 12)), d)) * 2 + 1)
        bound = value_fn(D, a, b) / lipschitz_bounds(D, a.points).upper
        worst = max(worst, bound - exact_w1(a, b).value)
    ok = worst <= 1e-6
    verdict(6, "duality lower bound", ok, f"max(value/upper - W1) = {worst:.3f}")
    assert ok


def test_07_projection_lemmas_and_lloyd(verdict):
    rng = np.random.default_rng(107)
    eq_err, ineq_viol = 0.0, -np.inf
    for _ in range(200):
        n, d, k = int(rng.integers(2, 12)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        rho = M(rng.normal(size=(n, d)), rng.dirichlet(np.ones(n)))
        S = rng.normal(size=(k, d))
        proj = projection_measure(S, rho)
        _, dist = nearest(rho.points, S)
        for p in (1.0, 2.0):
            eq_err = max(eq_err, abs(float(rho.weights @ dist**p) - exact_wp(rho, proj, p).value))
        mu = M(S, rng.dirichlet(np.ones(k)))
        for p in (1.0, 2.0):
            ineq_viol = max(ineq_viol, exact_wp(rho, proj, p).value - exact_wp(rho, mu, p).value)
    monotone = True
    for seed in range(20):
        data = M(rng.normal(size=(int(rng.integers(10, 80)), 2)))
        cs = k_gm_lloyd(data, int(rng.integers(1, 8)), n_init=3, rng=seed)
        monotone &= bool(np.all(np.diff(cs.history) <= 1e-12))
    ok = eq_err <= 1e-9 and ineq_viol <= 1e-9 and monotone
    verdict(7, "projection lemmas and Lloyd monotonicity", ok, f"equality error {eq_err:.1e}, worst inequality excess {ineq_viol:.1e}, monotone {monotone}")
    assert ok


def test_08_bernoulli_bias(verdict):
    t0 = time.perf_counter()
    p = bernoulli_point(1, 0.5, 0.4)
    two = bernoulli_bias(2, 0.6)
    rng = np.random.default_rng(108)
    mc_ok = True
    for n, ts, t in [(1, 0.5, 0.4), (2, 0.6, 0.3), (5, 0.45, 0.72), (9, 0.2, 0.5)]:
        exact = bernoulli_point(n, ts, t)
        mc = bernoulli_monte_carlo(n, ts, t, 20000, rng)
        mc_ok &= abs(mc["expected_loss"] - exact["expected_loss"]) <= 3 * mc["loss_se"]
        mc_ok &= abs(mc["expected_grad"] - exact["grad_lo"]) <= 3 * mc["grad_se"]
    elapsed = time.perf_counter() - t0
    ok = (
        p["bias"] == 1.0
        and p["bias"] > MINIMAX_BOUND
        and two.extras["theta_bar"] == 0.5
        and mc_ok
        and elapsed < 1.0
    )
    verdict(8, "Bernoulli gradient bias", ok, f"bias {p['bias']}, theta_bar {two.extras['theta_bar']}, MC agreement {mc_ok}, {elapsed:.2f} s")
    assert ok


@pytest.mark.slow
def test_09_sample_complexity(verdict):
    sizes = [10, 25, 50, 75, 1000]
    t0 = time.perf_counter()
    res, fit = sample_complexity(20, sizes, reps=100, seed=0)
    elapsed = time.perf_counter() - t0
    means = [res.summary(f"n={n}").mean for n in sizes]
    inversions = sum(x <= y for x, y in zip(means, means[1:]))
    flat = abs(means[-1] - means[3]) / means[3]
    need = fit.required_n(0.1)
    ok = inversions <= 1 and flat < 0.10 and need > 1e15 and elapsed < 1800
    verdict(9, "sample complexity at d=20", ok, f"means {[round(m, 3) for m in means]}, n=1000 vs n=75 {flat:.3f}, required n {need:.2e}, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_10_false_minima(verdict):
    high = false_minima(StandardGaussian(20), n=64, reps=100, seed=0)
    low = false_minima(StandardGaussian(2), n=64, reps=100, seed=0, include_kgm=False)
    real, mean, kgm = (high.summary(g) for g in ("real", "mean", "kgm"))
    ok_high = mean.disjoint_below(real) and kgm.mean < real.mean
    ok_low = low.summary("real").disjoint_below(low.summary("mean"))
    ok = ok_high and ok_low
    detail = (
        f"d=20 real {real.mean:.3f}±{real.ci95:.3f}, mean {mean.mean:.3f}±{mean.ci95:.3f}, kgm {kgm.mean:.3f}; "
        f"d=2 real {low.summary('real').mean:.3f}, mean {low.summary('mean').mean:.3f}"
    )
    verdict(10, "false minima", ok, detail)
    assert ok


@pytest.mark.slow
def test_11_sinkhorn_complexity(verdict):
    res = sinkhorn_complexity(20, 100.0, [500], reps=100, seed=0)
    s = res.summary("sinkhorn eps=100 n=500").mean
    w = res.summary("w1 eps=100 n=500").mean
    ok = s < 0.1 * w
    verdict(11, "Sinkhorn sample complexity", ok, f"mean S {s:.4f} vs mean W1 {w:.4f} (ratio {s / w:.4f})")
    assert ok


@pytest.mark.slow
def test_12_protocol_ordering(verdict):
    gs, ds = default_nets(2, 2)
    devs = {"ctransform": [], "wgan-gp": []}
    for seed in PROTOCOL_SEEDS:
        for kind in devs:
            cfg = TrainConfig(n_g=250, loss_kind=kind, seed=seed)
            res = protocol_variant("batch-lp", eight_mode_mixture(), None, ds, cfg, M=100, gen_spec=gs)
            devs[kind].append(res.extras["mean_relative_deviation"])
    c, g = np.mean(devs["ctransform"]), np.mean(devs["wgan-gp"])
    ok = c < 0.2 and c < g
    detail = f"c-transform {c:.3f} {np.round(devs['ctransform'], 3).tolist()}, wgan-gp {g:.3f} {np.round(devs['wgan-gp'], 3).tolist()}"
    verdict(12, "protocol ordering", ok, detail)
    assert ok


@pytest.mark.slow
def test_13_tracking(verdict):
    t0 = time.perf_counter()
    gs, ds = default_nets(2, TRACKING_CONFIG.latent_dim, activation="leaky_relu")
    res = track_2d_training(TRACKING_CONFIG, gen_spec=gs, disc_spec=ds, eval_every=250)
    elapsed = time.perf_counter() - t0
    e = res.extras
    ok = e["final_ratio"] > 2 and e["modes_covered"] == e["modes_total"] and elapsed < 1200
    detail = f"final ratio {e['final_ratio']:.2f}, W1 {e['final_eval_w1']:.3f}, modes {e['modes_covered']}/{e['modes_total']}, {elapsed:.0f} s"
    verdict(13, "WGAN-GP loss tracking", ok, detail)
    assert ok


REPLAY_COMMANDS = [
    ["exp-sample-complexity", "--d", "5", "--sizes", "5,20", "--reps", "5", "--seed", "3"],
    ["exp-sinkhorn-complexity", "--d", "5", "--sizes", "20", "--eps", "1,10", "--reps", "3", "--seed", "3"],
    ["exp-false-minima", "--d", "3", "--n", "8", "--reps", "4", "--ref-n", "100", "--n-init", "2", "--seed", "3"],
    ["exp-bernoulli", "--n", "4", "--theta-star", "0.3"],
    ["exp-oracle-static", "--d", "2", "--points", "40", "--steps", "20", "--eval-every", "10", "--batch-n", "16", "--hidden", "8", "--seed", "3"],
    ["exp-protocol", "--variant", "batch-lp", "--with-generator", "true", "--n-g", "6", "--m", "3", "--n-d", "1", "--batch-n", "16", "--hidden", "8", "--loss", "ctransform", "--seed", "3"],
    ["exp-track-2d", "--n-g", "6", "--n-d", "1", "--batch-n", "16", "--hidden", "8", "--eval-every", "3", "--eval-n", "50", "--seed", "3"],
    ["train", "--n-g", "5", "--n-d", "2", "--batch-n", "16", "--hidden", "8", "--loss", "nsgan", "--seed", "3"],
]


def test_14_replay_is_bit_identical(verdict, tmp_path):
    mismatched = []
    for i, argv in enumerate(REPLAY_COMMANDS):
        first, second = tmp_path / f"run{i}", tmp_path / f"replay{i}"
        assert run([*argv, "--out", str(first)]) == 0, argv
        manifests = [m for m in first.glob("*.json") if not m.name.endswith(".bin.json")]
        assert len(manifests) == 1, manifests
        assert run(["--replay", str(manifests[0]), "--replay-out", str(second)]) == 0
        for csv_path in sorted(first.glob("*.csv")):
            if "timing" in csv_path.name:
                continue
            if csv_path.read_bytes() != (second / csv_path.name).read_bytes():
                mismatched.append(f"{argv[0]}:{csv_path.name}")
    ok = not mismatched
    verdict(14, "manifest replay", ok, f"{len(REPLAY_COMMANDS)} experiments replayed" + (f"; mismatched {mismatched}" if mismatched else ""))
    assert ok
