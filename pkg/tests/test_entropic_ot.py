import numpy as np
import pytest

from w1lab.entropic_ot import (
    SinkhornParams,
    ceps_transform,
    sinkhorn_cost,
    sinkhorn_divergence,
    sinkhorn_grad_points,
)
from w1lab.errors import NumericError, ValidationError
from w1lab.exact_ot import cost_matrix, exact_w1, pairwise_distances
from w1lab.measures import EmpiricalMeasure


def M(pts, w=None):
    return EmpiricalMeasure(np.asarray(pts, dtype=float), w)


@pytest.fixture
def clouds():
    rng = np.random.default_rng(0)
    return M(rng.normal(size=(32, 2))), M(rng.normal(size=(32, 2)) + [1.0, 0.0])


def test_params_validated():
    for bad in (dict(epsilon=0.0), dict(epsilon=1.0, tol=0.0), dict(epsilon=1.0, max_iter=0)):
        with pytest.raises(ValidationError):
            SinkhornParams(**bad)


def test_single_atom_cost_is_zero():
    d = M([[1.0, 2.0]])
    value, st = sinkhorn_cost(d, d, SinkhornParams(0.5))
    assert value == pytest.approx(0.0, abs=1e-12)
    assert st.converged


def test_small_epsilon_approaches_w1(clouds):
    a, b = clouds
    eps = 0.001 * cost_matrix(a, b).mean()
    exact = exact_w1(a, b).value
    s = sinkhorn_divergence(a, b, SinkhornParams(eps))
    assert abs(s - exact) / exact < 0.02


def test_huge_epsilon_gives_independent_coupling(clouds):
    a, b = clouds
    value, st = sinkhorn_cost(a, b, SinkhornParams(1e6))
    np.testing.assert_allclose(st.plan, np.outer(a.weights, b.weights), rtol=1e-4)
    transport = float((st.plan * cost_matrix(a, b)).sum())
    assert transport == pytest.approx(cost_matrix(a, b).mean(), rel=1e-4)


def test_converged_state_is_honest(clouds):
    a, b = clouds
    _, st = sinkhorn_cost(a, b, SinkhornParams(0.5, tol=1e-9))
    assert st.converged and st.marginal_error <= 1e-9
    np.testing.assert_allclose(st.plan.sum(1), a.weights, atol=1e-8)
    np.testing.assert_allclose(st.plan.sum(0), b.weights, atol=1e-12)
    _, st = sinkhorn_cost(a, b, SinkhornParams(0.001, max_iter=3))
    assert not st.converged and st.iterations_used == 3


def test_marginal_error_is_monotone(clouds):
    a, b = clouds
    _, st = sinkhorn_cost(a, b, SinkhornParams(0.05, tol=1e-10))
    h = np.array(st.error_history)
    assert np.all(np.diff(h) <= 1e-12)


def test_plain_domain_matches_log_domain(clouds):
    a, b = clouds
    v_log, _ = sinkhorn_cost(a, b, SinkhornParams(2.0, tol=1e-12))
    v_plain, _ = sinkhorn_cost(a, b, SinkhornParams(2.0, tol=1e-12, log_domain=False))
    assert v_plain == pytest.approx(v_log, rel=1e-9)


@pytest.mark.parametrize("eps", [1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3])
def test_self_divergence_is_zero(eps):
    rng = np.random.default_rng(int(eps * 100) % 97)
    a = M(rng.normal(size=(20, 3)), rng.dirichlet(np.ones(20)))
    assert abs(sinkhorn_divergence(a, a, SinkhornParams(eps))) < 1e-8


def test_divergence_symmetric(clouds):
    a, b = clouds
    p = SinkhornParams(0.3, tol=1e-10)
    assert sinkhorn_divergence(a, b, p) == pytest.approx(sinkhorn_divergence(b, a, p), abs=1e-8)


def test_ceps_single_atom():
    sup = M([[3.0, 4.0]])
    for eps in (0.01, 1.0, 100.0):
        assert ceps_transform([0.7], sup, [0.0, 0.0], eps) == pytest.approx(5.0 - 0.7, abs=1e-12)


def test_ceps_small_epsilon_near_hard_min():
    rng = np.random.default_rng(1)
    sup = M(rng.normal(size=(6, 2)))
    f = rng.normal(size=6)
    x = np.array([0.2, -0.1])
    hard = float(np.min(pairwise_distances(x[None], sup.points)[0] - f))
    for eps in (1e-1, 1e-2, 1e-3):
        v = ceps_transform(f, sup, x, eps)
        assert hard - 1e-12 <= v <= hard + eps * np.log(6) + 1e-12


def test_ceps_constant_shift():
    rng = np.random.default_rng(2)
    sup = M(rng.normal(size=(5, 2)))
    x = np.zeros(2)
    base = ceps_transform(np.zeros(5), sup, x, 0.3)
    assert ceps_transform(np.full(5, 1.5), sup, x, 0.3) == pytest.approx(base - 1.5, abs=1e-12)


def test_ceps_rejects_bad_epsilon():
    with pytest.raises(ValidationError):
        ceps_transform([0.0], M([[0.0]]), [0.0], 0.0)


def _fd_grad(a, b, params, h=1e-5):
    g = np.zeros_like(b.points)
    for j in range(b.n):
        for k in range(b.dim):
            up, dn = b.points.copy(), b.points.copy()
            up[j, k] += h
            dn[j, k] -= h
            g[j, k] = (sinkhorn_divergence(a, M(up, b.weights), params) - sinkhorn_divergence(a, M(dn, b.weights), params)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    a, b = M(rng.normal(size=(8, 2))), M(rng.normal(size=(8, 2)) + 0.5)
    p = SinkhornParams(0.5, tol=1e-12)
    g = sinkhorn_grad_points(a, b, p)
    fd = _fd_grad(a, b, p)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-3


def test_gradient_two_diracs_is_unit_direction():
    a, b = M([[0.0, 0.0]]), M([[3.0, 4.0]])
    g = sinkhorn_grad_points(a, b, SinkhornParams(0.01))
    np.testing.assert_allclose(g[0], [0.6, 0.8], atol=1e-9)


def test_gradient_vanishes_at_equality(clouds):
    a, _ = clouds
    g = sinkhorn_grad_points(a, a, SinkhornParams(0.5, tol=1e-10))
    assert np.max(np.abs(g)) < 1e-6


def test_gradient_refuses_unconverged(clouds):
    a, b = clouds
    with pytest.raises(NumericError, match="did not converge"):
        sinkhorn_grad_points(a, b, SinkhornParams(1e-3, max_iter=2))
