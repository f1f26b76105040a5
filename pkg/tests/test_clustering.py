import numpy as np
import pytest

from w1lab.clustering import (
    WeiszfeldParams,
    geometric_median,
    k_gm_lloyd,
    kgm_batch,
    median_objective,
    nearest,
    projection_measure,
)
from w1lab.errors import ValidationError
from w1lab.exact_ot import exact_w1, exact_wp
from w1lab.measures import EmpiricalMeasure, RngSeed


def M(pts, w=None):
    return EmpiricalMeasure(np.asarray(pts, dtype=float), w)


def subgradient_oracle(X, w, iters=20000):
    """Plain diminishing-step subgradient descent, best iterate kept."""
    y = X.mean(axis=0)
    best, best_obj = y, median_objective(X, w, y)
    for t in range(1, iters + 1):
        diff = y - X
        d = np.linalg.norm(diff, axis=1)
        g = (w[d > 0, None] * diff[d > 0] / d[d > 0, None]).sum(0)
        y = y - (0.5 / np.sqrt(t)) * g
        obj = median_objective(X, w, y)
        if obj < best_obj:
            best, best_obj = y, obj
    return best_obj


def test_weiszfeld_params_validated():
    with pytest.raises(ValidationError):
        WeiszfeldParams(max_iter=0)


def test_median_of_single_point():
    np.testing.assert_array_equal(geometric_median([[2.0, 3.0]]), [2.0, 3.0])


def test_median_of_equilateral_triangle_is_centroid():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    np.testing.assert_allclose(geometric_median(X), X.mean(0), atol=1e-8)


def test_median_of_collinear_points_is_middle():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    np.testing.assert_allclose(geometric_median(X), [1.0, 0.0], atol=1e-8)


def test_median_beats_mean_and_matches_oracle():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    w = np.full(50, 1 / 50)
    m = geometric_median(X)
    obj = median_objective(X, w, m)
    assert obj <= median_objective(X, w, X.mean(0))
    oracle = subgradient_oracle(X, w)
    assert obj <= oracle * (1 + 1e-6)


def test_median_starting_on_optimal_data_point():
    # The heavy point is the optimum; the iteration must stop on it.
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    w = np.array([0.8, 0.1, 0.1])
    np.testing.assert_allclose(geometric_median(X, w, start=[0.0, 0.0]), [0.0, 0.0], atol=1e-12)


def test_median_leaves_non_optimal_data_point():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
    w = np.full(4, 0.25)
    m = geometric_median(X, w, start=[0.0, 0.0])
    assert median_objective(X, w, m) < median_objective(X, w, np.zeros(2)) - 1e-3


def test_lloyd_k_equals_n_recovers_points():
    rng = np.random.default_rng(1)
    data = M(rng.normal(size=(7, 2)))
    cs = k_gm_lloyd(data, 7, n_init=3, rng=0)
    assert cs.objective == pytest.approx(0.0, abs=1e-12)
    assert sorted(map(tuple, cs.centroids)) == sorted(map(tuple, data.points))


def test_lloyd_k_one_is_geometric_median():
    rng = np.random.default_rng(2)
    data = M(rng.normal(size=(40, 3)))
    cs = k_gm_lloyd(data, 1, n_init=2, rng=0)
    gm = geometric_median(data.points)
    assert cs.objective == pytest.approx(np.linalg.norm(data.points - gm, axis=1).sum(), rel=1e-8)


def test_lloyd_two_blobs():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(size=(30, 2)) * 0.1, rng.normal(size=(30, 2)) * 0.1 + [5.0, 0.0]])
    data = M(X)
    two = k_gm_lloyd(data, 2, n_init=5, rng=1)
    one = k_gm_lloyd(data, 1, n_init=1, rng=1)
    assert sorted(np.round(two.centroids[:, 0])) == [0.0, 5.0]
    assert two.objective < one.objective
    lab = two.assignment
    assert len(set(lab[:30])) == 1 and len(set(lab[30:])) == 1 and lab[0] != lab[30]


def test_lloyd_objective_monotone_and_consistent():
    rng = np.random.default_rng(4)
    data = M(rng.normal(size=(120, 2)))
    for seed in range(5):
        cs = k_gm_lloyd(data, 6, n_init=3, rng=seed)
        assert np.all(np.diff(cs.history) <= 1e-12)
        _, d = nearest(data.points, cs.centroids)
        assert cs.objective == pytest.approx(d.sum(), abs=1e-9)
        assert np.all(cs.assignment < 6)


def test_lloyd_validates_k():
    data = M([[0.0], [1.0]])
    with pytest.raises(ValidationError):
        k_gm_lloyd(data, 3)
    with pytest.raises(ValidationError):
        k_gm_lloyd(data, 0)


def test_lloyd_deterministic_under_seed():
    rng = np.random.default_rng(5)
    data = M(rng.normal(size=(60, 2)))
    a = k_gm_lloyd(data, 4, n_init=4, rng=RngSeed(9))
    b = k_gm_lloyd(data, 4, n_init=4, rng=RngSeed(9))
    assert np.array_equal(a.centroids, b.centroids)


def test_medians_beat_means_on_final_assignment():
    rng = np.random.default_rng(6)
    data = M(rng.standard_t(2, size=(150, 2)))
    cs = k_gm_lloyd(data, 3, n_init=5, rng=0)
    means = np.array([data.points[cs.assignment == j].mean(0) for j in range(3)])
    obj_means = sum(np.linalg.norm(data.points[cs.assignment == j] - means[j], axis=1).sum() for j in range(3))
    assert cs.objective <= obj_means + 1e-9


def test_projection_examples():
    rho = M([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], [0.2, 0.3, 0.5])
    same = projection_measure(rho.points, rho)
    assert np.array_equal(same.points, rho.points) and np.allclose(same.weights, rho.weights)
    origin = projection_measure([[0.0, 0.0]], rho)
    assert origin.n == 1 and origin.weights[0] == pytest.approx(1.0)


def test_projection_tie_goes_to_lowest_index():
    rho = M([[0.0]])
    p = projection_measure([[1.0], [-1.0]], rho)
    np.testing.assert_array_equal(p.points, [[1.0]])


def test_kgm_batch_examples():
    rng = np.random.default_rng(7)
    data = M(rng.normal(size=(9, 2)))
    assert exact_w1(kgm_batch(data, 9, n_init=2), data).value == pytest.approx(0.0, abs=1e-12)
    one = kgm_batch(data, 1, n_init=2)
    assert one.n == 1
    np.testing.assert_allclose(one.points[0], geometric_median(data.points), atol=1e-6)


def test_kgm_beats_random_supports():
    rng = np.random.default_rng(8)
    centers = np.array([[0, 0], [4, 0], [0, 4], [4, 4]], dtype=float)
    X = centers[rng.integers(4, size=200)] + 0.3 * rng.normal(size=(200, 2))
    data = M(X)
    best = exact_w1(kgm_batch(data, 4, n_init=20, rng=0), data).value
    for _ in range(100):
        S = X[rng.choice(200, 4, replace=False)] + 0.1 * rng.normal(size=(4, 2))
        assert best <= exact_w1(projection_measure(S, data), data).value + 1e-9


def test_projection_distance_identity_and_minimality():
    rng = np.random.default_rng(9)
    for _ in range(20):
        rho = M(rng.normal(size=(10, 2)), rng.dirichlet(np.ones(10)))
        S = rng.normal(size=(3, 2))
        proj = projection_measure(S, rho)
        _, d = nearest(rho.points, S)
        for p in (1.0, 2.0):
            assert float(rho.weights @ d**p) == pytest.approx(exact_wp(rho, proj, p).value, abs=1e-9)
        mu = M(S, rng.dirichlet(np.ones(3)))
        assert exact_w1(rho, mu).value >= exact_w1(rho, proj).value - 1e-9
