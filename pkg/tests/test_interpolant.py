import numpy as np
import pytest

from opflow.errors import DimensionMismatch, SingularCovariance, SingularOperator
from opflow.interpolant import (
    GaussianGaussian,
    GaussianOracle,
    IndependentGaussianData,
    gaussian_exact_drifts,
    gaussian_score,
    sample_interpolant,
    score_from_drift,
)
from opflow.operators import Dense, Diagonal, ScalarIdentity

STD1 = GaussianGaussian(np.zeros(1), np.eye(1))


def test_endpoints(rng):
    g = GaussianGaussian(np.array([1.0, -1.0]), np.eye(2))
    s = sample_interpolant(g, 0.0, 1.0, np.random.default_rng(1))
    np.testing.assert_array_equal(s.I, s.x1)
    s = sample_interpolant(g, 1.0, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(s.I, s.x0)
    s = sample_interpolant(g, Diagonal([1.0, 0.0]), Diagonal([0.0, 1.0]), np.random.default_rng(1))
    np.testing.assert_array_equal(s.I, [s.x0[0], s.x1[1]])


def test_sampling_deterministic():
    g = GaussianGaussian(np.zeros(3), np.eye(3))
    a = sample_interpolant(g, 0.3, 0.7, np.random.default_rng(5), n=4)
    b = sample_interpolant(g, 0.3, 0.7, np.random.default_rng(5), n=4)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        sample_interpolant(STD1, Diagonal([1.0, 1.0]), 0.0, np.random.default_rng())


def test_covariance_validation():
    with pytest.raises(ValueError):
        GaussianGaussian(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        GaussianGaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_drift_example():
    # C = 0.25 + 0.25 = 0.5; eta0 = 0.5 * 1 / 0.5; eta1 = 0.5 * 1 / 0.5
    e0, e1 = gaussian_exact_drifts(STD1, 0.5, 0.5, np.array([1.0]))
    np.testing.assert_allclose(e0, [1.0], rtol=1e-15)
    np.testing.assert_allclose(e1, [1.0], rtol=1e-15)


def test_observed_limit():
    x = np.array([0.8])
    _, e1 = gaussian_exact_drifts(STD1, 1e-7, 0.6, x)
    np.testing.assert_allclose(e1, x / 0.6, rtol=1e-9)


def test_singular_covariance():
    g = GaussianGaussian(np.zeros(2), np.eye(2))
    with pytest.raises(SingularCovariance):
        gaussian_exact_drifts(g, Diagonal([0.0, 1.0]), Diagonal([0.0, 1.0]), np.zeros(2))


def _random_case(rng, d):
    A = rng.standard_normal((d, d))
    g = GaussianGaussian(rng.standard_normal(d), A @ A.T + 0.3 * np.eye(d))
    a = Diagonal(rng.uniform(0.2, 1.0, d) * rng.choice([-1, 1], d))
    b = Diagonal(rng.uniform(0.2, 1.0, d))
    return g, a, b, 2 * rng.standard_normal((3, d))


def test_linear_identity(rng):
    for _ in range(200):
        g, a, b, x = _random_case(rng, int(rng.integers(1, 9)))
        e0, e1 = gaussian_exact_drifts(g, a, b, x)
        np.testing.assert_allclose(a.apply(e0) + b.apply(e1), x, rtol=0, atol=1e-10)


def test_dense_alpha_identity(rng):
    d = 3
    g = GaussianGaussian(rng.standard_normal(d), np.eye(d) * 1.3)
    a = Dense(rng.standard_normal((d, d)) + 2 * np.eye(d))
    b = Dense(rng.standard_normal((d, d)))
    x = rng.standard_normal((2, d))
    e0, e1 = gaussian_exact_drifts(g, a, b, x)
    np.testing.assert_allclose(a.apply(e0) + b.apply(e1), x, atol=1e-10)


def test_per_row_alpha_matches_shared(rng):
    g, a, b, x = _random_case(rng, 4)
    rows = np.broadcast_to(a.diagonal(), x.shape)
    e0, e1 = gaussian_exact_drifts(g, rows, np.broadcast_to(b.diagonal(), x.shape), x)
    f0, f1 = gaussian_exact_drifts(g, a, b, x)
    np.testing.assert_allclose(e0, f0, atol=1e-12)
    np.testing.assert_allclose(e1, f1, atol=1e-12)


def test_score_examples():
    a = ScalarIdentity(0.5, 1)
    e0, _ = gaussian_exact_drifts(STD1, a, a, np.array([1.0]))
    np.testing.assert_allclose(score_from_drift(a, e0), [-2.0])
    np.testing.assert_array_equal(score_from_drift(a, np.zeros(1)), [0.0])
    v = np.array([0.3, -2.0])
    np.testing.assert_array_equal(score_from_drift(ScalarIdentity(1.0, 2), v), -v)
    with pytest.raises(SingularOperator):
        score_from_drift(Diagonal([1.0, 0.0]), v)


def test_score_matches_log_density_gradient(rng):
    for _ in range(100):
        g, a, b, x = _random_case(rng, int(rng.integers(1, 6)))
        e0, _ = gaussian_exact_drifts(g, a, b, x)
        mean, cov = g.marginal(a, b)
        ref = -np.linalg.solve(cov, (x - mean).T).T
        np.testing.assert_allclose(score_from_drift(a, e0), ref, rtol=0, atol=1e-9)
        np.testing.assert_allclose(gaussian_score(g, a, b, x), ref, rtol=0, atol=1e-9)


def test_monte_carlo_binning():
    # x1 ~ N(0.3, 1.5); conditional means estimated from 1e6 draws in 50 equal-count bins
    rng = np.random.default_rng(11)
    g = GaussianGaussian(np.array([0.3]), np.array([[1.5]]))
    n, bins, a, b = 1_000_000, 50, 0.6, 0.8
    x0 = rng.standard_normal(n)
    x1 = 0.3 + np.sqrt(1.5) * rng.standard_normal(n)
    I = a * x0 + b * x1
    order = np.argsort(I)
    groups = np.array_split(order, bins)
    for grp in groups[5:-5]:
        xc = I[grp].mean()
        e0, e1 = gaussian_exact_drifts(g, a, b, np.array([[xc]]))
        assert abs(x0[grp].mean() - e0[0, 0]) <= 0.05 * max(abs(e0[0, 0]), 1.0)
        assert abs(x1[grp].mean() - e1[0, 0]) <= 0.05 * max(abs(e1[0, 0]), np.sqrt(1.5))


def test_population_loss_minimised_by_exact_drifts():
    rng = np.random.default_rng(3)
    g = GaussianGaussian(np.array([0.5, -1.0]), np.array([[1.0, 0.4], [0.4, 0.8]]))
    n = 100_000
    x0, x1 = g.sample(n, rng)
    a = rng.uniform(0.05, 1.0, (n, 2))
    b = rng.uniform(0.05, 1.0, (n, 2))
    I = a * x0 + b * x1
    e0, e1 = gaussian_exact_drifts(g, a, b, I)
    base = np.sum((e0 - x0) ** 2 + (e1 - x1) ** 2, axis=1)
    for k in range(5):
        w = np.random.default_rng(100 + k).standard_normal(4) * 0.2
        p0 = e0 + w[0] + w[1] * I
        p1 = e1 + w[2] + w[3] * I
        pert = np.sum((p0 - x0) ** 2 + (p1 - x1) ** 2, axis=1)
        diff = pert - base
        assert diff.mean() >= 3 * diff.std(ddof=1) / np.sqrt(n)


def test_oracle_eta_is_difference(rng):
    g, _, _, x = _random_case(rng, 3)
    alpha = rng.uniform(0.1, 0.9, 3)
    oracle = GaussianOracle(g)
    e0, e1 = gaussian_exact_drifts(g, Diagonal(alpha), Diagonal(1 - alpha), x)
    np.testing.assert_allclose(oracle.eta(alpha, x), e0 - e1, atol=1e-12)


def test_data_coupling(rng):
    pool = rng.standard_normal((10, 3))
    c = IndependentGaussianData.from_array(pool)
    x0, x1 = c.sample(50, np.random.default_rng(0))
    assert x0.shape == x1.shape == (50, 3)
    assert all(any(np.array_equal(r, p) for p in pool) for r in x1)
