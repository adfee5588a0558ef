import numpy as np
import pytest

from opflow.interpolant import GaussianGaussian, GaussianOracle
from opflow.paths import PathPoint, PathSchedule
from opflow.operators import Diagonal
from opflow.pathopt import OptimizerConfig, ParametricPath, optimize_path, path_length_estimate, read_path_csv, write_path_csv


def bridge(m=1.0, v=0.5, d=1):
    g = GaussianGaussian(np.full(d, m), v * np.eye(d))
    return g, GaussianOracle(g)


def test_constant_path_has_zero_length():
    g, src = bridge()

    def evaluate(t):
        return PathPoint(Diagonal([0.3]), Diagonal([0.7]), Diagonal([0.0]), Diagonal([0.0]))

    assert path_length_estimate(PathSchedule(evaluate, 1, "c", hadamard=True), src, g, 100, 5, 0) == 0.0


def test_estimate_deterministic_and_stable_across_seeds():
    g, src = bridge()
    path = ParametricPath.straight([1.0], [0.0])
    a = path_length_estimate(path, src, g, 2000, 20, 1)
    assert a == path_length_estimate(path, src, g, 2000, 20, np.random.default_rng(1))
    vals, ses = zip(*(path_length_estimate(path, src, g, 2000, 20, s, return_stderr=True) for s in range(8)))
    spread = np.abs(np.array(vals) - np.mean(vals))
    assert np.all(spread <= 3 * np.array(ses))


def test_estimate_matches_closed_form():
    # straight Hadamard path, independent Gaussians: E|eta0 - eta1|^2 has a closed form per t
    m, v = 1.0, 0.5
    g, src = bridge(m, v)
    est, se = path_length_estimate(ParametricPath.straight([1.0], [0.0]), src, g, 20_000, 20, 2, return_stderr=True)
    t = (np.arange(20) + 0.5) / 20
    a, b = 1 - t, t
    var_I = a * a + b * b * v
    # eta0 - eta1 = E[x0 - x1 | I]; its second moment is Cov(x0 - x1, I)^2 / Var I + m^2
    ref = np.mean((a - b * v) ** 2 / var_I + m * m)
    assert abs(est - ref) <= 3 * se


def test_stderr_scaling():
    g, src = bridge()
    path = ParametricPath.straight([1.0], [0.0])
    _, s1 = path_length_estimate(path, src, g, 4000, 10, 0, return_stderr=True)
    _, s2 = path_length_estimate(path, src, g, 8000, 10, 0, return_stderr=True)
    assert 1.3 <= s1 / s2 <= 1.7


def test_controls_clamped_and_endpoints_frozen():
    p = ParametricPath([1.0, 1.0], [0.0, 0.0], [[1.4, -0.2], [0.5, 0.5]])
    assert p.controls.tolist() == [[1.0, 0.0], [0.5, 0.5]]
    with pytest.raises(ValueError):
        p.alpha0[0] = 0.3
    np.testing.assert_array_equal(p.nodes[0], [1.0, 1.0])
    np.testing.assert_allclose(p.times, [0, 1 / 3, 2 / 3, 1])


def test_perturbed_start_descends():
    g, src = bridge(1.0, 0.5)
    init = ParametricPath([1.0], [0.0], [[0.4], [0.7]])
    cfg = OptimizerConfig(n_particles=1000, n_quadrature=10, sweeps=10, step=0.1)
    best, trace = optimize_path(init, src, g, cfg)
    assert np.all(np.diff(trace) <= 0)
    assert trace[-1] <= trace[0]
    np.testing.assert_array_equal(best.alpha0, init.alpha0)
    np.testing.assert_array_equal(best.alpha1, init.alpha1)
    assert np.all((best.controls >= 0) & (best.controls <= 1))
    again, trace2 = optimize_path(init, src, g, cfg)
    np.testing.assert_array_equal(trace, trace2)
    np.testing.assert_array_equal(best.controls, again.controls)


def test_straight_path_near_optimal_when_speed_is_uniform():
    # with x1 almost deterministic at 0, eta0 - eta1 = x / alpha and the
    # integrand alpha_dot^2 E|x0|^2 is minimised by constant speed
    g = GaussianGaussian(np.zeros(1), 1e-4 * np.eye(1))
    src = GaussianOracle(g)
    init = ParametricPath.straight([1.0], [0.0], 4)
    cfg = OptimizerConfig(n_particles=2000, n_quadrature=20, sweeps=5, step=0.05)
    j0, se = path_length_estimate(init, src, g, cfg.n_particles, cfg.n_quadrature, cfg.seed, return_stderr=True)
    _, trace = optimize_path(init, src, g, cfg)
    assert abs(trace[-1] - j0) <= 3 * se


def test_csv_round_trip(tmp_path):
    p = ParametricPath([1.0, 0.5], [0.0, 0.25], [[0.7, 0.3]])
    write_path_csv(p, tmp_path / "p.csv")
    q = read_path_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(q.nodes, p.nodes)
    sched = q.schedule()
    np.testing.assert_allclose(sched(0.5).alpha.diagonal(), [0.7, 0.3])
