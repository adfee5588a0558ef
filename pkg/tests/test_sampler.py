import numpy as np
import pytest

from opflow.errors import MaskScheduleMismatch, NonFiniteState, SingularOperator
from opflow.interpolant import GaussianGaussian, GaussianOracle
from opflow.operators import Diagonal
from opflow.paths import PathPoint, PathSchedule, diagonal_path, inpainting_path
from opflow.sampler import IntegrationConfig, generate, integrate_ode, integrate_sde

N = 10_000


def oracle(mean, cov):
    return GaussianOracle(GaussianGaussian(np.atleast_1d(mean).astype(float), np.atleast_2d(cov).astype(float)))


def check_moments(x, mean, var):
    se = np.sqrt(var / x.shape[0])
    assert np.all(np.abs(x.mean(0) - mean) <= 3 * se), (x.mean(0), mean)
    assert np.all(np.abs(x.var(0) / var - 1) <= 0.05), (x.var(0), var)


def test_constant_schedule_is_stationary(rng):
    def evaluate(t):
        return PathPoint(Diagonal([0.4, 0.7]), Diagonal([0.6, 0.3]), Diagonal([0.0, 0.0]), Diagonal([0.0, 0.0]))

    path = PathSchedule(evaluate, 2, "constant", hadamard=True)
    x = rng.standard_normal((5, 2))
    traj = integrate_ode(oracle([1.0, 0.0], np.eye(2)), path, x, IntegrationConfig(steps=10))
    assert traj.shape == (11, 5, 2)
    assert np.all(traj == x)


def test_ode_terminal_law():
    x0 = np.random.default_rng(1).standard_normal((N, 1))
    x = integrate_ode(oracle(0.0, 1.0), diagonal_path(1), x0, IntegrationConfig(steps=200), store=False)
    check_moments(x, 0.0, 1.0)


def test_zero_eps_sde_equals_ode(rng):
    src = oracle([0.5, -1.0], [[1.0, 0.3], [0.3, 0.5]])
    x0 = rng.standard_normal((50, 2))
    path = diagonal_path(2)
    a = integrate_ode(src, path, x0, IntegrationConfig(steps=40, seed=3))
    for noise in ("standard", "alpha_half"):
        b = integrate_sde(src, path, x0, IntegrationConfig(steps=40, seed=3, noise=noise))
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("noise", ["standard", "alpha_half"])
def test_sde_terminal_law(eps, noise):
    m, v = 0.7, 0.5
    x0 = np.random.default_rng(2).standard_normal((N, 1))
    # the standard variant needs alpha invertible: stop just short of t = 1
    cfg = IntegrationConfig(steps=400, eps=eps, noise=noise, seed=4, t_end=0.995 if noise == "standard" else 1.0)
    x = integrate_sde(oracle(m, v), diagonal_path(1), x0, cfg, store=False)
    t = cfg.t_end
    check_moments(x, t * m, (1 - t) ** 2 + t * t * v)


def test_standard_noise_singular_alpha():
    cfg = IntegrationConfig(steps=4, eps=0.5, noise="standard")
    with pytest.raises(SingularOperator):
        integrate_sde(oracle(np.zeros(2), np.eye(2)), inpainting_path(2, [0]), np.zeros((3, 2)), cfg)


def test_alpha_half_reaches_zero_alpha(rng):
    cfg = IntegrationConfig(steps=50, eps=0.5, noise="alpha_half", seed=1)
    x = integrate_sde(oracle([0.0, 0.0], np.eye(2)), inpainting_path(2, [0]), rng.standard_normal((10, 2)), cfg, store=False)
    assert np.all(np.isfinite(x))


def affine_euler_moments(src, path, K, mean0, cov0):
    """Exact mean and covariance after K Euler steps of an affine drift."""
    d = mean0.size
    mean, cov = mean0.copy(), cov0.copy()
    h = 1.0 / K
    probe = np.vstack([np.zeros(d), np.eye(d)])
    for k in range(K):
        p = path(k * h)
        e0, e1 = src.drifts(p.alpha, p.beta, probe)
        v = p.alpha_dot.apply(e0) + p.beta_dot.apply(e1)
        c = v[0]
        J = (v[1:] - c).T
        step = np.eye(d) + h * J
        mean = step @ mean + h * c
        cov = step @ cov @ step.T
    return mean, cov


def test_weak_error_first_order():
    m = np.array([1.0, -0.5])
    S = np.array([[0.6, 0.2], [0.2, 0.4]])
    src = oracle(m, S)
    errs = []
    Ks = [25, 50, 100, 200]
    for K in Ks:
        mean, cov = affine_euler_moments(src, diagonal_path(2), K, np.zeros(2), np.eye(2))
        errs.append(np.linalg.norm(mean - m) + np.linalg.norm(cov - S))
    slope = -np.polyfit(np.log(Ks), np.log(errs), 1)[0]
    assert 0.7 <= slope <= 1.3
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((1.7 <= ratios) & (ratios <= 2.3))


def test_affine_propagation_matches_simulation():
    m, S = np.array([1.0]), np.array([[0.5]])
    src = oracle(m, S)
    mean, cov = affine_euler_moments(src, diagonal_path(1), 10, np.zeros(1), np.eye(1))
    x = integrate_ode(src, diagonal_path(1), np.random.default_rng(0).standard_normal((N, 1)), IntegrationConfig(steps=10), store=False)
    check_moments(x, mean, np.diag(cov))


def test_generate_pins_everything(rng):
    obs = rng.standard_normal((4, 3))
    out = generate(oracle(np.zeros(3), np.eye(3)), inpainting_path(3, [0, 1, 2]), obs, IntegrationConfig(steps=7), n=4)
    assert np.array_equal(out, obs)


def test_generate_unconditional(rng):
    out = generate(oracle(2.0, 0.25), inpainting_path(1, []), np.zeros(1), IntegrationConfig(steps=200, seed=9), n=N)
    check_moments(out, 2.0, 0.25)


def test_generate_conditional_gaussian():
    rho = 0.8
    src = oracle([0.0, 0.0], [[1.0, rho], [rho, 1.0]])
    out = generate(src, inpainting_path(2, [0]), np.array([1.0, 0.0]), IntegrationConfig(steps=200, seed=5), n=N)
    assert np.all(out[:, 0] == 1.0)
    check_moments(out[:, 1:], rho, 1 - rho**2)


def test_generate_pins_bit_exact_with_noise(rng):
    obs = rng.standard_normal((20, 4)) * 1e3
    cfg = IntegrationConfig(steps=30, eps=2.0, noise="alpha_half", seed=2)
    out = generate(oracle(np.zeros(4), np.eye(4)), inpainting_path(4, [1, 3]), obs, cfg, n=20)
    assert np.array_equal(out[:, [1, 3]], obs[:, [1, 3]])


def test_mask_schedule_mismatch():
    with pytest.raises(MaskScheduleMismatch):
        generate(oracle(np.zeros(2), np.eye(2)), diagonal_path(2), np.zeros(2), IntegrationConfig(steps=5, pin=(0,)))


def test_generate_single_and_store(rng):
    src = oracle(np.zeros(2), np.eye(2))
    out = generate(src, inpainting_path(2, [1]), np.array([0.0, 0.5]), IntegrationConfig(steps=5))
    assert out.shape == (2,) and out[1] == 0.5
    traj = generate(src, inpainting_path(2, [1]), np.array([0.0, 0.5]), IntegrationConfig(steps=5), store=True)
    assert traj.shape == (6, 2)


def test_determinism():
    src = oracle(np.zeros(2), np.eye(2))
    cfg = IntegrationConfig(steps=20, eps=0.3, noise="alpha_half", seed=17)
    a = generate(src, inpainting_path(2, []), np.zeros(2), cfg, n=30)
    b = generate(src, inpainting_path(2, []), np.zeros(2), cfg, n=30)
    assert np.array_equal(a, b)


def test_non_finite_state():
    class Bad:
        dim = 1

        def drifts(self, alpha, beta, x):
            return np.full_like(x, np.inf), np.zeros_like(x)

    with pytest.raises(NonFiniteState):
        integrate_ode(Bad(), diagonal_path(1), np.zeros((2, 1)), IntegrationConfig(steps=3))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegrationConfig(steps=0)
    with pytest.raises(ValueError):
        IntegrationConfig(eps=-0.1)
    with pytest.raises(ValueError):
        IntegrationConfig(noise="other")
    cfg = IntegrationConfig(eps=[[0.0, 0.0], [1.0, 2.0]])
    assert cfg.eps_at(0.25) == 0.5
