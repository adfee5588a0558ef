import numpy as np
import pytest

from opflow.drift_model import DriftModel, TrainConfig, hadamard_recover, loss_batch, sample_nu, smoothed, train
from opflow.errors import DimensionMismatch, EmptyBatch, NonFiniteLoss
from opflow.interpolant import GaussianGaussian, gaussian_exact_drifts


def small(mode, skip=False, dim=3, seed=0):
    return DriftModel(dim, mode, hidden=(16, 16), activation="tanh", skip=skip).init(np.random.default_rng(seed))


def randomize(model, seed=1):
    model.net.params[:] = np.random.default_rng(seed).standard_normal(model.n_params) * 0.3
    return model


def test_zero_last_layer_outputs_zero(rng):
    x = rng.standard_normal((4, 3))
    a = rng.random((4, 3))
    e0, e1 = small("full").predict(a, rng.random((4, 3)), x)
    assert np.all(e0 == 0) and np.all(e1 == 0)
    assert np.all(small("hadamard").eta(a, x) == 0)


def test_deterministic(rng):
    m = randomize(small("full"))
    x, a, b = rng.standard_normal((5, 3)), rng.random((5, 3)), rng.random((5, 3))
    p, q = m.predict(a, b, x), m.predict(a, b, x)
    np.testing.assert_array_equal(p[0], q[0])
    np.testing.assert_array_equal(p[1], q[1])


def test_parameter_count():
    m = DriftModel(4, "full", hidden=(7, 5))
    assert m.n_params == (12 * 7 + 7) + (7 * 5 + 5) + (5 * 8 + 8)
    m = DriftModel(4, "hadamard", hidden=(7,))
    assert m.n_params == (8 * 7 + 7) + (7 * 4 + 4)


def test_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        small("full").predict(0.5, 0.5, rng.standard_normal((2, 4)))


def test_hadamard_recover_examples(rng):
    x, eta = rng.standard_normal(3), rng.standard_normal(3)
    e0, e1 = hadamard_recover(np.ones(3), x, eta)
    np.testing.assert_array_equal(e0, x)
    np.testing.assert_array_equal(e1, x - eta)
    e0, e1 = hadamard_recover(np.zeros(3), x, eta)
    np.testing.assert_array_equal(e0, x + eta)
    np.testing.assert_array_equal(e1, x)
    a = rng.random(3)
    e0, e1 = hadamard_recover(a, x, eta)
    np.testing.assert_allclose(a * e0 + (1 - a) * e1, x, rtol=0, atol=1e-15)


def test_loss_examples(rng):
    x0, x1 = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    a = rng.random((6, 3))
    m = small("hadamard")
    loss, _ = loss_batch(m, x0, x1, a)
    np.testing.assert_allclose(loss, np.mean(np.sum((x0 - x1) ** 2, axis=1)), rtol=1e-14)
    full = DriftModel(3, "full", hidden=(3,), activation="tanh")
    with pytest.raises(EmptyBatch):
        loss_batch(full, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))


def test_loss_zero_at_exact_targets(rng, monkeypatch):
    m = small("full")
    x0, x1 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    out = np.concatenate([x0, x1], axis=1)
    monkeypatch.setattr(m, "_forward", lambda a, b, x: (out, None))
    monkeypatch.setattr(m.net, "backward", lambda cache, g: np.zeros(m.n_params))
    loss, _ = loss_batch(m, x0, x1, rng.random((4, 3)), rng.random((4, 3)))
    assert loss == 0.0


def test_nonfinite_loss(rng):
    m = randomize(small("full"))
    m.net.params[-1] = np.nan
    with pytest.raises(NonFiniteLoss):
        loss_batch(m, np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 3)))


@pytest.mark.parametrize("mode,skip", [("full", False), ("hadamard", False), ("hadamard", True)])
def test_gradient_finite_differences(mode, skip):
    rng = np.random.default_rng(7)
    m = randomize(small(mode, skip))
    x0, x1 = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    a, b = rng.random((8, 3)), rng.random((8, 3))
    _, grad = loss_batch(m, x0, x1, a, b)
    idx = rng.choice(m.n_params, 20, replace=False)
    h = 1e-5
    for i in idx:
        old = m.net.params[i]
        m.net.params[i] = old + h
        lp, _ = loss_batch(m, x0, x1, a, b)
        m.net.params[i] = old - h
        lm, _ = loss_batch(m, x0, x1, a, b)
        m.net.params[i] = old
        fd = (lp - lm) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(abs(fd), abs(grad[i]), 1e-6)


def test_nu_samplers(rng):
    for spec in ("uniform", "diagonal", {"kind": "blockwise", "block": 2}, {"kind": "blockwise", "block": 2, "grid": 3}, {"kind": "masked", "max_rate": 0.5}):
        a, b = sample_nu(spec, 50, 9, rng)
        assert a.shape == (50, 9) and np.all((0 <= a) & (a <= 1))
        np.testing.assert_array_equal(b, 1 - a)
    a, _ = sample_nu("diagonal", 10, 4, rng)
    assert np.all(a == a[:, :1])
    a, _ = sample_nu({"kind": "blockwise", "block": 2, "grid": 4}, 5, 16, rng)
    tiles = a.reshape(5, 4, 4)
    assert np.all(tiles[:, 0, 0] == tiles[:, 1, 1])
    a, b = sample_nu("uniform", 10, 4, rng, mode="full")
    assert not np.allclose(a + b, 1)
    mix = {"kind": "mixture", "components": [[1.0, "diagonal"], [1.0, "uniform"]]}
    a, _ = sample_nu(mix, 200, 4, rng)
    diag_rows = np.all(a == a[:, :1], axis=1).mean()
    assert 0.3 < diag_rows < 0.7


def test_train_determinism():
    g = GaussianGaussian(np.zeros(1), np.eye(1))
    cfg = TrainConfig(batch_size=16, steps=30, lr=1e-2, hidden=(8,), seed=4, log_every=0)
    _, l1 = train(g, cfg)
    _, l2 = train(g, cfg)
    np.testing.assert_array_equal(l1, l2)


def optimal_hadamard_loss(g, n=400_000, seed=9):
    rng = np.random.default_rng(seed)
    x0, x1 = g.sample(n, rng)
    a = rng.random((n, 1))
    I = a * x0 + (1 - a) * x1
    e0, e1 = gaussian_exact_drifts(g, a, 1 - a, I)
    return float(np.mean(np.sum((e0 - e1 - (x0 - x1)) ** 2, axis=1)))


def test_train_reaches_optimal_loss_1d():
    g = GaussianGaussian(np.array([1.0]), np.array([[0.5]]))
    cfg = TrainConfig(batch_size=256, steps=3000, lr=2e-3, optimizer="adam", hidden=(64, 64), seed=1, log_every=0, lr_decay=0.5, decay_every=1000)
    model, losses = train(g, cfg)
    ref = optimal_hadamard_loss(g)
    final = smoothed(losses, 200)[-1]
    assert final <= 1.1 * ref
    s = smoothed(losses, 100)
    assert s[-1] <= s[0]


def conv_model(mode, compute="float64", seed=3):
    m = DriftModel(10, mode, hidden=(6,), activation="silu", arch="conv", point_dim=2, dilations=(1, 2), compute=compute)
    m.init(np.random.default_rng(seed))
    m.net.params[:] = 0.3 * np.random.default_rng(seed + 1).standard_normal(m.n_params)
    return m


@pytest.mark.parametrize("mode", ["full", "hadamard"])
def test_conv_gradient_finite_differences(mode):
    rng = np.random.default_rng(11)
    m = conv_model(mode)
    x0, x1 = rng.standard_normal((6, 10)), rng.standard_normal((6, 10))
    a = rng.random((6, 10))
    _, grad = loss_batch(m, x0, x1, a, 1 - a)
    h = 1e-5
    for i in rng.choice(m.n_params, 25, replace=False):
        old = m.net.params[i]
        m.net.params[i] = old + h
        lp, _ = loss_batch(m, x0, x1, a, 1 - a)
        m.net.params[i] = old - h
        lm, _ = loss_batch(m, x0, x1, a, 1 - a)
        m.net.params[i] = old
        fd = (lp - lm) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(abs(fd), abs(grad[i]), 1e-6)


def test_conv_float32_tracks_float64(rng):
    m64, m32 = conv_model("hadamard"), conv_model("hadamard", "float32")
    x0, x1 = rng.standard_normal((6, 10)), rng.standard_normal((6, 10))
    a = rng.random((6, 10))
    l64, g64 = loss_batch(m64, x0, x1, a, 1 - a)
    l32, g32 = loss_batch(m32, x0, x1, a, 1 - a)
    assert g32.dtype == np.float64
    assert abs(l32 - l64) <= 1e-5 * abs(l64)
    np.testing.assert_allclose(g32, g64, rtol=1e-3, atol=1e-5 * np.abs(g64).max())


def test_conv_rejects_ragged_points():
    with pytest.raises((DimensionMismatch, ValueError)):
        DriftModel(9, "hadamard", hidden=(4,), arch="conv", point_dim=2)


def test_pinned_nu_zeroes_one_set(rng):
    sets = [[0, 1], [4, 5, 6]]
    a, b = sample_nu({"kind": "pinned", "sets": sets}, 400, 8, rng)
    np.testing.assert_array_equal(b, 1 - a)
    zero = a == 0
    hit = [np.all(zero[:, s], axis=1) for s in sets]
    assert np.all(hit[0] | hit[1])
    assert 0.4 < hit[0].mean() < 0.6
    free = np.ones(8, bool)
    free[[0, 1, 4, 5, 6]] = False
    assert np.all(a[:, free] == a[:, [2]])
