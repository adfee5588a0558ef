"""Reward-tilted sampling from a prior drift without retraining.

For a quadratic reward r(x) = 1/2 <x, A x> + <b, x> the drifts of the tilted
interpolant are the prior drifts evaluated at transformed arguments
(alpha_r, beta_r, x_r). Only diagonal A and diagonal alpha, beta are handled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift_model import hadamard_recover
from .errors import NoSolution, NotDiagonal, NotNormalizable, SingularOperator
from .operators import SINGULAR_TOL, Diagonal, LinearOperator


def _diag(op, dim=None) -> np.ndarray:
    if isinstance(op, LinearOperator):
        return op.diagonal()
    arr = np.asarray(op, dtype=float)
    if arr.ndim > 1:
        raise NotDiagonal("expected a diagonal (vector) operator")
    return arr if dim is None else np.broadcast_to(arr, (dim,)).astype(float)


@dataclass(frozen=True, eq=False)
class QuadraticReward:
    """r(x) = 1/2 sum_i A_i x_i^2 + sum_i b_i x_i with diagonal A.

    ``A`` and ``b`` may be scalars (broadcast) or vectors.
    """

    A: np.ndarray | float = 0.0
    b: np.ndarray | float = 0.0

    def __post_init__(self):
        if isinstance(self.A, LinearOperator):
            if not self.A.is_diagonal:
                raise NotDiagonal("reward operator must be diagonal")
            object.__setattr__(self, "A", self.A.diagonal())
        elif np.ndim(self.A) > 1:
            raise NotDiagonal("reward operator must be diagonal")

    @classmethod
    def from_k(cls, k: float, b=0.0, sign: int = -1) -> "QuadraticReward":
        """A = sign * k^2 Id."""
        return cls(sign * float(k) ** 2, b)

    def A_vec(self, dim):
        return np.broadcast_to(np.asarray(self.A, dtype=float), (dim,)).astype(float)

    def b_vec(self, dim):
        return np.broadcast_to(np.asarray(self.b, dtype=float), (dim,)).astype(float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return 0.5 * np.sum(self.A_vec(d) * x * x, axis=-1) + x @ self.b_vec(d)

    @property
    def is_null(self) -> bool:
        return not np.any(np.asarray(self.A)) and not np.any(np.asarray(self.b))


@dataclass(frozen=True, eq=False)
class RewardTransform:
    alpha: np.ndarray
    beta: np.ndarray
    alpha_r: np.ndarray
    beta_r: np.ndarray
    reward: QuadraticReward
    hadamard: bool
    gain: np.ndarray  # alpha_r / alpha, finite where alpha = 0

    @property
    def alpha_r_op(self):
        return Diagonal(self.alpha_r)

    @property
    def beta_r_op(self):
        return Diagonal(self.beta_r)

    def residual(self) -> np.ndarray:
        """Entrywise gap in beta_r^2 / alpha_r^2 = beta^2 / alpha^2 - A."""
        A = self.reward.A_vec(self.alpha.size)
        return (self.beta_r / self.alpha_r) ** 2 - ((self.beta / self.alpha) ** 2 - A)

    def point(self, x, b=None):
        return reward_point_transform(self, self.alpha, self.beta, x, self.reward.b if b is None else b)


def hadamard_alpha_r(alpha, A):
    """Positive root of (1 - a_r)^2 / a_r^2 = (1 - a)^2 / a^2 - A.

    Written as a / (a + sqrt((1 - a)^2 - a^2 A)), which is the closed form
    multiplied through by its conjugate and has no 0/0 at a = 1, A = -1.
    """
    a = np.asarray(alpha, dtype=float)
    return a * _hadamard_gain(a, A)


def _hadamard_gain(alpha, A):
    a = np.asarray(alpha, dtype=float)
    A = np.broadcast_to(np.asarray(A, dtype=float), a.shape)
    if np.any(A >= 1.0):
        raise NoSolution("positive reward curvature needs k < 1")
    q = (1.0 - a) ** 2 - a * a * A
    # q = 0 with A <= 0 only happens at a = 1, A = 0, where the gain is 1
    invalid = (q < 0.0) | ((q == 0.0) & (A > 0.0))
    if np.any(invalid):
        bad = a[invalid] if a.ndim else a
        raise NoSolution(f"no admissible alpha_r: discriminant <= 0 at alpha={np.ravel(bad)[:4]}")
    return 1.0 / (a + np.sqrt(q))


def solve_reward_operators(alpha, beta, reward: QuadraticReward, hadamard: bool | None = None) -> RewardTransform:
    """Find (alpha_r, beta_r) with beta_r^2 / alpha_r^2 = beta^2 / alpha^2 - A.

    Hadamard inputs (beta = 1 - alpha) get beta_r = 1 - alpha_r. Otherwise
    beta is kept and alpha_r is rescaled.
    """
    a = _diag(alpha)
    b = _diag(beta, a.size)
    a = np.broadcast_to(a, b.shape).astype(float)
    A = reward.A_vec(a.size)
    if hadamard is None:
        hadamard = bool(np.allclose(a + b, 1.0, rtol=0.0, atol=1e-12))
    if hadamard:
        g = _hadamard_gain(a, A)
        ar = a * g
        return RewardTransform(a, b, ar, 1.0 - ar, reward, True, g)
    if np.any(np.abs(a) <= SINGULAR_TOL):
        raise SingularOperator("alpha must be invertible")
    r2 = (b / a) ** 2 - A
    if np.any(r2 <= 0.0):
        raise NoSolution("beta^2 / alpha^2 - A is not positive")
    ar = np.sign(a) * np.abs(b) / np.sqrt(r2)
    return RewardTransform(a, b, ar, b.copy(), reward, False, ar / a)


def reward_point_transform(transform: RewardTransform, alpha, beta, x, b):
    """x_r = alpha_r alpha_r^T beta_r^{-T} (beta^T alpha^{-T} alpha^{-1} x + b).

    ``alpha``/``beta`` must be the pair the transform was solved for.
    """
    ar, br, g = transform.alpha_r, transform.beta_r, transform.gain
    be = np.broadcast_to(_diag(beta), ar.shape)
    if np.any(np.abs(br) <= SINGULAR_TOL):
        raise SingularOperator("beta_r is singular")
    bv = np.broadcast_to(np.asarray(b, dtype=float), ar.shape)
    x = np.asarray(x, dtype=float)
    return g * g * (be / br) * x + ar * ar / br * bv


def posterior_drifts(prior, alpha, beta, x, reward: QuadraticReward, transform: RewardTransform | None = None):
    """Drifts (eta0^r, eta1^r) of the reward-tilted interpolant.

    eta1^r = eta1(alpha_r, beta_r, x_r)
    eta0^r = alpha^{-1} beta beta_r^{-1} alpha_r eta0(alpha_r, beta_r, x_r)
             + alpha^{-1} (x - beta beta_r^{-1} x_r)
    """
    T = transform or solve_reward_operators(alpha, beta, reward)
    a, be = T.alpha, T.beta
    if np.any(np.abs(a) <= SINGULAR_TOL):
        raise SingularOperator("alpha must be invertible")
    xr = reward_point_transform(T, a, be, x, reward.b)
    e0, e1 = prior.drifts(T.alpha_r_op, T.beta_r_op, xr)
    ratio = be / T.beta_r
    eta0 = (ratio * T.alpha_r * e0 + (x - ratio * xr)) / a
    return eta0, e1


def hadamard_posterior_eta(prior, alpha, x, reward: QuadraticReward):
    """Tilted single drift eta^r(alpha, x) = alpha^{-1} alpha_r eta(alpha_r, x_r) + alpha^{-1}(x - x_r).

    ``prior`` is a callable ``eta(alpha, x)`` or an object with an ``eta`` method.
    """
    eta = prior.eta if hasattr(prior, "eta") else prior
    a = _diag(alpha)
    x = np.asarray(x, dtype=float)
    a = np.broadcast_to(a, x.shape[-1:]).astype(float)
    if np.any(np.abs(a) <= SINGULAR_TOL):
        raise SingularOperator("alpha must be invertible")
    T = solve_reward_operators(a, 1.0 - a, reward, hadamard=True)
    xr = reward_point_transform(T, a, 1.0 - a, x, reward.b)
    return (T.alpha_r * eta(T.alpha_r, xr) + (x - xr)) / a


class PosteriorDrifts:
    """Drift source for the tilted law built on a prior drift source.

    Hadamard paths go through the single-drift formula when the prior
    exposes ``eta``; other paths use the general pair formula.
    """

    def __init__(self, prior, reward: QuadraticReward):
        self.prior = prior
        self.reward = reward

    @property
    def dim(self):
        return self.prior.dim

    def drifts(self, alpha, beta, x):
        a = alpha.diagonal()
        b = beta.diagonal()
        if hasattr(self.prior, "eta") and np.allclose(a + b, 1.0, rtol=0.0, atol=1e-12):
            eta = hadamard_posterior_eta(self.prior, a, x, self.reward)
            return hadamard_recover(a, x, eta)
        return posterior_drifts(self.prior, a, b, x, self.reward)

    def eta(self, alpha, x):
        return hadamard_posterior_eta(self.prior, alpha, x, self.reward)


def gaussian_posterior_oracle(mean, cov, reward: QuadraticReward):
    """Mean and covariance of Z^{-1} e^{r(x)} N(x; mean, cov)."""
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    P = np.linalg.inv(S) - np.diag(reward.A_vec(m.size))
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NotNormalizable("Sigma^{-1} - A is not positive definite") from exc
    Sr = np.linalg.inv(P)
    Sr = 0.5 * (Sr + Sr.T)
    mr = Sr @ (np.linalg.solve(S, m) + reward.b_vec(m.size))
    return mr, Sr


def log_reweight(alpha, beta, transform: RewardTransform, x, b=None, x_r=None):
    """R(alpha, beta, x) + log(|alpha_r| / |alpha|) with R = |alpha_r^{-1} x_r|^2/2 - |alpha^{-1} x|^2/2.

    Determinants are products of the diagonal entries.
    """
    a = np.broadcast_to(_diag(alpha), transform.alpha_r.shape)
    if np.any(np.abs(a) <= SINGULAR_TOL) or np.any(np.abs(transform.alpha_r) <= SINGULAR_TOL):
        raise SingularOperator("alpha and alpha_r must be invertible")
    x = np.asarray(x, dtype=float)
    if x_r is None:
        x_r = reward_point_transform(transform, a, beta, x, transform.reward.b if b is None else b)
    R = 0.5 * np.sum((x_r / transform.alpha_r) ** 2, axis=-1) - 0.5 * np.sum((x / a) ** 2, axis=-1)
    return R + np.sum(np.log(np.abs(transform.alpha_r))) - np.sum(np.log(np.abs(a)))
