"""Couplings, interpolant sampling and the closed-form Gaussian drifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, SingularCovariance
from .operators import Dense, Diagonal, LinearOperator, as_operator


class Coupling:
    """Joint law of (x0, x1) with x0 ~ N(0, Id) independent of x1."""

    dim: int

    def sample_data(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        # x1 first so data draws do not depend on how noise is consumed
        x1 = self.sample_data(n, rng)
        x0 = rng.standard_normal((n, self.dim))
        return x0, x1


@dataclass(frozen=True, eq=False)
class GaussianGaussian(Coupling):
    """x1 ~ N(mean, cov), x0 ~ N(0, Id), independent."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        S = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if S.shape != (m.size, m.size):
            raise DimensionMismatch(f"covariance shape {S.shape} does not match mean size {m.size}")
        if np.abs(S - S.T).max() > 1e-12:
            raise ValueError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        for name, arr in (("mean", m), ("cov", S), ("chol", chol)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self):
        return self.mean.size

    def sample_data(self, n, rng):
        return self.mean + rng.standard_normal((n, self.dim)) @ self.chol.T

    def marginal(self, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of I(alpha, beta)."""
        A = as_operator(alpha, self.dim).to_dense()
        B = as_operator(beta, self.dim).to_dense()
        return B @ self.mean, A @ A.T + B @ self.cov @ B.T


@dataclass(frozen=True, eq=False)
class IndependentGaussianData(Coupling):
    """x1 drawn by an arbitrary data sampler, x0 ~ N(0, Id)."""

    sampler: Callable[[int, np.random.Generator], np.ndarray]
    dim: int

    def sample_data(self, n, rng):
        x1 = np.asarray(self.sampler(n, rng), dtype=float)
        if x1.shape != (n, self.dim):
            raise DimensionMismatch(f"data sampler returned {x1.shape}, expected {(n, self.dim)}")
        return x1

    @classmethod
    def from_array(cls, data) -> "IndependentGaussianData":
        """Resample rows of ``data`` uniformly with replacement."""
        pool = np.array(data, dtype=float)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise ValueError("data pool must be a non-empty 2D array")
        pool.setflags(write=False)

        def draw(n, rng):
            return pool[rng.integers(0, pool.shape[0], size=n)]

        return cls(draw, pool.shape[1])

    @classmethod
    def from_file(cls, path) -> "IndependentGaussianData":
        from .io import load_samples

        return cls.from_array(load_samples(path))


class InterpolantSample(NamedTuple):
    x0: np.ndarray
    x1: np.ndarray
    I: np.ndarray


def sample_interpolant(
    coupling: Coupling, alpha, beta, rng: np.random.Generator, n: int | None = None
) -> InterpolantSample:
    """Draw (x0, x1) and return them together with alpha x0 + beta x1.

    ``n=None`` returns single vectors, otherwise arrays of ``n`` rows.
    """
    alpha = as_operator(alpha, coupling.dim)
    beta = as_operator(beta, coupling.dim)
    if alpha.dim != coupling.dim or beta.dim != coupling.dim:
        raise DimensionMismatch("operator and coupling dimensions differ")
    x0, x1 = coupling.sample(1 if n is None else n, rng)
    I = alpha.apply(x0) + beta.apply(x1)
    if n is None:
        return InterpolantSample(x0[0], x1[0], I[0])
    return InterpolantSample(x0, x1, I)


def _solve_batched(C: np.ndarray, r: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(C, compute_uv=False)
    if np.any(s[..., -1] <= 1e-12 * np.maximum(1.0, s[..., 0])):
        raise SingularCovariance("alpha alpha^T + beta Sigma beta^T is singular")
    return np.linalg.solve(C, r[..., None])[..., 0]


def gaussian_exact_drifts(coupling: GaussianGaussian, alpha, beta, x) -> tuple[np.ndarray, np.ndarray]:
    """Conditional means E[x0 | I = x] and E[x1 | I = x] for a Gaussian coupling.

    With C = alpha alpha^T + beta Sigma beta^T and r = x - beta m:
        eta0 = alpha^T C^{-1} r,  eta1 = m + Sigma beta^T C^{-1} r.

    ``alpha``/``beta`` are operators (shared by every row of ``x``) or arrays
    holding per-row diagonals of shape ``(n, d)``.
    """
    x = np.asarray(x, dtype=float)
    m, S = coupling.mean, coupling.cov
    d = coupling.dim
    if x.shape[-1] != d:
        raise DimensionMismatch(f"x has trailing dimension {x.shape[-1]}, expected {d}")
    if isinstance(alpha, LinearOperator) or isinstance(beta, LinearOperator) or np.ndim(alpha) < 2:
        A = as_operator(alpha, d).to_dense()
        B = as_operator(beta, d).to_dense()
        C = A @ A.T + B @ S @ B.T
        r = x - B @ m
        s = np.linalg.svd(C, compute_uv=False)
        if s[-1] <= 1e-12 * max(1.0, s[0]):
            raise SingularCovariance("alpha alpha^T + beta Sigma beta^T is singular")
        w = np.linalg.solve(C, r.reshape(-1, d).T).T.reshape(x.shape)
        return w @ A, m + w @ B @ S
    a = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape)
    b = np.broadcast_to(np.asarray(beta, dtype=float), x.shape)
    C = b[..., :, None] * S * b[..., None, :]
    C = C + np.einsum("...i,ij->...ij", a * a, np.eye(d))
    w = _solve_batched(C, x - b * m)
    return a * w, m + np.einsum("ij,...j->...i", S, b * w)


def gaussian_score(coupling: GaussianGaussian, alpha, beta, x) -> np.ndarray:
    """Gradient of the log density of N(beta m, C) at x."""
    mu, C = coupling.marginal(alpha, beta)
    x = np.asarray(x, dtype=float)
    return -np.linalg.solve(C, (x - mu).reshape(-1, coupling.dim).T).T.reshape(x.shape)


def score_from_drift(alpha: LinearOperator, eta0) -> np.ndarray:
    """Score of the interpolant law recovered from E[x0 | I = x].

    Solves alpha^T s = -eta0, i.e. s = -alpha^{-1} eta0 for the symmetric
    structured variants.
    """
    if isinstance(alpha, Dense):
        return -Dense(alpha.matrix.T).apply_inverse(eta0)
    return -alpha.apply_inverse(eta0)


@dataclass(frozen=True, eq=False)
class GaussianOracle:
    """Drift source backed by the closed-form Gaussian conditional means."""

    coupling: GaussianGaussian

    @property
    def dim(self):
        return self.coupling.dim

    def drifts(self, alpha, beta, x):
        return gaussian_exact_drifts(self.coupling, alpha, beta, x)

    def eta(self, alpha, x):
        """Hadamard drift E[x0 - x1 | alpha x0 + (1 - alpha) x1 = x].

        ``alpha`` is a shared vector of shape (d,) or per-row of shape (n, d).
        """
        a = np.asarray(alpha, dtype=float)
        if a.ndim <= 1:
            a = np.broadcast_to(a, (self.dim,))
            e0, e1 = gaussian_exact_drifts(self.coupling, Diagonal(a), Diagonal(1.0 - a), x)
        else:
            e0, e1 = gaussian_exact_drifts(self.coupling, a, 1.0 - a, x)
        return e0 - e1
