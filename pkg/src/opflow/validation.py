"""Self-checks of the closed-form references against independent computations."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .interpolant import GaussianGaussian, gaussian_exact_drifts, gaussian_score, score_from_drift
from .operators import Diagonal
from .phi4 import Phi4Params, energy, gaussian_energy_fourier
from .posterior import QuadraticReward, gaussian_posterior_oracle

_trapz = getattr(np, "trapezoid", None) or np.trapz


class Check(NamedTuple):
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def drift_binning(n: int = 1_000_000, bins: int = 50, alpha: float = 0.5, beta: float = 0.5, seed: int = 0) -> Check:
    """Binned Monte Carlo conditional means against the d = 1 Gaussian drifts.

    Interior bins (central 80% by count) are compared with a relative
    tolerance of 5%, measured against max(|reference|, sd) where sd is the
    marginal standard deviation of x0 or x1; eta0 changes sign inside the
    range and a bare relative error is undefined there.
    """
    rng = np.random.default_rng(seed)
    g = GaussianGaussian(np.array([0.3]), np.array([[1.5]]))
    x0, x1 = g.sample(n, rng)
    I = alpha * x0[:, 0] + beta * x1[:, 0]
    edges = np.quantile(I, np.linspace(0.0, 1.0, bins + 1))
    which = np.clip(np.searchsorted(edges, I, side="right") - 1, 0, bins - 1)
    worst = 0.0
    for b in range(bins // 10, bins - bins // 10):
        sel = which == b
        xc = I[sel].mean()
        e0, e1 = gaussian_exact_drifts(g, alpha, beta, np.array([[xc]]))
        for mc, ref, sd in ((x0[sel, 0].mean(), e0[0, 0], 1.0), (x1[sel, 0].mean(), e1[0, 0], np.sqrt(1.5))):
            worst = max(worst, abs(mc - ref) / max(abs(ref), sd))
    return Check("drift_binning", worst, 0.05)


def _random_case(rng, d):
    A = rng.standard_normal((d, d))
    cov = A @ A.T + 0.5 * np.eye(d)
    g = GaussianGaussian(rng.standard_normal(d), cov)
    a = rng.uniform(0.1, 1.0, d) * rng.choice([-1, 1], d)
    b = rng.uniform(0.1, 1.0, d)
    return g, Diagonal(a), Diagonal(b), rng.standard_normal((1, d)) * 2


def drift_identity(n: int = 1000, seed: int = 1) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g, a, b, x = _random_case(rng, int(rng.integers(1, 9)))
        e0, e1 = gaussian_exact_drifts(g, a, b, x)
        worst = max(worst, float(np.abs(a.apply(e0) + b.apply(e1) - x).max()))
    return Check("alpha_eta0_plus_beta_eta1", worst, 1e-10)


def score_identity(n: int = 1000, seed: int = 2) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g, a, b, x = _random_case(rng, int(rng.integers(1, 9)))
        e0, _ = gaussian_exact_drifts(g, a, b, x)
        worst = max(worst, float(np.abs(score_from_drift(a, e0) - gaussian_score(g, a, b, x)).max()))
    return Check("score_from_drift", worst, 1e-9)


def posterior_quadrature() -> Check:
    """Gaussian posterior moments against trapezoid quadrature in 1D."""
    worst = 0.0
    for m, s, A, b in ((0.0, 1.0, -1.0, 0.5), (0.7, 2.0, -0.3, -1.0), (-1.0, 0.5, 0.5, 0.2)):
        mr, Sr = gaussian_posterior_oracle([m], [[s]], QuadraticReward(A, b))
        x = np.linspace(-40, 40, 400001)
        logw = -0.5 * (x - m) ** 2 / s + 0.5 * A * x * x + b * x
        w = np.exp(logw - logw.max())
        Z = _trapz(w, x)
        mq = _trapz(x * w, x) / Z
        vq = _trapz((x - mq) ** 2 * w, x) / Z
        worst = max(worst, abs(mq - mr[0]), abs(vq - Sr[0, 0]))
    return Check("posterior_quadrature", worst, 1e-8)


def phi4_energy_bruteforce(seed: int = 3) -> Check:
    """Compare with a loop over all ordered site pairs, counting lattice links."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for L in (2, 3, 4):
        p = Phi4Params(L=L, chi=1.3, kappa=-0.7, gamma=0.9)
        phi = rng.standard_normal((L, L))
        sites = [(i, j) for i in range(L) for j in range(L)]
        grad = 0.0
        for a in sites:
            for b in sites:
                if a == b:
                    continue
                links = sum(
                    ((a[0] + s * e[0]) % L, (a[1] + s * e[1]) % L) == b
                    for e in ((1, 0), (0, 1))
                    for s in (1, -1)
                )
                grad += 0.5 * links * (phi[a] - phi[b]) ** 2
        ref = 0.5 * p.chi * grad + sum(0.5 * p.kappa * phi[s] ** 2 + 0.25 * p.gamma * phi[s] ** 4 for s in sites)
        worst = max(worst, abs(energy(phi, p) - ref) / abs(ref))
    return Check("phi4_energy_bruteforce", worst, 1e-10)


def phi4_parseval(seed: int = 4) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for L in (2, 4, 8):
        p = Phi4Params(L=L, chi=0.8, kappa=1.5, gamma=0.0, beta0=1.5)
        phi = rng.standard_normal((L, L))
        real = energy(phi, p)
        worst = max(worst, abs(gaussian_energy_fourier(phi, p) - real) / abs(real))
    return Check("phi4_parseval", worst, 1e-8)


def run_all(n_mc: int = 1_000_000, bins: int = 50) -> list[Check]:
    return [
        drift_binning(n_mc, bins),
        drift_identity(),
        score_identity(),
        posterior_quadrature(),
        phi4_energy_bruteforce(),
        phi4_parseval(),
    ]
