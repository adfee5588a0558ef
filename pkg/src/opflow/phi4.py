"""Two-dimensional lattice phi^4 theory.

Fields are arrays of shape (..., L, L) with periodic boundaries. The energy is

    E(phi) = chi/2 sum_links (phi(a) - phi(b))^2 + kappa/2 sum phi^2 + gamma/4 sum phi^4

where the links are the 2 L^2 pairs (a, a + e) for the two unit vectors e.
For L = 2 the two links joining a site to its single neighbour along an
axis are counted separately, which is what the Fourier multiplier below
diagonalises. A field h adds ``-h sum phi`` to the energy.

Fourier transforms are unitary (``norm="ortho"``).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError, NonFiniteState
from .operators import FourierDiagonal

log = logging.getLogger(__name__)

BLOWUP = 1e3


@dataclass(frozen=True)
class Phi4Params:
    """Lattice parameters.

    ``kappa0`` and ``beta0`` split the energy into the Gaussian part
    E0 = chi/2 sum|grad phi|^2 + beta0/2 sum phi^2 and the remainder
    (kappa - kappa0)/2 sum phi^2 + gamma/4 sum phi^4. The two only add up to
    E when kappa0 == beta0, so kappa0 defaults to beta0 and other values are
    rejected.
    """

    L: int = 8
    chi: float = 1.0
    kappa: float = -1.0
    gamma: float = 1.0
    beta0: float = 1.0
    kappa0: float | None = None
    h: float = 0.0

    def __post_init__(self):
        if self.L < 2:
            raise ConfigError("lattice side must be at least 2")
        if self.chi <= 0 or self.gamma < 0 or self.beta0 <= 0:
            raise ConfigError("need chi > 0, gamma >= 0, beta0 > 0")
        if self.kappa0 is None:
            object.__setattr__(self, "kappa0", self.beta0)
        elif self.kappa0 != self.beta0:
            raise ConfigError(f"kappa0={self.kappa0} must equal beta0={self.beta0} for the split to reproduce E")

    @property
    def dim(self) -> int:
        return self.L * self.L

    def with_field(self, h: float) -> "Phi4Params":
        return replace(self, h=float(h))


def _as_fields(phi, L=None):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        side = L or int(round(np.sqrt(phi.size)))
        phi = phi.reshape(side, side)
    return phi


def energy(phi, params: Phi4Params):
    """Energy of one field (L, L) or a stack (..., L, L), including the -h sum phi term."""
    phi = _as_fields(phi, params.L)
    lead = phi.shape[:-2]
    flat = np.ascontiguousarray(phi.reshape(-1, params.L, params.L))
    grad, sq, quart = kernels.lattice_terms(flat)
    e = 0.5 * params.chi * grad + 0.5 * params.kappa * sq + 0.25 * params.gamma * quart
    if params.h:
        e = e - params.h * flat.sum(axis=(1, 2))
    return e.reshape(lead) if lead else float(e[0])


def magnetization(phi):
    """Lattice mean of the field; works on stacks."""
    return np.asarray(phi, dtype=float).mean(axis=(-2, -1))


def precision_multipliers(params: Phi4Params) -> np.ndarray:
    """M(k) = 2 chi (2 - cos(2 pi k1 / L) - cos(2 pi k2 / L)) + beta0 on the L x L grid."""
    c = np.cos(2.0 * np.pi * np.arange(params.L) / params.L)
    return 2.0 * params.chi * (2.0 - c[:, None] - c[None, :]) + params.beta0


def fourier_precision(params: Phi4Params) -> FourierDiagonal:
    return FourierDiagonal(precision_multipliers(params).ravel(), params.L)


def gaussian_energy_fourier(phi, params: Phi4Params):
    """E0 evaluated as 1/2 sum_k M(k) |phi_hat(k)|^2."""
    ph = np.fft.fft2(_as_fields(phi, params.L), norm="ortho")
    return 0.5 * np.sum(precision_multipliers(params) * np.abs(ph) ** 2, axis=(-2, -1))


def free_field_site_variance(params: Phi4Params) -> float:
    """Per-site variance (1/L^2) sum_k 1/M(k) of the Gaussian with precision M."""
    return float(np.mean(1.0 / precision_multipliers(params)))


def _check(phi, step):
    m = np.max(np.abs(phi))
    if not np.isfinite(m) or m > BLOWUP:
        raise NonFiniteState(f"Langevin chain diverged at step {step} (max |phi| = {m:.3g}); reduce dt")


def langevin_step(phi_hat, params: Phi4Params, dt: float, rng: np.random.Generator, preconditioned: bool = True):
    """One Euler-Maruyama step of overdamped Langevin dynamics in Fourier space.

    ``phi_hat`` is the unitary 2D FFT of a field or stack of fields. With
    preconditioning the mobility is M^{-1}, so the Gaussian part relaxes at
    unit rate in every mode:

        phi_hat - dt (phi_hat + M^{-1}[(kappa - kappa0) phi_hat + gamma F(phi^3) - F(h)])
                + sqrt(2 dt) M^{-1/2} F(noise)

    Without it the mobility is the identity and dt must stay below 2 / max M.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi_hat = np.asarray(phi_hat)
    M = precision_multipliers(params)
    phi = np.fft.ifft2(phi_hat, norm="ortho").real
    force = (params.kappa - params.kappa0) * phi_hat + params.gamma * np.fft.fft2(phi**3, norm="ortho")
    if params.h:
        force = force - np.fft.fft2(np.full(phi.shape, params.h), norm="ortho")
    noise = np.fft.fft2(rng.standard_normal(phi.shape), norm="ortho")
    if preconditioned:
        return phi_hat - dt * (phi_hat + force / M) + np.sqrt(2.0 * dt) * noise / np.sqrt(M)
    return phi_hat - dt * (M * phi_hat + force) + np.sqrt(2.0 * dt) * noise


def sample_mcmc(
    params: Phi4Params,
    n_samples: int,
    burn_in: int = 1000,
    thin: int = 10,
    dt: float = 1e-3,
    rng: np.random.Generator | None = None,
    n_chains: int = 1,
    preconditioned: bool = True,
    init=None,
    return_chains: bool = False,
):
    """Run ``n_chains`` independent chains in lockstep and collect configurations.

    Each chain discards ``burn_in`` steps and then keeps every ``thin``-th
    state until ``n_samples`` configurations are gathered in total
    (ceil(n_samples / n_chains) per chain). Returns an array (n_samples, L, L)
    ordered chain-major within each saved sweep; with ``return_chains`` the
    chain label of each row is returned too.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if rng is None:
        rng = np.random.default_rng()
    L = params.L
    per_chain = -(-n_samples // n_chains)
    phi = np.zeros((n_chains, L, L)) if init is None else np.array(np.broadcast_to(init, (n_chains, L, L)), dtype=float)
    ph = np.fft.fft2(phi, norm="ortho")
    for k in range(burn_in):
        ph = langevin_step(ph, params, dt, rng, preconditioned)
        if k % 100 == 99:
            _check(np.fft.ifft2(ph, norm="ortho").real, k + 1)
    kept = []
    step = burn_in
    for _ in range(per_chain):
        for _ in range(thin):
            ph = langevin_step(ph, params, dt, rng, preconditioned)
            step += 1
        real = np.fft.ifft2(ph, norm="ortho").real
        _check(real, step)
        kept.append(real)
    out = np.stack(kept, axis=1).reshape(-1, L, L)
    chains = np.repeat(np.arange(n_chains), per_chain)
    # keep every chain represented when n_samples is not a multiple of n_chains
    order = np.argsort(np.tile(np.arange(per_chain), n_chains), kind="stable")[:n_samples]
    return (out[order], chains[order]) if return_chains else out[order]


def chain_mean_se(values, chains=None):
    """Mean and standard error; with chain labels the SE comes from per-chain means."""
    v = np.asarray(values, dtype=float)
    if chains is None or np.unique(chains).size < 2:
        return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
    labels = np.unique(chains)
    means = np.array([v[chains == c].mean() for c in labels])
    return float(v.mean()), float(means.std(ddof=1) / np.sqrt(labels.size))


def susceptibility_scan(kappas, base: Phi4Params, n_samples=2000, n_chains=200, burn_in=2000, thin=20, dt=0.01, seed=0):
    """L^2 Var(|m|) over a range of kappa; the peak marks the ordering transition."""
    rows = []
    for i, kappa in enumerate(kappas):
        p = replace(base, kappa=float(kappa))
        rng = np.random.default_rng([seed, i])
        init = rng.standard_normal((n_chains, p.L, p.L))
        m = magnetization(sample_mcmc(p, n_samples, burn_in, thin, dt, rng, n_chains, init=init))
        rows.append((float(kappa), float(np.mean(np.abs(m))), float(p.dim * np.var(np.abs(m)))))
    return rows


def posterior_generate(model, params: Phi4Params, h: float, n: int, steps: int = 200, t0: float = 1e-3, seed: int = 0, prior_pool=None):
    """Draw ``n`` fields from the h-tilted law using a drift trained at h = 0.

    Integrates dX = -eta_r(1 - t, X) dt from t0 to 1 with the linear-reward
    drift eta_r. The state at t0 is built as alpha z + (1 - alpha) x1 with x1
    from ``prior_pool`` (rows of length L^2) or zero when no pool is given.
    """
    from .paths import inpainting_path
    from .posterior import PosteriorDrifts, QuadraticReward
    from .sampler import IntegrationConfig, integrate_ode

    d = params.dim
    rng = np.random.default_rng(seed)
    init_rng, pool_rng = rng.spawn(2)
    a0 = 1.0 - t0
    if prior_pool is None:
        x1 = np.zeros((n, d))
    else:
        pool = np.asarray(prior_pool, dtype=float).reshape(-1, d)
        x1 = pool[pool_rng.integers(0, pool.shape[0], size=n)]
    x = a0 * init_rng.standard_normal((n, d)) + (1.0 - a0) * x1
    source = PosteriorDrifts(model, QuadraticReward(0.0, float(h)))
    cfg = IntegrationConfig(steps=steps, t_start=t0, seed=seed)
    out = integrate_ode(source, inpainting_path(d, ()), x, cfg, store=False)
    return out.reshape(n, params.L, params.L)


REPORT_FIELDS = ["observable", "generative", "generative_se", "mcmc", "mcmc_se", "combined_se", "z", "agree"]


def compare_magnetization(gen_fields, mcmc_fields, mcmc_chains=None):
    """Report rows comparing mean and variance of the magnetization."""
    mg = magnetization(gen_fields)
    mm = magnetization(mcmc_fields)
    rows = []
    g, gse = chain_mean_se(mg)
    m, mse = chain_mean_se(mm, mcmc_chains)
    rows.append(_row("magnetization_mean", g, gse, m, mse))
    # variance SE via the delta method on the centred squares
    vg = float(mg.var(ddof=1))
    vm = float(mm.var(ddof=1))
    _, vgse = chain_mean_se((mg - mg.mean()) ** 2)
    _, vmse = chain_mean_se((mm - mm.mean()) ** 2, mcmc_chains)
    rows.append(_row("magnetization_var", vg, vgse, vm, vmse))
    return rows


def _row(name, g, gse, m, mse):
    comb = float(np.hypot(gse, mse))
    z = (g - m) / comb if comb > 0 else 0.0
    return {
        "observable": name,
        "generative": g,
        "generative_se": gse,
        "mcmc": m,
        "mcmc_se": mse,
        "combined_se": comb,
        "z": z,
        "agree": bool(abs(z) <= 3.0),
    }


def write_report(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})


def phi4_posterior_experiment(
    model,
    params: Phi4Params,
    h: float,
    n: int,
    mcmc: dict | None = None,
    steps: int = 200,
    t0: float = 1e-3,
    seed: int = 0,
    prior_pool=None,
    report_path=None,
):
    """Compare generative posterior samples against MCMC on the tilted energy.

    ``mcmc`` holds keyword arguments for :func:`sample_mcmc` (n_samples,
    burn_in, thin, dt, n_chains). Returns the report rows and writes them as
    CSV when ``report_path`` is given.
    """
    mc = {"n_samples": n, "burn_in": 2000, "thin": 20, "dt": 0.01, "n_chains": 200}
    mc.update(mcmc or {})
    gen = posterior_generate(model, params, h, n, steps, t0, seed, prior_pool)
    rng = np.random.default_rng([seed, 1])
    p_r = params.with_field(h)
    init = rng.standard_normal((mc["n_chains"], params.L, params.L))
    fields, chains = sample_mcmc(p_r, rng=rng, init=init, return_chains=True, **mc)
    rows = compare_magnetization(gen, fields, chains)
    for r in rows:
        r["h"] = float(h)
    if report_path is not None:
        with open(report_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["h", *REPORT_FIELDS])
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})
    log.info("h=%g generative m=%.4f +- %.4f, mcmc m=%.4f +- %.4f", h, rows[0]["generative"], rows[0]["generative_se"], rows[0]["mcmc"], rows[0]["mcmc_se"])
    return rows
