"""Euler / Euler-Maruyama transport along operator paths.

A drift source is any object with ``drifts(alpha, beta, x) -> (eta0, eta1)``
taking operators and a batch ``x`` of shape (n, d): a trained
:class:`~opflow.drift_model.DriftModel`, the Gaussian oracle, or a
reward-tilted wrapper from :mod:`opflow.posterior`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MaskScheduleMismatch, NonFiniteState, SingularOperator
from .interpolant import score_from_drift
from .paths import PathSchedule

NOISE_VARIANTS = ("standard", "alpha_half")


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step integration settings.

    ``eps`` is a constant, a callable of t, or a table of ``(t, value)``
    pairs interpolated linearly. ``pin`` lists coordinates whose increments
    are forced to zero. The grid is ``t_k = t_start + k (t_end - t_start) / K``.
    """

    steps: int = 100
    eps: float | Callable[[float], float] | Sequence = 0.0
    noise: str = "standard"
    pin: tuple[int, ...] = ()
    seed: int = 0
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.noise not in NOISE_VARIANTS:
            raise ValueError(f"noise must be one of {NOISE_VARIANTS}")
        if not 0.0 <= self.t_start < self.t_end <= 1.0:
            raise ValueError("need 0 <= t_start < t_end <= 1")
        if not callable(self.eps) and np.any(np.asarray(self.eps_table()[1]) < 0):
            raise ValueError("diffusion coefficient must be non-negative")

    def eps_table(self):
        if np.ndim(self.eps) == 0:
            return np.array([0.0, 1.0]), np.array([float(self.eps)] * 2)
        tab = np.asarray(self.eps, dtype=float)
        return tab[:, 0], tab[:, 1]

    def eps_at(self, t: float) -> float:
        if callable(self.eps):
            val = float(self.eps(t))
            if val < 0:
                raise ValueError(f"negative diffusion coefficient {val} at t={t}")
            return val
        ts, vs = self.eps_table()
        return float(np.interp(t, ts, vs))

    @property
    def grid(self) -> np.ndarray:
        return self.t_start + (self.t_end - self.t_start) * np.arange(self.steps + 1) / self.steps


def _free_mask(dim: int, pin) -> np.ndarray | None:
    if pin is None or len(pin) == 0:
        return None
    free = np.ones(dim, dtype=bool)
    free[np.asarray(list(pin), dtype=int)] = False
    return free


def _run(source, path: PathSchedule, x_init, config: IntegrationConfig, stochastic: bool, rng, store: bool):
    x = np.array(x_init, dtype=float, copy=True)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != path.dim:
        raise ValueError(f"state dimension {x.shape[1]} does not match path dimension {path.dim}")
    free = _free_mask(path.dim, config.pin)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    ts = config.grid
    h = (config.t_end - config.t_start) / config.steps
    traj = [x.copy()] if store else None
    for k in range(config.steps):
        p = path(ts[k])
        e0, e1 = source.drifts(p.alpha, p.beta, x)
        inc = h * (p.alpha_dot.apply(e0) + p.beta_dot.apply(e1))
        eps = config.eps_at(ts[k]) if stochastic else 0.0
        if eps > 0.0:
            z = rng.standard_normal(x.shape)
            if config.noise == "standard":
                try:
                    score = score_from_drift(p.alpha, e0)
                except SingularOperator as exc:
                    raise SingularOperator(f"alpha singular at t={ts[k]:.6g}; use noise='alpha_half'") from exc
                inc = inc + h * eps * score + np.sqrt(2.0 * eps * h) * z
            else:
                inc = inc - h * eps * e0 + np.sqrt(2.0 * eps * h) * p.alpha.sqrt().apply(z)
        if free is None:
            x = x + inc
        else:
            x[:, free] += inc[:, free]
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state after step {k + 1} (t={ts[k + 1]:.6g})")
        if store:
            traj.append(x.copy())
    if store:
        out = np.stack(traj)
        return out[:, 0] if single else out
    return x[0] if single else x


def integrate_ode(source, path: PathSchedule, x_init, config: IntegrationConfig, store: bool = True):
    """Forward Euler for dX = (alpha_dot eta0 + beta_dot eta1) dt.

    Returns the trajectory of shape (K+1, ...) or only the final state when
    ``store`` is False.
    """
    return _run(source, path, x_init, config, False, None, store)


def integrate_sde(source, path: PathSchedule, x_init, config: IntegrationConfig, store: bool = True, rng=None):
    """Euler-Maruyama with a score correction of strength eps_t.

    ``standard``:   dX = (alpha_dot - eps alpha^{-1}) eta0 dt + beta_dot eta1 dt + sqrt(2 eps) dW
    ``alpha_half``: dX = (alpha_dot - eps) eta0 dt + beta_dot eta1 dt + sqrt(2 eps) alpha^{1/2} dW,
    which stays well defined where alpha has zero entries.
    """
    return _run(source, path, x_init, config, True, rng, store)


def generate(source, path: PathSchedule, x_obs, config: IntegrationConfig, n: int | None = None, store: bool = False):
    """Run a generation task from observed data.

    The initial state is I(alpha_0, beta_0) built from ``x_obs`` and fresh
    Gaussian noise. Coordinates pinned by the path (alpha == 0 throughout) or
    by ``config.pin`` keep their observed values bit for bit.
    """
    x_obs = np.asarray(x_obs, dtype=float)
    single = x_obs.ndim == 1 and n is None
    obs = np.atleast_2d(x_obs)
    if n is not None:
        obs = np.broadcast_to(obs, (n, path.dim)) if obs.shape[0] == 1 else obs
        if obs.shape[0] != n:
            raise ValueError("x_obs rows do not match n")
    pin = tuple(sorted(set(path.pinned) | set(config.pin)))
    if pin:
        idx = np.asarray(pin)
        for t in (config.t_start, 0.5 * (config.t_start + config.t_end), config.t_end):
            a = path(t).alpha
            if not a.is_diagonal or np.any(a.diagonal()[idx] != 0.0):
                raise MaskScheduleMismatch(f"alpha is not zero on pinned coordinates at t={t}")
    init_rng, dyn_rng = np.random.default_rng(config.seed).spawn(2)
    p0 = path(config.t_start)
    z = init_rng.standard_normal(obs.shape)
    x = p0.alpha.apply(z) + p0.beta.apply(obs)
    if pin:
        x[:, idx] = obs[:, idx]
    cfg = IntegrationConfig(config.steps, config.eps, config.noise, pin, config.seed, config.t_start, config.t_end)
    stochastic = callable(cfg.eps) or np.any(cfg.eps_table()[1] > 0)
    out = _run(source, path, x, cfg, bool(stochastic), dyn_rng, store)
    if single:
        return out[:, 0] if store else out[0]
    return out
