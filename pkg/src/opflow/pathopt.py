"""Offline search for short Hadamard paths.

The objective is the transport kinetic energy

    J = int_0^1 E || alpha_dot eta0 + beta_dot eta1 ||^2 dt,   I ~ I(alpha_t, beta_t),

estimated by the midpoint rule in t and Monte Carlo over the coupling.
Paths are piecewise linear in t through P interior control vectors.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .paths import PathSchedule, tabulated_path

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ParametricPath:
    """alpha at node times j / (P + 1); beta = 1 - alpha.

    ``controls`` has shape (P, d). Entries are clamped to ``box`` on
    construction; the endpoint vectors are never modified.
    """

    alpha0: np.ndarray
    alpha1: np.ndarray
    controls: np.ndarray
    box: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        a0 = np.atleast_1d(np.asarray(self.alpha0, dtype=float)).copy()
        a1 = np.atleast_1d(np.asarray(self.alpha1, dtype=float)).copy()
        c = np.asarray(self.controls, dtype=float).reshape(-1, a0.size)
        for v in (a0, a1, c):
            v.setflags(write=False)
        object.__setattr__(self, "alpha0", a0)
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "controls", np.clip(c, *self.box))

    @classmethod
    def straight(cls, alpha0, alpha1, n_controls: int = 4, box=(0.0, 1.0)) -> "ParametricPath":
        a0 = np.atleast_1d(np.asarray(alpha0, dtype=float))
        a1 = np.atleast_1d(np.asarray(alpha1, dtype=float))
        s = np.arange(1, n_controls + 1)[:, None] / (n_controls + 1)
        return cls(a0, a1, (1 - s) * a0 + s * a1, box)

    @property
    def dim(self) -> int:
        return self.alpha0.size

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.controls.shape[0] + 2)

    @property
    def nodes(self) -> np.ndarray:
        return np.vstack([self.alpha0, self.controls, self.alpha1])

    def with_controls(self, controls) -> "ParametricPath":
        return ParametricPath(self.alpha0, self.alpha1, controls, self.box)

    def schedule(self) -> PathSchedule:
        return tabulated_path(self.times, self.nodes, task="optimized")


def path_length_estimate(path, source, coupling, n_particles: int, n_quadrature: int, rng, return_stderr: bool = False):
    """Midpoint-rule estimate of the kinetic energy of ``path``.

    ``path`` is a :class:`ParametricPath` or a :class:`PathSchedule`. Each
    node draws fresh (x0, x1) pairs from ``rng``; passing an identically
    seeded generator reproduces the estimate exactly.
    """
    sched = path.schedule() if isinstance(path, ParametricPath) else path
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    means = np.empty(n_quadrature)
    variances = np.empty(n_quadrature)
    for q in range(n_quadrature):
        p = sched((q + 0.5) / n_quadrature)
        x0, x1 = coupling.sample(n_particles, rng)
        I = p.alpha.apply(x0) + p.beta.apply(x1)
        e0, e1 = source.drifts(p.alpha, p.beta, I)
        v = p.alpha_dot.apply(e0) + p.beta_dot.apply(e1)
        k = np.sum(v * v, axis=1)
        means[q] = k.mean()
        variances[q] = k.var(ddof=1) if n_particles > 1 else 0.0
    est = float(means.mean())
    if not return_stderr:
        return est
    return est, float(np.sqrt(variances.sum() / n_particles) / n_quadrature)


@dataclass(frozen=True)
class OptimizerConfig:
    """Compass search on the control entries with common random numbers.

    Every objective evaluation reuses the generator seeded by ``seed``, so the
    objective is a deterministic function of the controls. A sweep tries
    +-``step`` on each entry and keeps any improvement; after a sweep with no
    improvement the step is multiplied by ``shrink``.
    """

    n_particles: int = 2000
    n_quadrature: int = 20
    sweeps: int = 30
    step: float = 0.1
    shrink: float = 0.5
    min_step: float = 1e-3
    seed: int = 0


def optimize_path(initial: ParametricPath, source, coupling, config: OptimizerConfig = OptimizerConfig()):
    """Descend the objective over the control points.

    Returns the final path and the objective trace (initial value, then one
    value per sweep). Under common random numbers the trace is non-increasing.
    """

    def objective(path):
        return path_length_estimate(path, source, coupling, config.n_particles, config.n_quadrature, np.random.default_rng(config.seed))

    path = initial
    best = objective(path)
    trace = [best]
    step = config.step
    for sweep in range(config.sweeps):
        improved = False
        for idx in np.ndindex(path.controls.shape):
            for sign in (1.0, -1.0):
                c = path.controls.copy()
                c[idx] += sign * step
                cand = path.with_controls(c)
                if np.array_equal(cand.controls, path.controls):
                    continue
                val = objective(cand)
                if val < best:
                    path, best, improved = cand, val, True
                    break
        trace.append(best)
        log.info("sweep %d objective %.6f step %.4g", sweep + 1, best, step)
        if not improved:
            step *= config.shrink
            if step < config.min_step:
                break
    return path, np.asarray(trace)


def write_path_csv(path: ParametricPath, filename):
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"alpha_{i}" for i in range(path.dim)]])
        for t, row in zip(path.times, path.nodes):
            w.writerow([repr(float(t)), *[repr(float(v)) for v in row]])


def read_path_csv(filename) -> ParametricPath:
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    nodes = np.array([[float(v) for v in r[1:]] for r in rows])
    return ParametricPath(nodes[0], nodes[-1], nodes[1:-1])
