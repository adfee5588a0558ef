"""Trainable drift approximator and the multitask regression loop.

Two conditioning modes are supported:

``full``
    inputs ``[x, diag(alpha), diag(beta)]``, outputs the pair (eta0, eta1).
``hadamard``
    beta = 1 - alpha; a single drift eta = E[x0 - x1 | I = x] is predicted
    from ``[x, alpha]`` and the pair is recovered with
    :func:`hadamard_recover`.

With ``skip=True`` (hadamard only) the prediction is
``x + net((1 - alpha) * x, alpha)``. This uses exact structure of the
Hadamard drift: E[x1 | I = x] depends on x only through ``(1 - alpha) * x``,
and eta - x is a function of that quantity and alpha. Inputs then stay
bounded when x itself is large, as it is for reward-shifted arguments.

``arch="mlp"`` uses a dense network with the given hidden widths.
``arch="conv"`` reads x as a sequence of ``dim / point_dim`` points and uses
:class:`~opflow.nn.SeqConv`, with ``hidden`` = (channels,), one residual
block per entry of ``dilations`` and arithmetic in ``compute`` precision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, NonFiniteLoss
from .interpolant import Coupling
from .nn import MLP, SGD, Adam, SeqConv
from .operators import LinearOperator

log = logging.getLogger(__name__)

MODES = {"full": "pair", "hadamard": "single"}


def hadamard_recover(alpha, x, eta):
    """Drift pair from the single Hadamard drift, using beta = 1 - alpha."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return x + (1.0 - alpha) * eta, x - alpha * eta


class DriftModel:
    def __init__(
        self,
        dim: int,
        mode: str = "hadamard",
        hidden=(256, 256, 256),
        activation="tanh",
        net=None,
        skip: bool = False,
        arch: str = "mlp",
        point_dim: int = 1,
        dilations=(1, 2, 4, 8, 16),
        compute: str = "float64",
    ):
        if mode not in MODES:
            raise ValueError(f"unknown conditioning mode {mode!r}")
        if skip and mode != "hadamard":
            raise ValueError("skip connection is only defined in hadamard mode")
        if arch not in ("mlp", "conv"):
            raise ValueError(f"unknown architecture {arch!r}")
        self.dim = int(dim)
        self.mode = mode
        self.skip = bool(skip)
        self.arch = arch
        self.output = MODES[mode]
        g_in, g_out = (3, 2) if mode == "full" else (2, 1)
        if arch == "conv":
            if self.dim % point_dim:
                raise DimensionMismatch(f"dim {dim} is not a multiple of point_dim {point_dim}")
            if net is None:
                net = SeqConv(self.dim // point_dim, point_dim, g_in, g_out, hidden[0], dilations, activation=activation, compute=compute)
            elif not isinstance(net, SeqConv) or (net.n_in, net.n_out) != (g_in * self.dim, g_out * self.dim):
                raise DimensionMismatch(f"network does not fit mode {mode} at d={dim}")
        else:
            widths = [g_in * self.dim, *hidden, g_out * self.dim]
            if net is None:
                net = MLP(widths, activation)
            elif getattr(net, "widths", None) != widths:
                raise DimensionMismatch(f"network widths {getattr(net, 'widths', None)} do not fit mode {mode} at d={dim}")
        self.net = net

    @property
    def n_params(self) -> int:
        return self.net.params.size

    def init(self, rng: np.random.Generator) -> "DriftModel":
        self.net.init(rng, zero_last=True)
        return self

    def copy(self) -> "DriftModel":
        return DriftModel(self.dim, self.mode, net=self.net.copy(), skip=self.skip, arch=self.arch)

    def describe(self) -> str:
        head = f"mode={self.mode};output={self.output};dim={self.dim};arch={self.arch};activation={self.net.activation};skip={int(self.skip)}"
        if self.arch == "conv":
            return f"{head};{self.net.describe()}"
        return f"{head};widths={','.join(map(str, self.net.widths))}"

    # feature assembly ------------------------------------------------------

    def _features(self, alpha, beta, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionMismatch(f"expected x of shape (n, {self.dim}), got {x.shape}")
        a = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape)
        if self.mode == "hadamard":
            return np.concatenate([(1.0 - a) * x if self.skip else x, a], axis=1)
        b = np.broadcast_to(np.asarray(beta, dtype=float), x.shape)
        return np.concatenate([x, a, b], axis=1)

    def _forward(self, alpha, beta, x):
        z = self._features(alpha, beta, x)
        out, cache = self.net.forward(z)
        if self.skip:
            out = out + np.asarray(x, dtype=float)
        return out, cache

    # public prediction ------------------------------------------------------

    def eta(self, alpha, x):
        """Single Hadamard drift; only in ``hadamard`` mode."""
        if self.mode != "hadamard":
            raise ValueError("single drift is only predicted in hadamard mode")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out, _ = self._forward(alpha, None, np.atleast_2d(x))
        return out[0] if single else out

    def predict(self, alpha, beta, x):
        """(eta0, eta1) for diagonal alpha/beta given as vectors or per-row arrays."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if self.mode == "hadamard":
            eta = self._forward(alpha, None, x2)[0]
            e0, e1 = hadamard_recover(alpha, x2, eta)
        else:
            out = self._forward(alpha, beta, x2)[0]
            e0, e1 = out[:, : self.dim], out[:, self.dim :]
        return (e0[0], e1[0]) if single else (e0, e1)

    def drifts(self, alpha: LinearOperator, beta: LinearOperator, x):
        """Drift-source interface used by the samplers."""
        return self.predict(alpha.diagonal(), None if self.mode == "hadamard" else beta.diagonal(), x)


def loss_batch(model: DriftModel, x0, x1, alpha, beta=None):
    """Mean squared regression loss of a batch and its parameter gradient.

    ``full`` mode regresses eta0 on x0 and eta1 on x1; ``hadamard`` mode
    regresses eta on x0 - x1 with beta = 1 - alpha.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    M = x0.shape[0]
    if M == 0:
        raise EmptyBatch("batch is empty")
    a = np.broadcast_to(np.asarray(alpha, dtype=float), x0.shape)
    if model.mode == "hadamard":
        b = 1.0 - a
        target = x0 - x1
    else:
        b = np.broadcast_to(np.asarray(beta, dtype=float), x0.shape)
        target = np.concatenate([x0, x1], axis=1)
    I = a * x0 + b * x1
    out, cache = model._forward(a, b, I)
    resid = out - target
    loss = float(np.sum(resid * resid) / M)
    if not np.isfinite(loss):
        raise NonFiniteLoss(
            f"loss={loss}; max|out|={np.nanmax(np.abs(out))}, "
            f"nan params={int(np.isnan(model.net.params).sum())}"
        )
    grad = model.net.backward(cache, 2.0 * resid / M)
    return loss, grad


# alpha/beta samplers -------------------------------------------------------


def sample_nu(spec, n: int, dim: int, rng: np.random.Generator, mode: str = "hadamard"):
    """Draw n diagonal (alpha, beta) rows from the distribution named by ``spec``.

    ``spec`` is a name or a dict with key ``kind``:

    * ``uniform``   i.i.d. U[0,1] entries (alpha and beta independently in full mode)
    * ``diagonal``  every entry equal to one U[0,1] draw
    * ``blockwise`` constant on contiguous blocks of ``block`` entries, or on
      ``block`` x ``block`` tiles of an L x L grid when ``grid`` = L is given
    * ``masked``    a diagonal draw with a random subset of entries set to 0
      (each entry is zeroed with probability ``rate``, itself U[0, max_rate])
    * ``pinned``    a diagonal draw with one of the coordinate lists in
      ``sets`` (chosen uniformly per row) set to 0
    * ``mixture``   ``components`` = list of (weight, spec)
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec["kind"]
    if kind == "mixture":
        comps = spec["components"]
        w = np.array([c[0] for c in comps], dtype=float)
        choice = rng.choice(len(comps), size=n, p=w / w.sum())
        a = np.empty((n, dim))
        b = np.empty((n, dim))
        for j, (_, sub) in enumerate(comps):
            rows = np.flatnonzero(choice == j)
            if rows.size:
                a[rows], b[rows] = sample_nu(sub, rows.size, dim, rng, mode)
        return a, b
    if kind == "uniform":
        a = rng.random((n, dim))
    elif kind == "diagonal":
        a = np.repeat(rng.random((n, 1)), dim, axis=1)
    elif kind == "blockwise":
        size = int(spec.get("block", 4))
        grid = spec.get("grid")
        if grid:
            L = int(grid)
            nb = -(-L // size)
            tiles = rng.random((n, nb, nb))
            a = np.repeat(np.repeat(tiles, size, axis=1), size, axis=2)[:, :L, :L].reshape(n, L * L)
        else:
            nb = -(-dim // size)
            a = np.repeat(rng.random((n, nb)), size, axis=1)[:, :dim]
    elif kind == "masked":
        max_rate = float(spec.get("max_rate", 0.5))
        rate = rng.random((n, 1)) * max_rate
        keep = rng.random((n, dim)) >= rate
        a = rng.random((n, 1)) * keep
    elif kind == "pinned":
        sets = spec["sets"]
        a = np.repeat(rng.random((n, 1)), dim, axis=1)
        which = rng.integers(len(sets), size=n)
        for j, cols in enumerate(sets):
            a[np.ix_(which == j, np.asarray(cols, dtype=int))] = 0.0
    else:
        raise ValueError(f"unknown nu kind {kind!r}")
    if mode == "hadamard":
        return a, 1.0 - a
    if kind == "uniform":
        return a, rng.random((n, dim))
    return a, sample_nu(spec, n, dim, rng, "hadamard")[0]


@dataclass
class TrainConfig:
    """Regression loop settings.

    ``phases`` is a list of ``(nu_spec, steps)``; when empty a single phase
    of ``steps`` steps with ``nu`` is run. Learning rate decays by ``lr_decay``
    every ``decay_every`` steps.
    """

    batch_size: int = 128
    steps: int = 1000
    lr: float = 1e-3
    lr_decay: float = 1.0
    decay_every: int = 1000
    optimizer: str = "sgd"
    nu: object = "uniform"
    phases: list = field(default_factory=list)
    mode: str = "hadamard"
    hidden: Sequence[int] = (256, 256, 256)
    activation: str = "tanh"
    skip: bool = False
    arch: str = "mlp"
    point_dim: int = 1
    dilations: Sequence[int] = (1, 2, 4, 8, 16)
    compute: str = "float64"
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def schedule(self):
        return list(self.phases) if self.phases else [(self.nu, self.steps)]


def train(coupling: Coupling, config: TrainConfig, model: DriftModel | None = None):
    """Fit a drift model by stochastic gradient descent on fresh batches.

    Returns ``(model, losses)`` where ``losses[k]`` is the batch loss at step k.
    """
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = DriftModel(
            coupling.dim,
            config.mode,
            config.hidden,
            config.activation,
            skip=config.skip,
            arch=config.arch,
            point_dim=config.point_dim,
            dilations=config.dilations,
            compute=config.compute,
        )
        model.init(rng)
    opt_cls = Adam if config.optimizer == "adam" else SGD
    opt = opt_cls(config.lr, config.lr_decay, config.decay_every)
    losses = []
    step = 0
    for nu, n_steps in config.schedule():
        for _ in range(int(n_steps)):
            x0, x1 = coupling.sample(config.batch_size, rng)
            a, b = sample_nu(nu, config.batch_size, coupling.dim, rng, model.mode)
            loss, grad = loss_batch(model, x0, x1, a, b)
            opt.step(model.net.params, grad)
            losses.append(loss)
            step += 1
            if config.log_every and step % config.log_every == 0:
                log.info("step %d loss %.5f", step, float(np.mean(losses[-config.log_every :])))
    return model, np.asarray(losses)


def smoothed(losses, window: int = 100) -> np.ndarray:
    losses = np.asarray(losses, dtype=float)
    if losses.size < window:
        return np.array([losses.mean()])
    c = np.cumsum(np.insert(losses, 0, 0.0))
    return (c[window:] - c[:-window]) / window
