"""Time-parameterised operator schedules t -> (alpha_t, beta_t) with derivatives.

All schedules use the convention that the noise endpoint sits at t=0 and the
data endpoint at t=1. Coordinates are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidPartition, NegativeCoefficient
from .operators import (
    Diagonal,
    LinearOperator,
    OperatorCombination,
    ScalarIdentity,
    combine,
    identity,
    zero,
)


class PathPoint(NamedTuple):
    alpha: LinearOperator
    beta: LinearOperator
    alpha_dot: LinearOperator
    beta_dot: LinearOperator


@dataclass(frozen=True)
class PathSchedule:
    """A differentiable path in operator space.

    ``hadamard`` marks schedules with diagonal alpha and beta = 1 - alpha.
    ``pinned`` lists coordinates where alpha is zero for every t.
    """

    evaluator: Callable[[float], PathPoint]
    dim: int
    task: str
    hadamard: bool = False
    pinned: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, t: float) -> PathPoint:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t={t} outside [0, 1]")
        return self.evaluator(float(t))

    @property
    def start(self) -> PathPoint:
        return self(0.0)

    @property
    def end(self) -> PathPoint:
        return self(1.0)

    def alpha_vector(self, t: float) -> np.ndarray:
        return self(t).alpha.diagonal()


def hadamard_path(
    alpha_fn: Callable[[float], np.ndarray],
    alpha_dot_fn: Callable[[float], np.ndarray],
    dim: int,
    task: str,
    pinned: Sequence[int] = (),
    meta: dict | None = None,
) -> PathSchedule:
    """Build a diagonal schedule with beta = 1 - alpha from vector-valued maps."""

    def evaluate(t: float) -> PathPoint:
        a = np.asarray(alpha_fn(t), dtype=float)
        ad = np.asarray(alpha_dot_fn(t), dtype=float)
        return PathPoint(Diagonal(a), Diagonal(1.0 - a), Diagonal(ad), Diagonal(-ad))

    return PathSchedule(
        evaluate, dim, task, hadamard=True, pinned=tuple(sorted(pinned)), meta=meta or {}
    )


def diagonal_path(dim: int) -> PathSchedule:
    """alpha_t = (1 - t) Id, beta_t = t Id."""
    one = identity(dim)
    minus = ScalarIdentity(-1.0, dim)

    def evaluate(t):
        return PathPoint(ScalarIdentity(1.0 - t, dim), ScalarIdentity(t, dim), minus, one)

    return PathSchedule(evaluate, dim, "diagonal", hadamard=True)


def _mask_vector(dim: int, indices: Sequence[int]) -> np.ndarray:
    mask = np.zeros(dim, dtype=bool)
    idx = np.asarray(list(indices), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= dim):
        raise IndexError(f"mask index out of range for dimension {dim}")
    mask[idx] = True
    return mask


def inpainting_path(dim: int, observed: Sequence[int]) -> PathSchedule:
    """Generate the coordinates outside ``observed`` while holding the rest.

    alpha is 0 on observed coordinates and 1 - t elsewhere.
    """
    obs = _mask_vector(dim, observed)
    free = (~obs).astype(float)

    return hadamard_path(
        lambda t: (1.0 - t) * free,
        lambda t: -free,
        dim,
        "inpainting",
        pinned=np.flatnonzero(obs).tolist(),
        meta={"observed": np.flatnonzero(obs).tolist()},
    )


def blockwise_path(dim: int, blocks: Sequence[Sequence[int]]) -> PathSchedule:
    """Generate the blocks one after another in K equal time windows.

    Within window j the entries of block j ramp linearly from 1 to 0; earlier
    blocks sit at 0 and later blocks at 1. Derivatives at window boundaries
    are right limits.
    """
    K = len(blocks)
    if K == 0:
        raise InvalidPartition("need at least one block")
    owner = np.full(dim, -1, dtype=int)
    for j, block in enumerate(blocks):
        for i in block:
            if not 0 <= i < dim:
                raise InvalidPartition(f"index {i} outside [0, {dim})")
            if owner[i] >= 0:
                raise InvalidPartition(f"index {i} appears in more than one block")
            owner[i] = j
    if np.any(owner < 0):
        raise InvalidPartition(f"blocks do not cover indices {np.flatnonzero(owner < 0).tolist()}")

    def window(t):
        j = min(int(np.floor(t * K)), K - 1)
        return j, t * K - j

    def alpha_fn(t):
        j, s = window(t)
        a = np.where(owner < j, 0.0, 1.0)
        a[owner == j] = 1.0 - s
        return a

    def alpha_dot_fn(t):
        j, _ = window(t)
        return np.where(owner == j, -float(K), 0.0)

    return hadamard_path(
        alpha_fn, alpha_dot_fn, dim, "blockwise", meta={"blocks": [list(b) for b in blocks]}
    )


def corruption_path(
    noise_ops: Sequence[LinearOperator],
    data_ops: Sequence[LinearOperator],
    start: tuple[Sequence[float], Sequence[float]],
    end: tuple[Sequence[float], Sequence[float]],
) -> PathSchedule:
    """Linear interpolation of combination coefficients.

    alpha_t = sum_i a_i(t) A_i and beta_t = sum_i b_i(t) B_i, where
    ``noise_ops = (A_0, ..., A_m)`` and ``data_ops = (B_0, ..., B_n)``;
    ``start`` and ``end`` are ``(a, b)`` coefficient lists.
    """
    a0, b0 = (np.asarray(v, dtype=float) for v in start)
    a1, b1 = (np.asarray(v, dtype=float) for v in end)
    for v in (a0, b0, a1, b1):
        if np.any(v < 0):
            raise NegativeCoefficient(f"negative coefficient in {v.tolist()}")
    if a0.size != len(noise_ops) or a1.size != len(noise_ops):
        raise ValueError("noise coefficient count does not match operators")
    if b0.size != len(data_ops) or b1.size != len(data_ops):
        raise ValueError("data coefficient count does not match operators")
    dim = noise_ops[0].dim

    def signed_sum(coeffs, ops):
        total = zero(dim)
        for c, op in zip(coeffs, ops):
            if c != 0.0:
                total = total + op.scaled(float(c))
        return total

    da, db = a1 - a0, b1 - b0
    alpha_dot = signed_sum(da, noise_ops)
    beta_dot = signed_sum(db, data_ops)

    def evaluate(t):
        alpha = combine(OperatorCombination(list(noise_ops), list((1 - t) * a0 + t * a1)))
        beta = combine(OperatorCombination(list(data_ops), list((1 - t) * b0 + t * b1)))
        return PathPoint(alpha, beta, alpha_dot, beta_dot)

    return PathSchedule(
        evaluate,
        dim,
        "corruption",
        meta={"start": (a0.tolist(), b0.tolist()), "end": (a1.tolist(), b1.tolist())},
    )


def tabulated_path(times: Sequence[float], alphas: np.ndarray, task: str = "tabulated") -> PathSchedule:
    """Piecewise-linear Hadamard path through tabulated alpha vectors.

    Derivatives are right limits at the nodes (left limit at t=1).
    """
    ts = np.asarray(times, dtype=float)
    A = np.atleast_2d(np.asarray(alphas, dtype=float))
    if A.shape[0] != ts.size or ts.size < 2:
        raise ValueError("need at least two nodes, one alpha row per node")
    if ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
        raise ValueError("node times must increase from 0 to 1")
    slopes = np.diff(A, axis=0) / np.diff(ts)[:, None]

    def segment(t):
        return min(int(np.searchsorted(ts, t, side="right")) - 1, ts.size - 2)

    def alpha_fn(t):
        j = segment(t)
        return A[j] + (t - ts[j]) * slopes[j]

    def alpha_dot_fn(t):
        return slopes[segment(t)]

    pinned = np.flatnonzero(np.all(A == 0.0, axis=0)).tolist()
    return hadamard_path(alpha_fn, alpha_dot_fn, A.shape[1], task, pinned=pinned)


def derivative_error(path: PathSchedule, ts: Sequence[float], step: float = 1e-5) -> float:
    """Max abs gap between the analytic derivatives and centred differences."""
    worst = 0.0
    for t in ts:
        p = path(t)
        lo, hi = path(t - step), path(t + step)
        for op, plus, minus in (
            (p.alpha_dot, hi.alpha, lo.alpha),
            (p.beta_dot, hi.beta, lo.beta),
        ):
            fd = (plus.to_dense() - minus.to_dense()) / (2 * step)
            worst = max(worst, float(np.abs(fd - op.to_dense()).max()))
    return worst
