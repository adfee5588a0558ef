"""Structured linear operators used as interpolation coefficients.

Four representations are supported: a scalar multiple of the identity, a
diagonal matrix, a multiplier that is diagonal in the 2D discrete Fourier
basis of an L x L grid, and a dense matrix. All operators act on the last
axis of an array, so a batch of vectors of shape ``(n, d)`` is transformed
row by row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeCoefficient,
    NonRealResult,
    NotDiagonal,
    SingularOperator,
)

SINGULAR_TOL = 1e-12
IMAG_TOL = 1e-9


def _check_dim(op: "LinearOperator", x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != op.dim:
        raise DimensionMismatch(
            f"operator of dimension {op.dim} applied to array of shape {x.shape}"
        )
    return x


class LinearOperator:
    """Common interface. Subclasses are immutable."""

    dim: int

    def apply(self, x):
        raise NotImplementedError

    def apply_inverse(self, x):
        raise NotImplementedError

    def apply_adjoint(self, x):
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        """Diagonal entries, for operators that are diagonal in the standard basis."""
        raise NotDiagonal(f"{type(self).__name__} is not diagonal in the standard basis")

    @property
    def is_diagonal(self) -> bool:
        return False

    def scaled(self, c: float) -> "LinearOperator":
        raise NotImplementedError

    def sqrt(self) -> "LinearOperator":
        raise NotDiagonal(f"square root not available for {type(self).__name__}")

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        return add(self, other)

    def __rmul__(self, c: float) -> "LinearOperator":
        return self.scaled(float(c))

    def __matmul__(self, x):
        return self.apply(x)

    def to_record(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ScalarIdentity(LinearOperator):
    c: float
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch("dimension must be positive")
        object.__setattr__(self, "c", float(self.c))

    def apply(self, x):
        x = _check_dim(self, x)
        return self.c * x

    def apply_inverse(self, x):
        x = _check_dim(self, x)
        if abs(self.c) <= SINGULAR_TOL:
            raise SingularOperator(f"scalar multiplier {self.c!r} is singular")
        return x / self.c

    def apply_adjoint(self, x):
        return self.apply(x)

    def to_dense(self):
        return self.c * np.eye(self.dim)

    def diagonal(self):
        return np.full(self.dim, self.c)

    @property
    def is_diagonal(self):
        return True

    def scaled(self, c):
        return ScalarIdentity(c * self.c, self.dim)

    def sqrt(self):
        if self.c < 0:
            raise ValueError("square root of a negative multiplier")
        return ScalarIdentity(np.sqrt(self.c), self.dim)

    def to_record(self):
        return f"scalar {self.dim} : {self.c!r}"


@dataclass(frozen=True, eq=False)
class Diagonal(LinearOperator):
    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float).reshape(-1)
        if e.size == 0:
            raise DimensionMismatch("diagonal operator needs at least one entry")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def dim(self):
        return self.entries.size

    def apply(self, x):
        x = _check_dim(self, x)
        return self.entries * x

    def apply_inverse(self, x):
        x = _check_dim(self, x)
        if np.any(np.abs(self.entries) <= SINGULAR_TOL):
            raise SingularOperator("diagonal operator has entries below tolerance")
        return x / self.entries

    def apply_adjoint(self, x):
        return self.apply(x)

    def to_dense(self):
        return np.diag(self.entries)

    def diagonal(self):
        return self.entries.copy()

    @property
    def is_diagonal(self):
        return True

    def scaled(self, c):
        return Diagonal(c * self.entries)

    def sqrt(self):
        if np.any(self.entries < 0):
            raise ValueError("square root of a negative diagonal entry")
        return Diagonal(np.sqrt(self.entries))

    def to_record(self):
        return f"diagonal {self.dim} : " + " ".join(repr(float(v)) for v in self.entries)


def _fourier_symmetric(g: np.ndarray) -> bool:
    # g[k] must equal g[-k mod L] for real-to-real action
    flipped = np.roll(np.flip(g, axis=(0, 1)), shift=(1, 1), axis=(0, 1))
    return bool(np.allclose(g, flipped, rtol=0.0, atol=1e-12 * max(1.0, np.abs(g).max())))


@dataclass(frozen=True, eq=False)
class FourierDiagonal(LinearOperator):
    """Multiplier applied to the 2D DFT of a field on an L x L periodic grid.

    ``multipliers`` may be given flat (length L**2) or as an (L, L) array
    indexed by wave vector.
    """

    multipliers: np.ndarray
    L: int
    _symmetric: bool = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.multipliers, dtype=float)
        L = int(self.L)
        if L < 1 or g.size != L * L:
            raise DimensionMismatch(f"expected {L}x{L} multipliers, got {g.size} entries")
        g = g.reshape(L, L)
        g.setflags(write=False)
        object.__setattr__(self, "multipliers", g)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "_symmetric", _fourier_symmetric(g))

    @property
    def dim(self):
        return self.L * self.L

    def _transform(self, x, g):
        x = _check_dim(self, x)
        if not self._symmetric:
            raise NonRealResult("Fourier multipliers are not symmetric under k -> -k")
        lead = x.shape[:-1]
        field_ = x.reshape(lead + (self.L, self.L))
        out = np.fft.ifft2(g * np.fft.fft2(field_))
        scale = max(1.0, float(np.abs(x).max(initial=0.0)))
        if np.abs(out.imag).max(initial=0.0) > IMAG_TOL * scale:
            raise NonRealResult("imaginary residue above tolerance")
        return out.real.reshape(x.shape)

    def apply(self, x):
        return self._transform(x, self.multipliers)

    def apply_inverse(self, x):
        if np.any(np.abs(self.multipliers) <= SINGULAR_TOL):
            raise SingularOperator("Fourier multiplier below tolerance")
        return self._transform(x, 1.0 / self.multipliers)

    def apply_adjoint(self, x):
        return self.apply(x)

    def to_dense(self):
        return self.apply(np.eye(self.dim)).T

    def scaled(self, c):
        return FourierDiagonal(c * self.multipliers, self.L)

    def sqrt(self):
        if np.any(self.multipliers < 0):
            raise ValueError("square root of a negative Fourier multiplier")
        return FourierDiagonal(np.sqrt(self.multipliers), self.L)

    def to_record(self):
        vals = " ".join(repr(float(v)) for v in self.multipliers.reshape(-1))
        return f"fourier {self.dim} {self.L} : {vals}"


@dataclass(frozen=True, eq=False)
class Dense(LinearOperator):
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DimensionMismatch(f"dense operator must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def apply(self, x):
        x = _check_dim(self, x)
        return x @ self.matrix.T

    def apply_inverse(self, x):
        x = _check_dim(self, x)
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if s[-1] <= SINGULAR_TOL * max(1.0, s[0]):
            raise SingularOperator("dense operator is rank deficient")
        sol = np.linalg.solve(self.matrix, x.reshape(-1, self.dim).T).T
        return sol.reshape(x.shape)

    def apply_adjoint(self, x):
        x = _check_dim(self, x)
        return x @ self.matrix

    def to_dense(self):
        return self.matrix.copy()

    def scaled(self, c):
        return Dense(c * self.matrix)

    def to_record(self):
        vals = " ".join(repr(float(v)) for v in self.matrix.reshape(-1))
        return f"dense {self.dim} : {vals}"


def identity(dim: int) -> ScalarIdentity:
    return ScalarIdentity(1.0, dim)


def zero(dim: int) -> ScalarIdentity:
    return ScalarIdentity(0.0, dim)


def as_operator(a, dim: int | None = None) -> LinearOperator:
    """Coerce a scalar or vector into a diagonal operator; operators pass through."""
    if isinstance(a, LinearOperator):
        return a
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        if dim is None:
            raise DimensionMismatch("dimension required for scalar operator")
        return ScalarIdentity(float(arr), dim)
    if arr.ndim == 1:
        return Diagonal(arr)
    return Dense(arr)


# module-level functional interface


def apply(op: LinearOperator, x):
    return op.apply(x)


def apply_inverse(op: LinearOperator, x):
    return op.apply_inverse(x)


def apply_adjoint(op: LinearOperator, x):
    return op.apply_adjoint(x)


def add(a: LinearOperator, b: LinearOperator) -> LinearOperator:
    """Sum of two operators in the tightest representation closed under addition."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot add operators of dimension {a.dim} and {b.dim}")
    if isinstance(a, ScalarIdentity) and isinstance(b, ScalarIdentity):
        return ScalarIdentity(a.c + b.c, a.dim)
    if a.is_diagonal and b.is_diagonal:
        return Diagonal(a.diagonal() + b.diagonal())
    fourier = [op for op in (a, b) if isinstance(op, FourierDiagonal)]
    others = [op for op in (a, b) if not isinstance(op, FourierDiagonal)]
    if fourier and all(isinstance(op, ScalarIdentity) for op in others):
        L = fourier[0].L
        total = np.zeros((L, L))
        for op in (a, b):
            total = total + (op.multipliers if isinstance(op, FourierDiagonal) else op.c)
        return FourierDiagonal(total, L)
    return Dense(a.to_dense() + b.to_dense())


@dataclass(frozen=True)
class OperatorCombination:
    """Weighted sum ``sum_i coefficients[i] * operators[i]``.

    By convention ``operators[0]`` is the identity.
    """

    operators: Sequence[LinearOperator]
    coefficients: Sequence[float]

    def __post_init__(self):
        if len(self.operators) != len(self.coefficients) or not self.operators:
            raise DimensionMismatch("need one coefficient per base operator")
        if any(c < 0 for c in self.coefficients):
            raise NegativeCoefficient(f"coefficients must be non-negative: {list(self.coefficients)}")
        dims = {op.dim for op in self.operators}
        if len(dims) != 1:
            raise DimensionMismatch(f"base operators have mixed dimensions {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.operators[0].dim


def combine(comb: OperatorCombination) -> LinearOperator:
    """Evaluate a combination, skipping zero-weight terms."""
    total: LinearOperator = zero(comb.dim)
    for c, op in zip(comb.coefficients, comb.operators):
        if c == 0.0:
            continue
        term = op if c == 1.0 else op.scaled(c)
        if isinstance(total, ScalarIdentity) and total.c == 0.0:
            total = term
        else:
            total = add(total, term)
    return total


def from_record(record: str) -> LinearOperator:
    head, _, body = record.partition(":")
    parts = head.split()
    tag = parts[0].lower()
    vals = np.array([float(v) for v in body.split()])
    dim = int(parts[1])
    if tag == "scalar":
        return ScalarIdentity(float(vals[0]), dim)
    if tag == "diagonal":
        return Diagonal(vals)
    if tag == "fourier":
        return FourierDiagonal(vals, int(parts[2]))
    if tag == "dense":
        return Dense(vals.reshape(dim, dim))
    raise ValueError(f"unknown operator tag {tag!r}")
