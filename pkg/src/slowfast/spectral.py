"""Sine eigenbasis of the Dirichlet Laplacian on (0, 1).

Fields are stored as coefficient vectors in the orthonormal basis
``e_k(xi) = sqrt(2) sin(k pi xi)``, ``k = 1..N``. Physical-space values live on
the ``N`` interior collocation points ``xi_j = j / (N + 1)``; the two
representations are related by a type-I discrete sine transform, normalised so
that the transform pair is exactly inverse and the trapezoidal L2 norm of the
grid values equals the Euclidean norm of the coefficients.

Raw-array helpers (``grid_values``, ``spectral_coeffs``, ``decay``) act on the
last axis so that whole ensembles can be transformed at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import dst

from .errors import DomainError

DEFAULT_BASIS_SIZE = 64


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated coefficient vector ``(x_1, ..., x_N)`` in the sine basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DomainError("coefficients must form a non-empty 1-d sequence")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def basis_size(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(np.zeros(n))

    @classmethod
    def mode(cls, k: int, n: int, amplitude: float = 1.0) -> "SpectralField":
        """The basis vector ``amplitude * e_k`` in an ``n``-mode basis."""
        if not 1 <= k <= n:
            raise DomainError(f"mode {k} outside 1..{n}")
        c = np.zeros(n)
        c[k - 1] = amplitude
        return cls(c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def inner(self, other: "SpectralField") -> float:
        _check_same_size(self, other)
        return float(self.coeffs @ other.coeffs)

    def __add__(self, other):
        _check_same_size(self, other)
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_size(self, other)
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self.basis_size == other.basis_size and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"SpectralField(N={self.basis_size}, norm={self.norm():.6g})"


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples at the interior points ``j / (N + 1)``; zero boundary values are implied."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("grid values must form a non-empty 1-d sequence")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def points(self) -> np.ndarray:
        return collocation_points(self.grid_size)

    def l2_norm(self) -> float:
        """Trapezoidal L2(0, 1) norm, boundary zeros included."""
        return math.sqrt(float(self.values @ self.values) / (self.grid_size + 1))


def _laplacian_law(k):
    return np.pi**2 * np.asarray(k, dtype=float) ** 2


@dataclass(frozen=True)
class OperatorSpec:
    """Diagonal operator ``A e_k = -lambda_k e_k`` given by its eigenvalue law.

    ``eigenvalue_law`` must accept an integer array of mode numbers (1-based)
    and return the matching eigenvalues.
    """

    eigenvalue_law: Callable[[np.ndarray], np.ndarray] = field(default=_laplacian_law)
    name: str = "dirichlet_laplacian"

    @property
    def smallest_eigenvalue(self) -> float:
        return float(self.eigenvalues(1)[0])

    def eigenvalues(self, n: int) -> np.ndarray:
        """``(lambda_1, ..., lambda_n)``; checked positive and non-decreasing."""
        lam = np.asarray(self.eigenvalue_law(np.arange(1, n + 1)), dtype=float)
        if lam.shape != (n,):
            raise DomainError(f"eigenvalue law returned shape {lam.shape}, expected ({n},)")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise DomainError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) < 0):
            raise DomainError("eigenvalues must be non-decreasing")
        return lam


def dirichlet_laplacian(scale: float = 1.0) -> OperatorSpec:
    """``scale * d^2/dxi^2`` with eigenvalues ``scale * pi^2 k^2``."""
    if scale <= 0:
        raise DomainError("scale must be positive")
    if scale == 1.0:
        return OperatorSpec()
    return OperatorSpec(lambda k: scale * _laplacian_law(k), name=f"{scale:g}*dirichlet_laplacian")


def eigenvalue(op: OperatorSpec, k: int) -> float:
    if k < 1:
        raise DomainError(f"modes are 1-indexed, got k={k}")
    return float(np.asarray(op.eigenvalue_law(np.array([k])), dtype=float)[0])


def _check_same_size(a, b):
    if a.basis_size != b.basis_size:
        raise DomainError(f"basis sizes differ: {a.basis_size} vs {b.basis_size}")


def _time_arg(t):
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")


def decay(op: OperatorSpec, n: int, t: float) -> np.ndarray:
    """Per-mode factors ``exp(-lambda_k t)``."""
    _time_arg(t)
    return np.exp(-op.eigenvalues(n) * t)


def phi1(op: OperatorSpec, n: int, t: float) -> np.ndarray:
    """Per-mode ``(1 - exp(-lambda_k t)) / lambda_k``, the exact weight of a constant forcing."""
    _time_arg(t)
    lam = op.eigenvalues(n)
    return -np.expm1(-lam * t) / lam


def apply_semigroup(x: SpectralField, op: OperatorSpec, t: float) -> SpectralField:
    return SpectralField(decay(op, x.basis_size, t) * x.coeffs)


def fractional_norm(x: SpectralField, op: OperatorSpec, a: float) -> float:
    """``(sum_k lambda_k^{2a} x_k^2)^{1/2}`` for ``0 <= a <= 1``."""
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"exponent must lie in [0, 1], got {a}")
    lam = op.eigenvalues(x.basis_size)
    return float(np.linalg.norm(lam**a * x.coeffs))


def collocation_points(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1)


def basis_matrix(n: int, points=None) -> np.ndarray:
    """``E[j, k-1] = e_k(points[j])``; defaults to the collocation points."""
    xi = collocation_points(n) if points is None else np.asarray(points, dtype=float)
    return math.sqrt(2.0) * np.sin(np.pi * np.outer(xi, np.arange(1, n + 1)))


def grid_values(coeffs: np.ndarray) -> np.ndarray:
    """Evaluate coefficient arrays (last axis = modes) on the collocation grid."""
    return dst(coeffs, type=1, axis=-1) / math.sqrt(2.0)


def spectral_coeffs(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`grid_values`."""
    n = np.shape(values)[-1]
    return dst(values, type=1, axis=-1) * (math.sqrt(2.0) / (2 * (n + 1)))


def to_grid(x: SpectralField) -> GridField:
    return GridField(grid_values(x.coeffs))


def to_spectral(v: GridField, basis_size: int | None = None) -> SpectralField:
    if basis_size is not None and basis_size != v.grid_size:
        raise DomainError(f"grid of size {v.grid_size} cannot map to {basis_size} modes")
    return SpectralField(spectral_coeffs(v.values))


def power_law_field(n: int, exponent: float, amplitude: float = 1.0) -> SpectralField:
    """Coefficients ``amplitude * k^(-exponent)``."""
    return SpectralField(amplitude * np.arange(1, n + 1, dtype=float) ** (-exponent))
