"""Problem definitions: pointwise reaction terms, potentials, dissipativity checks.

A model is given by two pointwise maps ``f(xi, x, y)`` and ``g(xi, x, y)``;
the slow and fast drifts are the Nemytskii operators built from them and are
evaluated by collocation on the sine-transform grid.

Models whose fast drift has the form ``g = -kappa * y + offset(xi, x)`` may
declare ``kappa`` and ``g_offset``. The declared ``kappa`` is folded into the
exactly-integrated linear part of the fast equation, and the declared offset
enables the Gaussian invariant-measure oracle in :mod:`slowfast.averaging`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, EvaluationError
from .spectral import (
    OperatorSpec,
    SpectralField,
    collocation_points,
    grid_values,
    spectral_coeffs,
)

Pointwise = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    f: Pointwise
    g: Pointwise
    op_A: OperatorSpec = field(default_factory=OperatorSpec)
    op_B: OperatorSpec = field(default_factory=OperatorSpec)
    # declared sup |dg/dy|; None means "estimate it"
    g_y_sup: float | None = None
    kappa: float = 0.0
    g_offset: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    # regularity exponent of the derivative bounds; documentation only
    eta: float | None = None
    padding: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("kappa must be non-negative")
        if self.g_y_sup is not None and self.g_y_sup < 0:
            raise DomainError("g_y_sup must be non-negative")

    @property
    def linear_in_y(self) -> bool:
        return self.g_offset is not None


@dataclass(frozen=True)
class DissipativityReport:
    strict: bool
    margin: float
    lipschitz_estimate: float
    lipschitz_used: float
    declared_consistent: bool
    weak_constants: tuple[float, float]
    mu: float

    def as_dict(self) -> dict:
        return {
            "strict": self.strict,
            "margin": self.margin,
            "lipschitz_estimate": self.lipschitz_estimate,
            "lipschitz_used": self.lipschitz_used,
            "declared_consistent": self.declared_consistent,
            "weak_c": self.weak_constants[0],
            "weak_C": self.weak_constants[1],
            "mu": self.mu,
        }


def _padded_size(n: int) -> int:
    return int(math.ceil(3 * (n + 1) / 2)) - 1


def _pad(coeffs: np.ndarray, m: int) -> np.ndarray:
    pad = [(0, 0)] * (coeffs.ndim - 1) + [(0, m - coeffs.shape[-1])]
    return np.pad(coeffs, pad)


def nemytskii(fn: Pointwise, x: np.ndarray, y: np.ndarray, padding: bool = False) -> np.ndarray:
    """Collocation evaluation of ``fn`` on coefficient arrays ``x``, ``y``.

    Arrays may carry leading batch axes; the last axis holds the modes.
    """
    n = x.shape[-1]
    if y.shape[-1] != n:
        raise DomainError(f"basis sizes differ: {n} vs {y.shape[-1]}")
    m = _padded_size(n) if padding else n
    if padding:
        x, y = _pad(x, m), _pad(y, m)
    xi = collocation_points(m)
    vals = np.asarray(fn(xi, grid_values(x), grid_values(y)), dtype=float)
    vals = np.broadcast_to(vals, np.broadcast_shapes(x.shape, y.shape))
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise EvaluationError(f"non-finite pointwise value at collocation point xi={xi[bad[-1]]:.6g}")
    return spectral_coeffs(vals)[..., :n]


def nemytskii_F(m: ModelSpec, x: SpectralField, y: SpectralField) -> SpectralField:
    return SpectralField(nemytskii(m.f, x.coeffs, y.coeffs, m.padding))


def nemytskii_G(m: ModelSpec, x: SpectralField, y: SpectralField) -> SpectralField:
    return SpectralField(nemytskii(m.g, x.coeffs, y.coeffs, m.padding))


def potential_U(m: ModelSpec, x: SpectralField, y: SpectralField, quad_points: int = 8) -> float:
    """Potential normalised by ``U(x, 0) = 0``: integral over s in [0, 1] of ``<G(x, s y), y>``.

    Gauss-Legendre with ``quad_points`` nodes; exact when g is a polynomial in y
    of degree below ``2 * quad_points``.
    """
    if quad_points < 2:
        raise DomainError("quad_points must be at least 2")
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    ys = s[:, None] * y.coeffs[None, :]
    xs = np.broadcast_to(x.coeffs, ys.shape)
    G = nemytskii(m.g, xs, ys, m.padding)
    return float(w @ (G @ y.coeffs))


def check_dissipativity(
    m: ModelSpec,
    scan_box: dict | None = None,
    scan_resolution: int = 41,
    basis_size: int = 32,
    n_field_samples: int = 200,
    seed: int = 0,
) -> DissipativityReport:
    """Estimate the Lipschitz constant of g in y and the weak-dissipativity constants.

    ``scan_box`` maps ``"xi"``, ``"x"``, ``"y"`` to ``(low, high)`` ranges;
    the pointwise derivative is estimated by central differences on a
    ``scan_resolution``-per-axis grid. The weak constants use ``c = mu / 2``
    and the least ``C`` consistent with ``n_field_samples`` random fields.
    """
    box = {"xi": (0.0, 1.0), "x": (-3.0, 3.0), "y": (-3.0, 3.0)}
    box.update(scan_box or {})
    for key, (lo, hi) in box.items():
        if not hi > lo:
            raise DomainError(f"empty scan range for {key}: ({lo}, {hi})")
    if scan_resolution < 2:
        raise DomainError("scan_resolution must be at least 2")

    axes = [np.linspace(*box[k], scan_resolution) for k in ("xi", "x", "y")]
    XI, X, Y = np.meshgrid(*axes, indexing="ij")
    step = 1e-5 * np.maximum(1.0, np.abs(Y))
    dg = (np.asarray(m.g(XI, X, Y + step), float) - np.asarray(m.g(XI, X, Y - step), float)) / (2 * step)
    if not np.all(np.isfinite(dg)):
        raise EvaluationError(f"non-finite derivative of g during the scan of model {m.name!r}")
    l_est = float(np.max(np.abs(dg)))

    mu = m.op_B.smallest_eigenvalue
    consistent = True
    if m.g_y_sup is None:
        l_used = l_est
    else:
        consistent = m.g_y_sup >= l_est * (1 - 1e-6)
        l_used = m.g_y_sup if consistent else l_est

    c = 0.5 * mu
    rng = np.random.default_rng(seed)
    k = np.arange(1, basis_size + 1)
    x_amp = max(abs(v) for v in box["x"])
    y_amp = max(abs(v) for v in box["y"])
    xs = x_amp * rng.standard_normal((n_field_samples, basis_size)) / k
    ys = y_amp * rng.standard_normal((n_field_samples, basis_size)) / k
    mu_k = m.op_B.eigenvalues(basis_size)
    G = nemytskii(m.g, xs, ys, m.padding)
    lhs = np.sum((-mu_k * ys + G) * ys, axis=-1) + c * np.sum(ys**2, axis=-1)
    big_C = max(float(np.max(lhs)), 0.0)

    margin = mu - l_used
    return DissipativityReport(
        strict=bool(margin > 0),
        margin=float(margin),
        lipschitz_estimate=l_est,
        lipschitz_used=float(l_used),
        declared_consistent=bool(consistent),
        weak_constants=(c, big_C),
        mu=mu,
    )


def _zeros(xi, x, y):
    return np.zeros(np.broadcast_shapes(np.shape(xi), np.shape(x), np.shape(y)))


def zero_model(op_A: OperatorSpec | None = None, op_B: OperatorSpec | None = None) -> ModelSpec:
    """f = g = 0: decoupled heat equation and stochastic convolution."""
    return ModelSpec(
        name="zero",
        f=_zeros,
        g=_zeros,
        op_A=op_A or OperatorSpec(),
        op_B=op_B or OperatorSpec(),
        g_y_sup=0.0,
        g_offset=lambda xi, x: np.zeros(np.broadcast_shapes(np.shape(xi), np.shape(x))),
    )


def linear_model(kappa: float = 1.0) -> ModelSpec:
    """f = y, g = -kappa y + x. Unbounded, but its invariant measure is Gaussian."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    return ModelSpec(
        name="linear",
        f=lambda xi, x, y: y + 0.0 * (xi + x),
        g=lambda xi, x, y: -kappa * y + x + 0.0 * xi,
        g_y_sup=kappa,
        kappa=kappa,
        g_offset=lambda xi, x: x + 0.0 * xi,
    )


def tanh_model(kappa: float = 1.0) -> ModelSpec:
    """f = tanh(y), g = -kappa y + sin(x). Bounded drifts with bounded derivatives."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    return ModelSpec(
        name="tanh",
        f=lambda xi, x, y: np.tanh(y) + 0.0 * (xi + x),
        g=lambda xi, x, y: -kappa * y + np.sin(x) + 0.0 * xi,
        g_y_sup=kappa,
        kappa=kappa,
        g_offset=lambda xi, x: np.sin(x) + 0.0 * xi,
        eta=0.3,
    )


BUILTIN_MODELS = {
    "zero": lambda kappa=None: zero_model(),
    "linear": lambda kappa=1.0: linear_model(kappa),
    "tanh": lambda kappa=1.0: tanh_model(kappa),
}


def builtin_model(name: str, kappa: float | None = None) -> ModelSpec:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise DomainError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    return factory() if kappa is None else factory(kappa)
