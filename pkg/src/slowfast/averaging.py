"""Averaged drift, averaged equation, and mixing diagnostics.

The averaged drift is the expectation of ``F(x, .)`` under the invariant law
of the frozen fast equation. It is estimated here by ergodic time averaging
over an ensemble of frozen fast trajectories; the normalising constant of the
Gibbs density is never needed. For models whose fast drift is
``-kappa * y + offset(x)`` the invariant law is Gaussian and
:func:`gibbs_fbar_oracle` evaluates the average by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .model import ModelSpec, _pad, _padded_size, nemytskii
from .simulator import ensemble_generators, run_frozen_fast
from .spectral import (
    OperatorSpec,
    SpectralField,
    basis_matrix,
    collocation_points,
    grid_values,
    spectral_coeffs,
)


@dataclass(frozen=True)
class FbarEstimate:
    value: SpectralField
    standard_error: np.ndarray
    burn_in: float
    horizon: float
    ensemble: int

    @property
    def aggregate_se(self) -> float:
        return float(np.sqrt(np.sum(self.standard_error**2)))


@dataclass(frozen=True)
class MixingReport:
    decay_rate: float
    amplitude: float
    time_grid: np.ndarray
    estimates: np.ndarray
    standard_errors: np.ndarray
    used: np.ndarray
    residuals: np.ndarray
    r_squared: float
    verdict: str
    log_intercept: float = field(default=float("nan"))

    @property
    def confirmed(self) -> bool:
        return self.verdict == "mixing confirmed"


def relaxation_time(m: ModelSpec) -> float:
    return 1.0 / (m.op_B.smallest_eigenvalue + m.kappa)


def default_burn_in(m: ModelSpec) -> float:
    """Five relaxation times of the slowest fast mode."""
    return 5.0 * relaxation_time(m)


def default_fast_dt(m: ModelSpec) -> float:
    return 0.1 / m.op_B.smallest_eigenvalue


def _round_dt(T, dt):
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return T / steps


def estimate_fbar(
    x: SpectralField,
    m: ModelSpec,
    burn_in: float | None = None,
    horizon: float = 20.0,
    ensemble: int = 16,
    seed: int = 0,
    stream: int = 0,
    dt: float | None = None,
    y0: SpectralField | None = None,
) -> FbarEstimate:
    """Ergodic estimate of the averaged drift at ``x``.

    Each of ``ensemble`` frozen fast trajectories (intrinsic time, started at
    ``y0``, zero by default) contributes the time average of ``F(x, Y(s))``
    over ``s`` in ``[burn_in, horizon)``. The reported value is the ensemble
    mean; per-mode standard errors come from the spread between members.
    """
    burn_in = default_burn_in(m) if burn_in is None else burn_in
    if not burn_in > 0 or not horizon > burn_in:
        raise DomainError(f"need horizon > burn_in > 0, got burn_in={burn_in}, horizon={horizon}")
    if ensemble < 2:
        raise DomainError("ensemble must contain at least two members")
    n = x.basis_size
    dt = _round_dt(horizon, default_fast_dt(m) if dt is None else dt)
    y_start = np.zeros(n) if y0 is None else y0.coeffs
    gens = ensemble_generators(seed, range(ensemble), stream)
    _, f_mean, _ = run_frozen_fast(x.coeffs, y_start, horizon, m, dt, gens, average_from=burn_in)
    value = f_mean.mean(axis=0)
    se = f_mean.std(axis=0, ddof=1) / math.sqrt(ensemble)
    return FbarEstimate(SpectralField(value), se, burn_in, horizon, ensemble)


def gaussian_fast_moments(x: np.ndarray, m: ModelSpec, grid_size: int | None = None):
    """Pointwise mean and variance of the Gaussian invariant law of the fast field.

    Returns ``(mean_coeffs, grid_mean, grid_var)``; grid quantities live on the
    ``grid_size``-point collocation grid (the dynamics' own grid by default).
    """
    if not m.linear_in_y:
        raise DomainError(f"model {m.name!r} does not declare g = -kappa*y + offset(x)")
    n = x.shape[-1]
    size = n if grid_size is None else grid_size
    rate = m.op_B.eigenvalues(n) + m.kappa
    xi_n = collocation_points(size)
    xg = grid_values(_pad(x, size) if size != n else x)
    offset = np.asarray(m.g_offset(xi_n, xg), dtype=float)
    offset = np.broadcast_to(offset, xg.shape)
    h_coeffs = spectral_coeffs(offset)[..., :n]
    mean = h_coeffs / rate
    grid_mean = grid_values(_pad(mean, size) if size != n else mean)
    E = basis_matrix(n, xi_n)
    grid_var = (E**2) @ (1.0 / (2.0 * rate))
    return mean, grid_mean, grid_var


def gibbs_fbar_coeffs(x: np.ndarray, m: ModelSpec, nodes: int = 60) -> np.ndarray:
    """Array version of :func:`gibbs_fbar_oracle` (leading batch axes allowed)."""
    if nodes < 40:
        raise DomainError("use at least 40 Gauss-Hermite nodes")
    n = x.shape[-1]
    size = _padded_size(n) if m.padding else n
    _, gm, gv = gaussian_fast_moments(x, m, size)
    t, w = np.polynomial.hermite.hermgauss(nodes)
    xi = collocation_points(size)
    xg = grid_values(_pad(x, size) if size != n else x)
    z = gm[..., None] + np.sqrt(2.0 * gv)[:, None] * t
    vals = np.asarray(m.f(xi[:, None], xg[..., None], z), dtype=float)
    expect = (np.broadcast_to(vals, z.shape) @ w) / math.sqrt(math.pi)
    return spectral_coeffs(expect)[..., :n]


def gibbs_fbar_oracle(x: SpectralField, m: ModelSpec, nodes: int = 60) -> SpectralField:
    """Averaged drift under the Gaussian invariant law of a linear-in-y fast equation.

    The fast mode ``k`` is stationary Normal(h_k(x) / (mu_k + kappa), 1 / (2 (mu_k + kappa)))
    independently across modes, so the fast field at each collocation point is
    Gaussian; ``E f(xi, x(xi), Z(xi))`` is computed by Gauss-Hermite quadrature
    and projected back onto the sine basis.
    """
    return SpectralField(gibbs_fbar_coeffs(x.coeffs, m, nodes))


def solve_averaged(
    x0: SpectralField,
    fbar: Callable[[SpectralField], SpectralField],
    T: float,
    h: float,
    op: OperatorSpec | None = None,
) -> list[SpectralField]:
    """Exponential Euler for ``dX = (A X + Fbar(X)) dt``; states at ``0, h, ..., T``."""
    if not T > 0 or not h > 0:
        raise DomainError("T and h must be positive")
    steps = int(round(T / h))
    if steps < 1 or abs(T / h - steps) > 1e-9 * max(1.0, T / h):
        raise DomainError(f"T/h = {T / h} is not a positive integer")
    op = op or OperatorSpec()
    n = x0.basis_size
    lam = op.eigenvalues(n)
    decay = np.exp(-lam * h)
    weight = -np.expm1(-lam * h) / lam
    out = [x0]
    x = x0
    for _ in range(steps):
        x = SpectralField(decay * x.coeffs + weight * fbar(x).coeffs)
        out.append(x)
    return out


def reference_fbar(m: ModelSpec, **estimate_kw) -> Callable[[SpectralField], SpectralField]:
    """Oracle when the model supports it, otherwise a long ergodic estimate."""
    if m.linear_in_y:
        return lambda x: gibbs_fbar_oracle(x, m)
    kw = {"horizon": 100.0 * relaxation_time(m) + default_burn_in(m), "ensemble": 16}
    kw.update(estimate_kw)
    return lambda x: estimate_fbar(x, m, **kw).value


def mixing_diagnostic(
    x: SpectralField,
    y: SpectralField,
    m: ModelSpec,
    time_grid,
    ensemble: int = 1000,
    seed: int = 0,
    stream: int = 0,
    dt: float | None = None,
    fbar: SpectralField | None = None,
    r2_threshold: float = 0.9,
) -> MixingReport:
    """Monte Carlo estimate of ``|E F(x, Y_x(t, y)) - Fbar(x)|`` and its exponential fit.

    The magnitude is bias-corrected by the noise energy of the ensemble mean;
    the reported standard error is the H-norm scale of that noise. Points with
    ``t > 0`` whose estimate is at least twice the standard error enter a
    log-linear least-squares fit.
    """
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("time_grid must be non-negative and strictly increasing")
    if ensemble < 2:
        raise DomainError("ensemble must contain at least two members")
    if fbar is None:
        fbar = reference_fbar(m)(x)
    dt = default_fast_dt(m) if dt is None else dt
    gens = ensemble_generators(seed, range(ensemble), stream)
    yb = np.broadcast_to(y.coeffs, (ensemble, y.basis_size)).copy()
    t_now = 0.0
    est = np.empty(grid.size)
    se = np.empty(grid.size)
    for i, t in enumerate(grid):
        if t > t_now:
            span = t - t_now
            yb, _, _ = run_frozen_fast(x.coeffs, yb, span, m, _round_dt(span, dt), gens)
            t_now = t
        if t == 0.0:
            v = nemytskii(m.f, x.coeffs, y.coeffs, m.padding) - fbar.coeffs
            est[i], se[i] = np.linalg.norm(v), 0.0
            continue
        F = nemytskii(m.f, np.broadcast_to(x.coeffs, yb.shape), yb, m.padding)
        v = F.mean(axis=0) - fbar.coeffs
        noise2 = float(np.sum(F.var(axis=0, ddof=1)) / ensemble)
        est[i] = math.sqrt(max(float(v @ v) - noise2, 0.0))
        se[i] = math.sqrt(noise2)

    used = (grid > 0) & (est >= 2.0 * se) & (est > 0)
    residuals = np.full(grid.size, np.nan)
    if used.sum() < 2:
        return MixingReport(float("nan"), float("nan"), grid, est, se, used, residuals, float("nan"), "inconclusive")
    t_u, logv = grid[used], np.log(est[used])
    slope, intercept = np.polyfit(t_u, logv, 1)
    fit = intercept + slope * t_u
    residuals[used] = logv - fit
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 - float(np.sum((logv - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    rate = -float(slope)
    amplitude = math.exp(intercept) / (1.0 + x.norm() + y.norm())
    verdict = "mixing confirmed" if rate > 0 and r2 >= r2_threshold else "not confirmed"
    return MixingReport(rate, amplitude, grid, est, se, used, residuals, r2, verdict, float(intercept))
