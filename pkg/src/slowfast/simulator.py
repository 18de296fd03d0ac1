"""Time integration of the slow-fast system and of the frozen fast equation.

Scheme (per macro step of size ``h``, slow state frozen at the step start):

* fast component: ``M_f`` substeps, each an exact per-mode Ornstein-Uhlenbeck
  update over the intrinsic time ``tau = (h / M_f) / eps`` with the nonlinear
  drift frozen at the substep start. The linear part ``-(mu_k + kappa)`` and the
  additive noise are integrated exactly, so the only splitting error comes from
  the nonlinear remainder ``G + kappa * y``;
* slow component: exponential Euler with the drift ``F(x_n, .)`` averaged over
  the fast states visited during the step.

Each trajectory owns a Philox stream keyed by ``(seed, stream, sample_index)``
and consumes Gaussians in (step, substep, mode) order, so an ensemble is
reproducible sample by sample regardless of how it is batched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, EvaluationError
from .model import ModelSpec, nemytskii
from .spectral import SpectralField

log = logging.getLogger(__name__)

SCHEMES = ("exponential_euler",)
SLOW_DRIFTS = ("substep_mean", "left_point")


@dataclass(frozen=True)
class SlowFastState:
    x: SpectralField
    y: SpectralField
    t: float
    epsilon: float

    def __post_init__(self):
        if self.x.basis_size != self.y.basis_size:
            raise DomainError("slow and fast fields must share the basis size")
        if self.t < 0:
            raise DomainError("time must be non-negative")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")


class _Negated:
    """Generator view returning the negated Gaussian stream (antithetic partner)."""

    def __init__(self, gen):
        self._gen = gen

    def standard_normal(self, size=None):
        return -self._gen.standard_normal(size)


@dataclass(frozen=True)
class NoisePlan:
    """Deterministic Gaussian stream for one trajectory.

    With ``antithetic=True`` odd sample indices replay the stream of the
    preceding even index with flipped sign.
    """

    seed: int
    sample_index: int = 0
    stream: int = 0
    antithetic: bool = False

    def generator(self):
        base = self.sample_index // 2 if self.antithetic else self.sample_index
        key = np.array(
            [
                (self.seed & 0xFFFFFFFFFFFFFFFF),
                ((self.stream & 0xFFFFFFFF) << 32) | (base & 0xFFFFFFFF),
            ],
            dtype=np.uint64,
        )
        gen = np.random.Generator(np.random.Philox(key=key))
        if self.antithetic and self.sample_index % 2:
            return _Negated(gen)
        return gen


def ensemble_generators(seed: int, sample_indices: Sequence[int], stream: int = 0, antithetic: bool = False):
    return [NoisePlan(seed, int(i), stream, antithetic).generator() for i in sample_indices]


@dataclass(frozen=True)
class StepperConfig:
    dt_macro: float
    micro_substeps: int = 1
    scheme: str = "exponential_euler"
    slow_drift: str = "substep_mean"

    def __post_init__(self):
        if not self.dt_macro > 0:
            raise DomainError("dt_macro must be positive")
        if int(self.micro_substeps) != self.micro_substeps or self.micro_substeps < 1:
            raise DomainError("micro_substeps must be a positive integer")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.slow_drift not in SLOW_DRIFTS:
            raise DomainError(f"unknown slow drift rule {self.slow_drift!r}")

    @classmethod
    def for_epsilon(cls, dt_macro: float, epsilon: float, mu1: float, per_relaxation: float = 10.0, **kw):
        """Substep count ``ceil(per_relaxation * h * mu_1 / eps)``."""
        return cls(dt_macro, default_substeps(dt_macro, epsilon, mu1, per_relaxation), **kw)


def default_substeps(dt_macro: float, epsilon: float, mu1: float, per_relaxation: float = 10.0) -> int:
    return max(1, int(math.ceil(per_relaxation * dt_macro * mu1 / epsilon - 1e-9)))


def ou_update(y_k, mu_k, drift_k, tau, gaussian):
    """Exact solution over time ``tau`` of ``dY = (-mu_k Y + drift_k) dt + dbeta``."""
    if np.any(np.asarray(tau) <= 0):
        raise DomainError("tau must be positive")
    if np.any(np.asarray(mu_k) <= 0):
        raise DomainError("mu_k must be positive")
    a = np.exp(-mu_k * tau)
    b = -np.expm1(-mu_k * tau) / mu_k
    s = np.sqrt(-np.expm1(-2.0 * mu_k * tau) / (2.0 * mu_k))
    return a * y_k + b * drift_k + s * gaussian


class _Coefficients:
    """Per-mode constants of one stepping configuration."""

    def __init__(self, m: ModelSpec, n: int, h: float, substeps: int, epsilon: float):
        lam = m.op_A.eigenvalues(n)
        self.x_decay = np.exp(-lam * h)
        self.x_phi = -np.expm1(-lam * h) / lam
        rate = m.op_B.eigenvalues(n) + m.kappa
        tau = (h / substeps) / epsilon
        self.y_decay = np.exp(-rate * tau)
        self.y_phi = -np.expm1(-rate * tau) / rate
        self.y_sigma = np.sqrt(-np.expm1(-2.0 * rate * tau) / (2.0 * rate))
        self.kappa = m.kappa


def _draw(gens, substeps, n, noise_scale):
    if gens is None or noise_scale == 0.0:
        return None
    z = np.stack([g.standard_normal((substeps, n)) for g in gens], axis=1)
    return z if noise_scale == 1.0 else noise_scale * z


def _fast_block(m, c, x_frozen, y, substeps, noise, want_f):
    """Advance the fast field over one macro step; optionally average F along the way."""
    f_sum = 0.0
    for j in range(substeps):
        if want_f:
            f_sum = f_sum + nemytskii(m.f, x_frozen, y, m.padding)
        drift = nemytskii(m.g, x_frozen, y, m.padding)
        if c.kappa:
            drift = drift + c.kappa * y
        y = c.y_decay * y + c.y_phi * drift
        if noise is not None:
            y = y + c.y_sigma * noise[j]
    return y, (f_sum / substeps if want_f else None)


def _slow_update(c, x, fdrift):
    return c.x_decay * x + c.x_phi * fdrift


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise EvaluationError("trajectory produced non-finite values")


def _n_steps(T, h):
    n = T / h
    steps = int(round(n))
    if steps < 1 or abs(n - steps) > 1e-9 * max(1.0, n):
        raise DomainError(f"T/h = {n} is not a positive integer")
    return steps


def run_ensemble(
    x0: np.ndarray,
    y0: np.ndarray,
    epsilon: float,
    T: float,
    m: ModelSpec,
    cfg: StepperConfig,
    gens=None,
    noise_scale: float = 1.0,
    record: bool = False,
    check_finite: bool = True,
):
    """Integrate a batch of trajectories; returns final ``(x, y)`` or recorded paths.

    ``x0``/``y0`` have shape ``(B, N)`` (or ``(N,)``, broadcast to the batch
    size implied by ``gens``). ``gens`` holds one generator per trajectory;
    ``None`` or ``noise_scale=0`` integrates the noise-free system. With
    ``record=True`` the return value is ``(times, xs, ys)`` with arrays of
    shape ``(steps + 1, B, N)``.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    steps = _n_steps(T, cfg.dt_macro)
    batch = len(gens) if gens is not None else 1
    x = np.array(np.broadcast_to(x0, (batch,) + np.shape(x0)[-1:]), dtype=float)
    y = np.array(np.broadcast_to(y0, x.shape), dtype=float)
    n = x.shape[-1]
    M = cfg.micro_substeps
    c = _Coefficients(m, n, cfg.dt_macro, M, epsilon)
    left = cfg.slow_drift == "left_point"
    xs, ys = ([x.copy()], [y.copy()]) if record else (None, None)
    for _ in range(steps):
        noise = _draw(gens, M, n, noise_scale)
        f0 = nemytskii(m.f, x, y, m.padding) if left else None
        y_new, fbar = _fast_block(m, c, x, y, M, noise, want_f=not left)
        x = _slow_update(c, x, f0 if left else fbar)
        y = y_new
        if record:
            xs.append(x.copy())
            ys.append(y.copy())
    if check_finite:
        _check_finite(x, y)
    if record:
        times = cfg.dt_macro * np.arange(steps + 1)
        return times, np.stack(xs), np.stack(ys)
    return x, y


def run_frozen_fast(
    x: np.ndarray,
    y0: np.ndarray,
    T_fast: float,
    m: ModelSpec,
    dt: float,
    gens=None,
    noise_scale: float = 1.0,
    average_from: float | None = None,
    record_every: int | None = None,
):
    """Integrate the frozen fast equation in intrinsic time with step ``dt``.

    Returns ``(y_final, f_mean, recorded)``. When ``average_from`` is given,
    ``f_mean`` is the per-trajectory average of ``F(x, Y(t_j))`` over the step
    starts ``t_j >= average_from``. ``recorded`` holds ``(times, ys)`` sampled
    every ``record_every`` steps, initial state included.
    """
    steps = _n_steps(T_fast, dt)
    batch = len(gens) if gens is not None else 1
    y = np.array(np.broadcast_to(y0, (batch,) + np.shape(y0)[-1:]), dtype=float)
    xb = np.broadcast_to(x, y.shape)
    n = y.shape[-1]
    c = _Coefficients(m, n, dt, 1, 1.0)
    first = None if average_from is None else int(math.ceil(average_from / dt - 1e-9))
    f_sum, f_count = np.zeros_like(y), 0
    rec_t, rec_y = [], []
    if record_every:
        rec_t.append(0.0)
        rec_y.append(y.copy())
    for i in range(steps):
        noise = _draw(gens, 1, n, noise_scale)
        if first is not None and i >= first:
            f_sum += nemytskii(m.f, xb, y, m.padding)
            f_count += 1
        y, _ = _fast_block(m, c, xb, y, 1, noise, want_f=False)
        if record_every and (i + 1) % record_every == 0:
            rec_t.append((i + 1) * dt)
            rec_y.append(y.copy())
    _check_finite(y)
    f_mean = None
    if first is not None:
        if f_count == 0:
            raise DomainError("averaging window is empty")
        f_mean = f_sum / f_count
    recorded = (np.array(rec_t), np.stack(rec_y)) if record_every else None
    return y, f_mean, recorded


def step_slowfast(s: SlowFastState, m: ModelSpec, cfg: StepperConfig, noise) -> SlowFastState:
    """One macro step. ``noise`` is a :class:`NoisePlan` or a live generator."""
    gen = noise.generator() if isinstance(noise, NoisePlan) else noise
    x, y = run_ensemble(s.x.coeffs, s.y.coeffs, s.epsilon, cfg.dt_macro, m, cfg, [gen])
    return SlowFastState(SpectralField(x[0]), SpectralField(y[0]), s.t + cfg.dt_macro, s.epsilon)


def simulate(
    x0: SpectralField,
    y0: SpectralField,
    epsilon: float,
    T: float,
    m: ModelSpec,
    cfg: StepperConfig,
    noise: NoisePlan,
) -> list[SlowFastState]:
    if not T > 0:
        raise DomainError("T must be positive")
    if x0.basis_size != y0.basis_size:
        raise DomainError("slow and fast fields must share the basis size")
    times, xs, ys = run_ensemble(
        x0.coeffs, y0.coeffs, epsilon, T, m, cfg, [noise.generator()], record=True
    )
    return [
        SlowFastState(SpectralField(xs[i, 0]), SpectralField(ys[i, 0]), float(times[i]), epsilon)
        for i in range(len(times))
    ]


def simulate_frozen_fast(
    x: SpectralField,
    y0: SpectralField,
    T_fast: float,
    m: ModelSpec,
    cfg: StepperConfig,
    noise: NoisePlan,
) -> list[SpectralField]:
    """Trajectory of ``Y_x(t, y0)`` at multiples of ``cfg.dt_macro / cfg.micro_substeps``
    in intrinsic fast time (``eps = 1``)."""
    dt = cfg.dt_macro / cfg.micro_substeps
    _, _, (_, ys) = run_frozen_fast(x.coeffs, y0.coeffs, T_fast, m, dt, [noise.generator()], record_every=1)
    return [SpectralField(v[0]) for v in ys]


def run_hasminskii_pair(
    x0: np.ndarray,
    y0: np.ndarray,
    epsilon: float,
    T: float,
    m: ModelSpec,
    cfg: StepperConfig,
    block_steps: int,
    gens,
):
    """Simulate ``(X, Y)`` and the auxiliary pair with the slow input frozen on blocks.

    The auxiliary fast field and slow drift see ``X`` at the start of each block of
    ``block_steps`` macro steps; both pairs consume the same Gaussian draws.
    Returns ``(x, x_aux)`` at time ``T``.
    """
    if block_steps < 1:
        raise DomainError("block_steps must be at least 1")
    steps = _n_steps(T, cfg.dt_macro)
    batch = len(gens)
    x = np.array(np.broadcast_to(x0, (batch,) + np.shape(x0)[-1:]), dtype=float)
    y = np.array(np.broadcast_to(y0, x.shape), dtype=float)
    xa, ya = x.copy(), y.copy()
    n = x.shape[-1]
    M = cfg.micro_substeps
    c = _Coefficients(m, n, cfg.dt_macro, M, epsilon)
    x_block = x.copy()
    for i in range(steps):
        if i % block_steps == 0:
            x_block = x.copy()
        noise = _draw(gens, M, n, 1.0)
        y_new, fbar = _fast_block(m, c, x, y, M, noise, want_f=True)
        ya_new, fbar_a = _fast_block(m, c, x_block, ya, M, noise, want_f=True)
        x = _slow_update(c, x, fbar)
        xa = _slow_update(c, xa, fbar_a)
        y, ya = y_new, ya_new
    _check_finite(x, xa)
    return x, xa
