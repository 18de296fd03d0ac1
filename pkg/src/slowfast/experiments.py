"""Monte Carlo convergence ladders and order regression.

Each ladder runs ``samples`` trajectories per epsilon and compares the slow
component at time ``T`` against a reference: the averaged solution (strong and
weak ladders) or the block-frozen auxiliary process (Hasminskii ladder).
Cells are independent; results are assembled in ladder order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from .averaging import reference_fbar, solve_averaged
from .config import ExperimentConfig
from .errors import DomainError, EvaluationError, InsufficientDataError
from .model import ModelSpec, builtin_model
from .simulator import (
    StepperConfig,
    default_substeps,
    ensemble_generators,
    run_ensemble,
    run_hasminskii_pair,
)
from .spectral import SpectralField, power_law_field

log = logging.getLogger(__name__)

ERROR_KINDS = ("strong", "weak", "hasminskii_gap")
_STREAM_TAG = {"strong": 1, "weak": 2, "hasminskii_gap": 3}
MAX_EXCLUDED_FRACTION = 0.01
MIN_WEAK_ROWS = 4

PHIS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh_e1": lambda x: np.tanh(x[..., 0]),
    "gauss_norm": lambda x: np.exp(-np.sum(x**2, axis=-1)),
    "constant": lambda x: np.ones(x.shape[:-1]),
}


class BlowUpError(EvaluationError):
    """Too many trajectories of a ladder cell became non-finite."""


@dataclass(frozen=True)
class ErrorRow:
    epsilon: float
    error: float
    standard_error: float
    samples: int
    excluded: bool = False
    note: str = ""


@dataclass
class ErrorTable:
    rows: list[ErrorRow]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = [r.epsilon for r in self.rows]
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("epsilons must be positive and strictly decreasing")
        if any(r.error < 0 or r.standard_error < 0 for r in self.rows):
            raise DomainError("errors and standard errors must be non-negative")

    @property
    def usable(self) -> list[ErrorRow]:
        return [r for r in self.rows if not r.excluded and r.error > 0]

    @classmethod
    def from_arrays(cls, epsilons, errors, standard_errors=None, samples=1, **metadata):
        se = np.zeros(len(errors)) if standard_errors is None else standard_errors
        rows = [ErrorRow(float(e), float(v), float(s), int(samples)) for e, v, s in zip(epsilons, errors, se)]
        return cls(rows, dict(metadata))


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    r_squared: float
    slope_confidence_halfwidth: float
    rows_used: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "slope_confidence_halfwidth": self.slope_confidence_halfwidth,
            "rows_used": self.rows_used,
        }


def fit_order(table: ErrorTable, confidence: float = 0.95) -> OrderFit:
    """Weighted least squares of ``log(error)`` on ``log(epsilon)``.

    Weights are inverse variances of the log-errors, ``(error / SE)^2``;
    uniform if any usable row has zero SE. The halfwidth is the two-sided
    Student-t interval of the slope with residual-scaled covariance.
    """
    rows = table.usable
    if len(rows) < 3:
        raise InsufficientDataError(f"need at least 3 usable rows, got {len(rows)}")
    eps = np.array([r.epsilon for r in rows])
    err = np.array([r.error for r in rows])
    se = np.array([r.standard_error for r in rows])
    w = np.ones_like(err) if np.any(se <= 0) else (err / se) ** 2
    w = w / w.sum()
    X = np.column_stack([np.ones_like(eps), np.log(eps)])
    yv = np.log(err)
    XtW = X.T * w
    cov_unscaled = np.linalg.inv(XtW @ X)
    intercept, slope = cov_unscaled @ (XtW @ yv)
    resid = yv - (intercept + slope * X[:, 1])
    ybar = float(w @ yv)
    ss_tot = float(w @ (yv - ybar) ** 2)
    ss_res = float(w @ resid**2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = len(rows) - 2
    halfwidth = 0.0
    if dof > 0 and ss_res > 0:
        s2 = ss_res / dof
        halfwidth = float(stats.t.ppf(0.5 + confidence / 2, dof) * math.sqrt(s2 * cov_unscaled[1, 1]))
    return OrderFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), halfwidth, len(rows))


def model_for(cfg: ExperimentConfig) -> ModelSpec:
    m = builtin_model(cfg.model_name, None if cfg.model_name == "zero" else cfg.kappa)
    if cfg.padding:
        m = replace(m, padding=True)
    return m


def initial_fields(cfg: ExperimentConfig) -> tuple[SpectralField, SpectralField]:
    """``x0, y0`` with coefficients ``amplitude * k^(-init_regularity)``."""
    n = cfg.basis_size
    return (
        power_law_field(n, cfg.init_regularity, cfg.x0_amplitude),
        power_law_field(n, cfg.init_regularity, cfg.y0_amplitude),
    )


def stepper_for(cfg: ExperimentConfig, m: ModelSpec, epsilon: float, dt_macro: float | None = None) -> StepperConfig:
    h = cfg.dt_macro if dt_macro is None else dt_macro
    if cfg.micro_substeps == "auto":
        sub = default_substeps(h, epsilon, m.op_B.smallest_eigenvalue, cfg.substeps_per_relaxation)
    else:
        sub = int(cfg.micro_substeps)
    return StepperConfig(h, sub, slow_drift=cfg.slow_drift)


_REFERENCE_CACHE: dict[str, np.ndarray] = {}


def averaged_reference(cfg: ExperimentConfig, m: ModelSpec | None = None) -> np.ndarray:
    """``Xbar(T)`` via exponential Euler on the averaged equation; cached per config."""
    m = m or model_for(cfg)
    key = "|".join(
        str(v)
        for v in (m.name, m.kappa, m.padding, cfg.basis_size, cfg.T, cfg.dt_macro, cfg.init_regularity, cfg.x0_amplitude)
    )
    if key not in _REFERENCE_CACHE:
        x0, _ = initial_fields(cfg)
        traj = solve_averaged(x0, reference_fbar(m), cfg.T, cfg.dt_macro, m.op_A)
        _REFERENCE_CACHE[key] = traj[-1].coeffs.copy()
    return _REFERENCE_CACHE[key]


def _run_cell(run, sample_indices, make_gens):
    """Run a batch; on non-finite output fall back to per-sample runs and exclude failures.

    ``run(gens)`` returns an array of per-sample results with leading batch axis.
    Returns ``(results, kept_indices)``.
    """
    idx = list(sample_indices)
    try:
        out = run(make_gens(idx))
        ok = np.all(np.isfinite(out.reshape(len(idx), -1)), axis=1)
        if ok.all():
            return out, np.array(idx)
    except EvaluationError:
        pass
    kept, results = [], []
    for i in idx:
        try:
            r = run(make_gens([i]))
        except EvaluationError:
            continue
        if np.all(np.isfinite(r)):
            kept.append(i)
            results.append(r[0])
    excluded = len(idx) - len(kept)
    if excluded > MAX_EXCLUDED_FRACTION * len(idx):
        raise BlowUpError(f"{excluded} of {len(idx)} trajectories became non-finite")
    return np.array(results), np.array(kept)


def _map_cells(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(i, it) for i, it in enumerate(items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(items)), items))


def _metadata(cfg, kind, **extra):
    meta = {
        "model": cfg.model_name,
        "kappa": cfg.kappa,
        "T": cfg.T,
        "N": cfg.basis_size,
        "dt_macro": cfg.dt_macro,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "error_kind": kind,
    }
    meta.update(extra)
    return meta


def _final_slow(cfg, m, epsilon, index, antithetic=False, kind="strong"):
    """Slow components at ``T`` for all samples of one ladder cell."""
    x0, y0 = initial_fields(cfg)
    step = stepper_for(cfg, m, epsilon)
    stream = _STREAM_TAG[kind] * 1000 + index

    def run(gens):
        x, _ = run_ensemble(x0.coeffs, y0.coeffs, epsilon, cfg.T, m, step, gens, check_finite=False)
        return x

    def make(ids):
        return ensemble_generators(cfg.seed, ids, stream, antithetic)

    x, kept = _run_cell(run, range(cfg.samples), make)
    log.info("%s eps=%.6g substeps=%d samples=%d", kind, epsilon, step.micro_substeps, len(kept))
    return x, kept, step


def strong_error_ladder(cfg: ExperimentConfig) -> ErrorTable:
    """Mean of ``|X^eps(T) - Xbar(T)|_H`` per epsilon."""
    m = model_for(cfg)
    xbar = averaged_reference(cfg, m)

    def cell(i, eps):
        x, kept, _ = _final_slow(cfg, m, eps, i, kind="strong")
        e = np.linalg.norm(x - xbar, axis=-1)
        note = f"excluded {cfg.samples - len(kept)} non-finite" if len(kept) < cfg.samples else ""
        return ErrorRow(eps, float(e.mean()), float(e.std(ddof=1) / math.sqrt(len(e))), len(e), False, note)

    rows = _map_cells(cell, list(cfg.epsilon_ladder), cfg.threads)
    return ErrorTable(rows, _metadata(cfg, "strong"))


def _pair_means(values, kept):
    """Average antithetic partners; unpaired survivors count on their own."""
    by_base: dict[int, list[float]] = {}
    for v, i in zip(values, kept):
        by_base.setdefault(int(i) // 2, []).append(float(v))
    return np.array([np.mean(v) for v in by_base.values()])


def weak_error_ladder(cfg: ExperimentConfig, phi: Callable | str | None = None, antithetic: bool = True) -> ErrorTable:
    """``|mean phi(X^eps(T)) - phi(Xbar(T))|`` per epsilon.

    With ``antithetic`` (default) samples come in sign-flipped noise pairs and
    the standard error is computed from the pair means. Rows whose error is
    below twice the standard error are marked excluded (noise-dominated).
    """
    phi_name = cfg.phi_name if phi is None else (phi if isinstance(phi, str) else getattr(phi, "__name__", "custom"))
    phi_fn = PHIS[phi] if isinstance(phi, str) else (PHIS[cfg.phi_name] if phi is None else phi)
    if antithetic and cfg.samples % 2:
        raise DomainError("antithetic sampling needs an even sample count")
    m = model_for(cfg)
    xbar = averaged_reference(cfg, m)
    target = float(phi_fn(xbar))

    def cell(i, eps):
        x, kept, _ = _final_slow(cfg, m, eps, i, antithetic=antithetic, kind="weak")
        vals = np.asarray(phi_fn(x), dtype=float)
        units = _pair_means(vals, kept) if antithetic else vals
        err = abs(float(vals.mean()) - target)
        se = float(units.std(ddof=1) / math.sqrt(len(units))) if len(units) > 1 else 0.0
        noisy = err < 2.0 * se or err == 0.0
        return ErrorRow(eps, err, se, len(vals), noisy, "noise-dominated" if noisy else "")

    rows = _map_cells(cell, list(cfg.epsilon_ladder), cfg.threads)
    table = ErrorTable(rows, _metadata(cfg, "weak", phi=phi_name, antithetic=antithetic, reference_value=target))
    table.metadata["inconclusive"] = len(table.usable) < MIN_WEAK_ROWS
    return table


def hasminskii_block(epsilon: float, dt_macro: float) -> tuple[float, int]:
    """Macro step and block length for ``delta = sqrt(eps)``.

    The step is halved until ``h <= delta / 8``; ``delta`` is then rounded to
    the nearest multiple of the step. Returns ``(h, block_steps)``.
    """
    delta = math.sqrt(epsilon)
    h = dt_macro
    while h > delta / 8:
        h /= 2
    return h, max(1, int(round(delta / h)))


def hasminskii_gap_ladder(cfg: ExperimentConfig) -> ErrorTable:
    """Mean of ``|X^eps(T) - Xtilde^eps(T)|_H`` with the block-frozen auxiliary pair."""
    m = model_for(cfg)
    x0, y0 = initial_fields(cfg)

    def cell(i, eps):
        h, block = hasminskii_block(eps, cfg.dt_macro)
        step = stepper_for(cfg, m, eps, h)
        stream = _STREAM_TAG["hasminskii_gap"] * 1000 + i

        def run(gens):
            x, xa = run_hasminskii_pair(x0.coeffs, y0.coeffs, eps, cfg.T, m, step, block, gens)
            return np.stack([x, xa], axis=1)

        out, kept = _run_cell(run, range(cfg.samples), lambda ids: ensemble_generators(cfg.seed, ids, stream))
        gap = np.linalg.norm(out[:, 0] - out[:, 1], axis=-1)
        log.info("hasminskii eps=%.6g delta=%.6g (%d steps of %.6g)", eps, block * h, block, h)
        return ErrorRow(eps, float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(len(gap))), len(gap), False, f"delta={block * h:.6g}")

    rows = _map_cells(cell, list(cfg.epsilon_ladder), cfg.threads)
    return ErrorTable(rows, _metadata(cfg, "hasminskii_gap"))


def weak_fallback_holds(weak: ErrorTable, strong: ErrorTable, epsilon: float) -> bool:
    """Fallback when the weak ladder is inconclusive: weak error at most half the strong error."""
    w = {r.epsilon: r.error for r in weak.rows}
    s = {r.epsilon: r.error for r in strong.rows}
    if epsilon not in w or epsilon not in s:
        raise DomainError(f"epsilon {epsilon} missing from one of the tables")
    return w[epsilon] <= 0.5 * s[epsilon]
