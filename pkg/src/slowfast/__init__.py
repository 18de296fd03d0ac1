"""Spectral-Galerkin simulation of slow-fast stochastic reaction-diffusion systems
and Monte Carlo measurement of averaging convergence orders."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, EvaluationError, InsufficientDataError
from .spectral import (
    GridField,
    OperatorSpec,
    SpectralField,
    apply_semigroup,
    eigenvalue,
    fractional_norm,
    to_grid,
    to_spectral,
)
from .model import (
    DissipativityReport,
    ModelSpec,
    builtin_model,
    check_dissipativity,
    linear_model,
    nemytskii_F,
    nemytskii_G,
    potential_U,
    tanh_model,
    zero_model,
)
from .simulator import (
    NoisePlan,
    SlowFastState,
    StepperConfig,
    ou_update,
    simulate,
    simulate_frozen_fast,
    step_slowfast,
)
from .averaging import (
    FbarEstimate,
    MixingReport,
    estimate_fbar,
    gibbs_fbar_oracle,
    mixing_diagnostic,
    solve_averaged,
)
from .config import ExperimentConfig, load_config, make_config
from .experiments import (
    ErrorRow,
    ErrorTable,
    OrderFit,
    fit_order,
    hasminskii_gap_ladder,
    strong_error_ladder,
    weak_error_ladder,
)
