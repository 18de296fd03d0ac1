"""Experiment configuration: a flat, strictly validated JSON document."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator

from .errors import ConfigError

STRONG_LADDER = [2.0**-j for j in range(3, 10)]
WEAK_LADDER = [2.0**-j for j in range(2, 7)]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    model_name: Literal["tanh", "linear", "zero"] = "tanh"
    kappa: PositiveFloat = 1.0
    basis_size: PositiveInt = 32
    padding: bool = False
    epsilon_ladder: list[PositiveFloat] = Field(default_factory=lambda: list(STRONG_LADDER))
    T: PositiveFloat = 0.5
    dt_macro: PositiveFloat = 1.0 / 256
    # "auto" -> ceil(substeps_per_relaxation * h * mu_1 / eps)
    micro_substeps: Union[Literal["auto"], PositiveInt] = "auto"
    substeps_per_relaxation: PositiveFloat = 10.0
    slow_drift: Literal["substep_mean", "left_point"] = "substep_mean"
    samples: PositiveInt = 200
    seed: int = Field(default=20240611, ge=0, lt=2**63)
    init_regularity: float = Field(default=3.0, ge=0.0)
    x0_amplitude: float = 1.0
    y0_amplitude: float = 0.0
    phi_name: Literal["tanh_e1", "gauss_norm", "constant"] = "tanh_e1"
    fbar_burn_in: Optional[PositiveFloat] = None
    fbar_horizon: PositiveFloat = 20.0
    fbar_ensemble: int = Field(default=16, ge=2)
    mixing_time_grid: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])
    mixing_ensemble: int = Field(default=2000, ge=2)
    mixing_y_amplitude: float = 2.0
    slope_band: Optional[tuple[float, float]] = None
    min_r_squared: float = Field(default=0.0, ge=0.0, le=1.0)
    threads: PositiveInt = 1
    output_dir: str = "runs/default"

    @field_validator("epsilon_ladder")
    @classmethod
    def _ladder_decreasing(cls, v):
        if len(v) == 0:
            raise ValueError("ladder must not be empty")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        return v

    @field_validator("mixing_time_grid")
    @classmethod
    def _grid_increasing(cls, v):
        if not v or v[0] < 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("time grid must be non-negative and strictly increasing")
        return v

    @field_validator("slope_band")
    @classmethod
    def _band_ordered(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("slope band must be (low, high) with low < high")
        return v

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def content_id(self) -> str:
        """Git blob identifier of the canonical configuration text."""
        body = self.canonical_json().encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _field_problems(err: ValidationError) -> dict:
    problems = {}
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        problems[loc] = e["msg"]
    return problems


def make_config(**values) -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as err:
        raise ConfigError(_field_problems(err)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` with value ``None`` are ignored."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError({"config": f"file not found: {path}"}) from None
    except json.JSONDecodeError as err:
        raise ConfigError({"config": f"not valid JSON: {err}"}) from None
    if not isinstance(raw, dict):
        raise ConfigError({"config": "top level must be an object"})
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(**raw)
