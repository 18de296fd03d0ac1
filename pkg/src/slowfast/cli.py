"""Batch command-line interface.

    slowfast <command> --config PATH [--output DIR] [--threads N] [--seed N]

Exit status: 0 success (including an inconclusive weak ladder), 2 invalid
configuration, 3 fitted slope outside its acceptance band, 4 numerical blow-up.
Every run writes ``manifest.json`` next to its CSV/JSON artifacts; failures
also write ``error.json`` and print the same report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .averaging import (
    estimate_fbar,
    gibbs_fbar_oracle,
    mixing_diagnostic,
    reference_fbar,
    solve_averaged,
)
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DomainError, EvaluationError, InsufficientDataError
from .experiments import (
    fit_order,
    hasminskii_gap_ladder,
    initial_fields,
    model_for,
    stepper_for,
    strong_error_ladder,
    weak_error_ladder,
)
from .model import check_dissipativity
from .simulator import NoisePlan, run_ensemble
from .spectral import SpectralField

log = logging.getLogger("slowfast")

COMMANDS = ("simulate", "fbar", "averaged", "strong-order", "weak-order", "hasminskii", "mixing", "check-model")

EXIT_OK, EXIT_CONFIG, EXIT_BAND, EXIT_BLOWUP = 0, 2, 3, 4

DEFAULT_BANDS = {
    "strong-order": ((0.35, 0.65), 0.95),
    "weak-order": ((0.7, 1.3), 0.0),
    "hasminskii": ((0.35, 0.65), 0.0),
}


class BandFailure(Exception):
    def __init__(self, report):
        self.report = report
        super().__init__(f"fitted slope {report.get('slope')} outside {report.get('band')}")


def _cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    m = model_for(cfg)
    x0, y0 = initial_fields(cfg)
    eps = cfg.epsilon_ladder[0]
    step = stepper_for(cfg, m, eps)
    gen = NoisePlan(cfg.seed, 0).generator()
    times, xs, ys = run_ensemble(x0.coeffs, y0.coeffs, eps, cfg.T, m, step, [gen], record=True)
    artifacts.write_trajectory(out / "trajectory.csv", times, xs[:, 0], ys[:, 0])
    side = {"epsilon": eps, "micro_substeps": step.micro_substeps, "sample_index": 0, "seed": cfg.seed}
    artifacts.write_json(out / "trajectory.json", {"config": cfg.model_dump(mode="json"), **side})
    return {"status": "ok", **side, "final_x_norm": float(np.linalg.norm(xs[-1, 0]))}


def _cmd_fbar(cfg, out):
    m = model_for(cfg)
    x0, _ = initial_fields(cfg)
    est = estimate_fbar(
        x0, m, burn_in=cfg.fbar_burn_in, horizon=cfg.fbar_horizon, ensemble=cfg.fbar_ensemble, seed=cfg.seed
    )
    artifacts.write_fbar(out / "fbar.csv", est)
    report = {
        "status": "ok",
        "burn_in": est.burn_in,
        "horizon": est.horizon,
        "ensemble": est.ensemble,
        "aggregate_standard_error": est.aggregate_se,
    }
    if m.linear_in_y:
        oracle = gibbs_fbar_oracle(x0, m)
        report["oracle_distance"] = (est.value - oracle).norm()
        report["oracle"] = oracle.coeffs
    artifacts.write_json(out / "fbar.json", {"config": cfg.model_dump(mode="json"), **report})
    report.pop("oracle", None)
    return report


def _cmd_averaged(cfg, out):
    m = model_for(cfg)
    x0, _ = initial_fields(cfg)
    traj = solve_averaged(x0, reference_fbar(m), cfg.T, cfg.dt_macro, m.op_A)
    times = cfg.dt_macro * np.arange(len(traj))
    artifacts.write_trajectory(out / "averaged.csv", times, np.stack([x.coeffs for x in traj]))
    artifacts.write_json(out / "averaged.json", {"config": cfg.model_dump(mode="json"), "oracle": m.linear_in_y})
    return {"status": "ok", "final_norm": traj[-1].norm()}


def _band(cfg, command):
    band, r2 = DEFAULT_BANDS[command]
    if cfg.slope_band is not None:
        band = tuple(cfg.slope_band)
    return band, max(r2, cfg.min_r_squared)


def _order_command(cfg, out, command):
    if command == "strong-order":
        table = strong_error_ladder(cfg)
    elif command == "weak-order":
        table = weak_error_ladder(cfg)
    else:
        table = hasminskii_gap_ladder(cfg)
    artifacts.write_error_table(out / "error_table.csv", table)
    band, min_r2 = _band(cfg, command)
    report = {"command": command, "band": list(band), "min_r_squared": min_r2, "metadata": table.metadata}
    if command == "weak-order" and table.metadata.get("inconclusive"):
        report.update(status="inconclusive", usable_rows=len(table.usable))
        artifacts.write_json(out / "order_fit.json", report)
        return report
    try:
        fit = fit_order(table)
    except InsufficientDataError as err:
        report.update(status="failed", reason=str(err), slope=None)
        artifacts.write_json(out / "order_fit.json", report)
        raise BandFailure(report) from None
    report.update(fit.as_dict())
    ok = band[0] <= fit.slope <= band[1] and fit.r_squared >= min_r2
    report["status"] = "ok" if ok else "failed"
    artifacts.write_json(out / "order_fit.json", report)
    if not ok:
        raise BandFailure(report)
    return report


def _cmd_mixing(cfg, out):
    m = model_for(cfg)
    x0, y0 = initial_fields(cfg)
    y = y0 + SpectralField.mode(1, cfg.basis_size, cfg.mixing_y_amplitude)
    rep = mixing_diagnostic(x0, y, m, cfg.mixing_time_grid, ensemble=cfg.mixing_ensemble, seed=cfg.seed)
    artifacts.write_mixing(out / "mixing.csv", rep)
    report = {
        "status": "ok",
        "verdict": rep.verdict,
        "decay_rate": rep.decay_rate,
        "amplitude": rep.amplitude,
        "r_squared": rep.r_squared,
        "points_used": int(rep.used.sum()),
    }
    artifacts.write_json(out / "mixing.json", report)
    return report


def _cmd_check_model(cfg, out):
    m = model_for(cfg)
    rep = check_dissipativity(m, basis_size=cfg.basis_size, seed=cfg.seed)
    report = {"status": "ok", "model": m.name, "kappa": m.kappa, **rep.as_dict()}
    artifacts.write_json(out / "dissipativity.json", report)
    return report


def run(command: str, config_path, output=None, threads=None, seed=None) -> tuple[int, dict]:
    """Execute one command; returns ``(exit_status, report)``."""
    out = None
    try:
        if command not in COMMANDS:
            raise ConfigError({"command": f"unknown command {command!r}; choose from {', '.join(COMMANDS)}"})
        cfg = load_config(config_path, output_dir=output, threads=threads, seed=seed)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        artifacts.write_manifest(out, cfg, command)
        if command in DEFAULT_BANDS:
            report = _order_command(cfg, out, command)
        else:
            handler = {
                "simulate": _cmd_simulate,
                "fbar": _cmd_fbar,
                "averaged": _cmd_averaged,
                "mixing": _cmd_mixing,
                "check-model": _cmd_check_model,
            }[command]
            report = handler(cfg, out)
        return EXIT_OK, report
    except ConfigError as err:
        return _fail(out, EXIT_CONFIG, {"error": "config", "problems": err.problems})
    except DomainError as err:
        return _fail(out, EXIT_CONFIG, {"error": "config", "problems": {"<run>": str(err)}})
    except BandFailure as err:
        return _fail(out, EXIT_BAND, {"error": "acceptance_band", **err.report})
    except EvaluationError as err:
        return _fail(out, EXIT_BLOWUP, {"error": "numerical_blowup", "message": str(err)})


def _fail(out, code, report):
    report = {"status": "error", "exit_code": code, **report}
    if out is not None:
        artifacts.write_json(out / "error.json", report)
    return code, report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="slowfast", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--output", help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, help="worker cap for ladder cells")
    parser.add_argument("--seed", type=int, help="master seed (overrides seed)")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-epsilon log lines")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    code, report = run(args.command, args.config, args.output, args.threads, args.seed)
    text = json.dumps(artifacts.jsonable(report), indent=2, sort_keys=True)
    print(text, file=sys.stderr if code else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
