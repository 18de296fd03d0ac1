"""CSV and JSON writers for experiment outputs.

Floats are written with ``repr`` so reruns of the same configuration produce
byte-identical CSV bodies; wall-clock timestamps only appear in manifests.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if not isinstance(v, str) else v for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory(path, times, xs, ys=None) -> Path:
    """Long-format trajectory: one row per (t, mode)."""
    xs = np.asarray(xs)
    n = xs.shape[-1]
    header = ["t", "mode", "x_k"] + ([] if ys is None else ["y_k"])
    rows = []
    for i, t in enumerate(times):
        for k in range(n):
            row = [float(t), k + 1, float(xs[i, k])]
            if ys is not None:
                row.append(float(ys[i, k]))
            rows.append(row)
    return write_csv(path, header, rows)


def write_error_table(path, table) -> Path:
    rows = [(r.epsilon, r.error, r.standard_error, r.samples, r.excluded) for r in table.rows]
    return write_csv(path, ["epsilon", "error", "standard_error", "samples", "excluded_flag"], rows)


def read_error_table(path):
    from .experiments import ErrorRow, ErrorTable

    rows = [
        ErrorRow(float(r["epsilon"]), float(r["error"]), float(r["standard_error"]), int(r["samples"]), bool(int(r["excluded_flag"])))
        for r in read_csv(path)
    ]
    return ErrorTable(rows)


def write_fbar(path, estimate) -> Path:
    rows = [(k + 1, v, s) for k, (v, s) in enumerate(zip(estimate.value.coeffs, estimate.standard_error))]
    return write_csv(path, ["mode", "value", "standard_error"], rows)


def write_mixing(path, report) -> Path:
    rows = zip(report.time_grid, report.estimates, report.standard_errors)
    return write_csv(path, ["t", "ftilde_norm", "standard_error"], rows)


def write_manifest(out_dir, cfg, command, extra=None) -> Path:
    payload = {
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "content_id": cfg.content_id(),
        "seed": cfg.seed,
        "model": cfg.model_name,
        "versions": {
            "slowfast": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        payload.update(extra)
    return write_json(Path(out_dir) / "manifest.json", payload)
