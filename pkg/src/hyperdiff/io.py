"""Run-directory writers: CSV tables, JSON sidecars, plot-ready data."""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .ensemble import average_curves
from .lattice import potential_table
from .simulation import RealizationResult, RunResult, build_system


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return "" if x is None else str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


@contextmanager
def atomic_directory(target: str | os.PathLike):
    """Yield a scratch directory that replaces ``target`` only if the block succeeds."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.tmp-", dir=target.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    old = None
    if target.exists():
        old = target.parent / f".{target.name}.old-{os.getpid()}"
        os.replace(target, old)
    os.replace(tmp, target)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


VARIANCE_HEADER = ("t", "sigma2", "trace_drift", "boundary_occ", "first_moment")


def realization_csv(r: RealizationResult) -> str:
    rows = zip(r.times, r.sigma2, r.trace_drift, r.boundary_occ, r.first_moment)
    return csv_text(VARIANCE_HEADER, rows)


def ensemble_csv(result: RunResult) -> str:
    ens = result.ensemble
    reals = ens.realizations
    times = np.asarray(reals[0].times)
    sigma2 = average_curves([r.sigma2 for r in reals])
    drift = np.max([r.trace_drift for r in reals], axis=0)
    occ = np.max([r.boundary_occ for r in reals], axis=0)
    first = np.mean([r.first_moment for r in reals], axis=0)
    if len(reals) == 1:
        return csv_text(VARIANCE_HEADER, zip(times, sigma2, drift, occ, first))
    header = VARIANCE_HEADER + ("sigma2_min", "sigma2_max")
    return csv_text(header, zip(times, sigma2, drift, occ, first, ens.sigma2_min, ens.sigma2_max))


def plot_csv(result: RunResult) -> str:
    """Long-format plot data: the measured curve and the fitted line, both on log10 axes."""
    s = result.series
    rows = [("data", np.log10(t), np.log10(v) if v > 0 else None) for t, v in zip(s.times, s.sigma2)]
    if result.fit is not None:
        f = result.fit
        for t in s.times[(s.times >= f.t_lo) & (s.times <= f.t_hi)]:
            x = np.log10(t)
            rows.append(("fit", x, f.nu * x + f.log_prefactor))
    return csv_text(("series", "log10_t", "log10_sigma2"), rows)


def fit_record(result: RunResult) -> dict:
    return {
        "fit": result.fit.to_dict() if result.fit is not None else None,
        "regime": result.regime,
        "epsilon": result.config.fit.epsilon,
        "validity_horizon": result.series.validity_horizon,
        "valid": result.valid,
        "error": result.fit_error,
    }


def metadata(result: RunResult) -> dict:
    reals = result.ensemble.realizations
    first = reals[0]
    diag = {k: v for k, v in first.diagnostics.items()}
    if len(reals) > 1:
        diag["max_trace_drift"] = max(r.diagnostics["max_trace_drift"] for r in reals)
        conv = [r.diagnostics["convergence"] for r in reals if "convergence" in r.diagnostics]
        if conv:
            diag["convergence"] = max(conv, key=lambda c: c["relative_change"])
        mins = [r.diagnostics["min_eigenvalue"] for r in reals if "min_eigenvalue" in r.diagnostics]
        if mins:
            diag["min_eigenvalue"] = min(mins)
    seeded = result.config.model.kind == "disordered"
    return {
        "config": result.config.to_dict(),
        "assumed_defaults": result.assumed_defaults,
        "seeds": [r.seed for r in reals] if seeded else [],
        "potential": {"kind": first.potential.kind, "provenance": first.potential.provenance},
        "results": {
            **fit_record(result),
            "realizations": len(reals),
            "method": first.method,
            "dt": first.dt,
            "steps": first.steps,
            "diagnostics": diag,
            "wall_seconds": result.wall_seconds,
        },
        "version": __version__,
    }


def write_run(result: RunResult, target: str | os.PathLike) -> Path:
    target = Path(target)
    with atomic_directory(target) as d:
        (d / "variance.csv").write_text(ensemble_csv(result))
        (d / "plot.csv").write_text(plot_csv(result))
        (d / "fit.json").write_text(dump_json(fit_record(result)))
        (d / "metadata.json").write_text(dump_json(metadata(result)))
        reals = result.ensemble.realizations
        geometry = build_system(result.config, reals[0].seed).geometry
        if len(reals) > 1:
            sub = d / "realizations"
            sub.mkdir()
            for k, r in enumerate(reals):
                stem = f"{k:04d}_seed_{r.seed}"
                (sub / f"{stem}.csv").write_text(realization_csv(r))
                (sub / f"{stem}_potential.csv").write_text(potential_table(geometry, r.potential))
        else:
            (d / "potential.csv").write_text(potential_table(geometry, reals[0].potential))
    return target


SUMMARY_HEADER = ("axis", "value", "model", "strength", "gamma", "nu", "log_prefactor", "rms_residual",
                  "t_lo", "t_hi", "regime", "valid", "run_dir")


def summary_row(axis: str, value, result: RunResult, run_dir: str) -> tuple:
    m = result.config.model
    strength = {"harper": m.Delta, "disordered": m.V}.get(m.kind)
    g = result.config.gamma
    f = result.fit
    return (
        axis, value, m.kind, strength, g if not isinstance(g, list) else "table",
        f.nu if f else None, f.log_prefactor if f else None, f.rms_residual if f else None,
        f.t_lo if f else None, f.t_hi if f else None, result.regime, result.valid, run_dir,
    )
