"""Build -> evolve -> fit pipeline for one configuration."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .ensemble import EnsembleResult, EnsembleSpec, run_ensemble
from .lattice import (
    Hamiltonian,
    LatticeGeometry,
    PotentialProfile,
    assemble_hamiltonian,
    auto_lead_length,
    disordered_potential,
    harper_potential,
    zero_potential,
)
from .observables import ExponentFit, FitError, classify_regime, first_moment, fit_power_law, second_moment
from .propagator import (
    DephasingProfile,
    EvolutionRecord,
    IntegratorConfig,
    boundary_occupation,
    default_dt,
    evolve,
    initial_density_matrix,
    log_record_times,
    pure_state_evolve,
    validity_horizon,
)

logger = logging.getLogger(__name__)


class ValidityError(RuntimeError):
    """The boundary guard left too few valid times to fit."""


@dataclass
class System:
    geometry: LatticeGeometry
    potential: PotentialProfile
    H: Hamiltonian
    gamma: DephasingProfile


@dataclass
class RealizationResult:
    seed: int | None
    times: np.ndarray
    sigma2: np.ndarray
    first_moment: np.ndarray
    trace_drift: np.ndarray
    boundary_occ: np.ndarray
    validity_horizon: float
    method: str
    dt: float
    steps: int
    wall_seconds: float
    potential: PotentialProfile
    diagnostics: dict = field(default_factory=dict)
    record: EvolutionRecord | None = None


def build_system(cfg: RunConfig, seed: int | None = None) -> System:
    m = cfg.model
    L = 0 if m.L is None and m.kind == "free" else m.L
    lead = cfg.lead_length if cfg.lead_length is not None else auto_lead_length(
        cfg.t_max, cfg.hopping_J, cfg.boundary_margin)
    geometry = LatticeGeometry(L, lead)
    if m.kind == "free":
        potential = zero_potential(L)
    elif m.kind == "disordered":
        potential = disordered_potential(L, m.V, 0 if seed is None else seed)
    else:
        potential = harper_potential(L, m.Delta, m.beta, m.phi)
    H = assemble_hamiltonian(geometry, potential, cfg.hopping_J)
    n = geometry.total_sites
    if isinstance(cfg.gamma, list):
        if len(cfg.gamma) != n:
            raise ValueError(f"per-site gamma table has {len(cfg.gamma)} entries, chain has {n} sites")
        gamma = DephasingProfile(np.array(cfg.gamma, dtype=float))
    else:
        gamma = DephasingProfile.uniform(n, cfg.gamma)
    return System(geometry, potential, H, gamma)


def record_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.record.times is not None:
        return np.asarray(cfg.record.times, dtype=float)
    return log_record_times(cfg.t_max, cfg.record.t_min, cfg.record.count)


def integrator_config(cfg: RunConfig, dt: float | None = None) -> IntegratorConfig:
    it = cfg.integrator
    return IntegratorConfig(
        t_max=cfg.t_max,
        record_times=record_grid(cfg),
        dt=dt if dt is not None else it.dt,
        error_control=it.error_control,
        step_tol=it.step_tol,
        convergence_tol=it.convergence_tol,
        positivity_tol=it.positivity_tol,
        checkpoint_times=tuple(it.checkpoints),
        window_tol=it.window_tol,
    )


def _evolve(system: System, cfg: RunConfig, icfg: IntegratorConfig) -> EvolutionRecord:
    if system.gamma.is_zero and not cfg.integrator.force_density_matrix:
        return pure_state_evolve(system.geometry, system.H, icfg)
    return evolve(initial_density_matrix(system.geometry), system.H, system.gamma, icfg, system.geometry)


def run_realization(cfg: RunConfig, seed: int | None = None, keep_record: bool = False) -> RealizationResult:
    system = build_system(cfg, seed)
    icfg = integrator_config(cfg)
    rec = _evolve(system, cfg, icfg)
    # only record times go to the series; checkpoint-only times are dropped
    keep = np.isin(rec.times, icfg.record_times)
    times = rec.times[keep]
    pops = rec.populations[keep]
    sigma2 = second_moment(pops, system.geometry)
    diagnostics: dict = {
        "renormalizations": rec.renormalizations,
        "rejected_steps": rec.rejected_steps,
        "max_trace_drift": float(np.max(rec.trace_drift)),
    }
    if rec.checkpoints:
        diagnostics["checkpoints"] = [
            {"t": c.time, "hermiticity_defect": c.hermiticity_defect, "min_eigenvalue": c.min_eigenvalue}
            for c in rec.checkpoints
        ]
        diagnostics["max_hermiticity_defect"] = max(c.hermiticity_defect for c in rec.checkpoints)
        diagnostics["min_eigenvalue"] = min(c.min_eigenvalue for c in rec.checkpoints)
        diagnostics["positivity_ok"] = diagnostics["min_eigenvalue"] >= -cfg.integrator.positivity_tol
    if cfg.integrator.check_convergence:
        dt = rec.dt
        rec2 = _evolve(system, cfg, integrator_config(cfg, dt=0.5 * dt))
        s_half = float(second_moment(rec2.populations[-1], system.geometry))
        s_full = float(second_moment(rec.populations[-1], system.geometry))
        delta = abs(s_half - s_full) / max(abs(s_half), 1e-300)
        diagnostics["convergence"] = {
            "dt": dt, "sigma2_t_max": s_full, "sigma2_t_max_half_dt": s_half, "relative_change": delta,
            "tolerance": cfg.integrator.convergence_tol, "passed": bool(delta < cfg.integrator.convergence_tol),
        }
    return RealizationResult(
        seed=seed,
        times=times,
        sigma2=np.asarray(sigma2, dtype=float),
        first_moment=np.asarray(first_moment(pops, system.geometry), dtype=float),
        trace_drift=rec.trace_drift[keep],
        boundary_occ=boundary_occupation(rec, cfg.boundary_margin)[keep],
        validity_horizon=validity_horizon(rec, cfg.boundary_margin),
        method=rec.method,
        dt=rec.dt,
        steps=rec.steps,
        wall_seconds=rec.wall_seconds,
        potential=system.potential,
        diagnostics=diagnostics,
        record=rec if keep_record else None,
    )


def _realization_task(cfg: RunConfig, seed: int) -> RealizationResult:
    return run_realization(cfg, seed)


@dataclass
class RunResult:
    config: RunConfig
    assumed_defaults: list[str]
    ensemble: EnsembleResult
    fit: ExponentFit | None
    regime: str | None
    fit_error: str | None
    wall_seconds: float

    @property
    def series(self):
        return self.ensemble.series

    @property
    def valid(self) -> bool:
        return self.fit is not None and self.series.validity_horizon >= self.config.t_max


def simulate(cfg: RunConfig, workers: int | None = None) -> RunResult:
    """Run one configuration end to end (ensemble if the model is random)."""
    start = time.perf_counter()
    resolved, flagged = cfg.resolved()
    count = resolved.ensemble.realizations
    seeded = resolved.model.kind == "disordered"
    spec = EnsembleSpec(resolved, count, resolved.ensemble.seed)
    workers = resolved.ensemble.workers if workers is None else workers
    if seeded:
        ens = run_ensemble(spec, _realization_task, workers=workers)
    else:
        # deterministic potential: every realization is the same run
        single = run_realization(resolved, None)
        ens = run_ensemble(spec, lambda _cfg, _seed: single, workers=1)
    window = None
    if resolved.fit.t_lo is not None or resolved.fit.t_hi is not None:
        hi = resolved.fit.t_hi if resolved.fit.t_hi is not None else ens.series.t_hi
        lo = resolved.fit.t_lo if resolved.fit.t_lo is not None else hi / 10.0
        window = (lo, hi)
    fit = regime = err = None
    try:
        fit = fit_power_law(ens.series, window)
        regime = classify_regime(fit.nu, resolved.fit.epsilon)
    except FitError as exc:
        err = str(exc)
    return RunResult(resolved, flagged, ens, fit, regime, err, time.perf_counter() - start)


def estimate_dt(cfg: RunConfig, seed: int | None = None) -> float:
    system = build_system(cfg, seed)
    if cfg.integrator.dt is not None:
        return cfg.integrator.dt
    if system.gamma.is_zero and not cfg.integrator.force_density_matrix:
        return default_dt(system.H)
    return default_dt(system.H, system.gamma)
