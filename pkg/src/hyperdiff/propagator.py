"""Density-matrix evolution under site-local pure dephasing.

The master equation is

    d rho / dt = -i [H, rho] + sum_i Gamma_i (A_i rho A_i - 1/2 {A_i, rho}),   A_i = |i><i|

For projector generators the dissipator only damps coherences,
``D(rho)_nm = -(Gamma_n + Gamma_m)/2 * rho_nm`` for ``n != m``, and with a
tridiagonal ``H`` the whole right-hand side costs O(N^2).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .lattice import Hamiltonian, LatticeGeometry, ParameterError, StructureError

logger = logging.getLogger(__name__)

TRACE_RENORM_THRESHOLD = 1e-12
TRACE_FAIL_THRESHOLD = 1e-6
BOUNDARY_THRESHOLD = 1e-6
MAX_CHECKPOINTS = 8
WINDOW_CHUNK = 16


class IntegrationError(RuntimeError):
    """Numerical failure during time stepping."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


@dataclass(frozen=True)
class DephasingProfile:
    rates: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rates, dtype=float)
        if r.ndim != 1:
            raise StructureError("dephasing rates must be one-dimensional")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ParameterError("dephasing rates must be finite and >= 0")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def uniform(cls, n_sites: int, gamma: float) -> "DephasingProfile":
        return cls(np.full(n_sites, float(gamma)))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.rates)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian state in the site basis; made exactly Hermitian on construction."""

    entries: np.ndarray
    geometry: LatticeGeometry | None = None

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise StructureError(f"density matrix must be square, got shape {a.shape}")
        if self.geometry is not None and a.shape[0] != self.geometry.total_sites:
            raise StructureError("density matrix size does not match geometry")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real.copy()

    def trace(self) -> float:
        return float(self.entries.diagonal().real.sum())


def initial_density_matrix(geometry: LatticeGeometry) -> DensityMatrix:
    """Packet localized on the central site, ``rho = |c><c|``."""
    n = geometry.total_sites
    rho = np.zeros((n, n), dtype=complex)
    rho[geometry.center_index, geometry.center_index] = 1.0
    return DensityMatrix(rho, geometry)


def default_dt(H: Hamiltonian, gamma: DephasingProfile | None = None) -> float:
    gmax = 0.0 if gamma is None else float(np.max(gamma.rates, initial=0.0))
    return 0.01 / (H.spectral_bound() + gmax)


def log_record_times(t_max: float, t_min: float = 0.1, count: int = 60, include_zero: bool = True) -> np.ndarray:
    if not 0 < t_min < t_max:
        raise ParameterError(f"need 0 < t_min < t_max, got t_min={t_min}, t_max={t_max}")
    if count < 2:
        raise ParameterError("count must be >= 2")
    t = np.geomspace(t_min, t_max, count)
    t[-1] = t_max
    return np.concatenate([[0.0], t]) if include_zero else t


@dataclass
class IntegratorConfig:
    t_max: float
    record_times: np.ndarray | None = None
    dt: float | None = None
    error_control: str = "fixed"
    step_tol: float = 1e-9
    convergence_tol: float = 1e-6
    positivity_tol: float = 1e-8
    checkpoint_times: tuple[float, ...] = ()
    window_tol: float = 1e-20

    def __post_init__(self) -> None:
        if not self.t_max > 0:
            raise ParameterError(f"t_max must be > 0, got {self.t_max}")
        if self.dt is not None and not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.error_control not in ("fixed", "step-doubling"):
            raise ParameterError(f"unknown error_control {self.error_control!r}")
        if len(self.checkpoint_times) > MAX_CHECKPOINTS:
            raise ParameterError(f"at most {MAX_CHECKPOINTS} checkpoints allowed")
        if self.record_times is None:
            self.record_times = log_record_times(self.t_max)
        rt = np.asarray(self.record_times, dtype=float)
        if rt.ndim != 1 or len(rt) == 0:
            raise ParameterError("record_times must be a non-empty sequence")
        if np.any(np.diff(rt) <= 0):
            raise ParameterError("record_times must be strictly increasing")
        if rt[0] < 0 or rt[-1] > self.t_max * (1 + 1e-12):
            raise ParameterError("record_times must lie in [0, t_max]")
        for tc in self.checkpoint_times:
            if not 0 <= tc <= self.t_max:
                raise ParameterError(f"checkpoint time {tc} outside [0, t_max]")
        self.record_times = rt

    def grid(self) -> np.ndarray:
        """Record times merged with checkpoint times; every entry is a step endpoint."""
        return np.unique(np.concatenate([self.record_times, np.asarray(self.checkpoint_times, dtype=float)]))


@dataclass
class Checkpoint:
    time: float
    rho: np.ndarray
    hermiticity_defect: float
    min_eigenvalue: float


@dataclass
class EvolutionRecord:
    times: np.ndarray
    populations: np.ndarray  # (len(times), N)
    trace_drift: np.ndarray
    geometry: LatticeGeometry
    method: str
    dt: float
    steps: int = 0
    rejected_steps: int = 0
    renormalizations: int = 0
    wall_seconds: float = 0.0
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def boundary_occupation(self, margin: int = 5) -> np.ndarray:
        return boundary_occupation(self, margin)


def boundary_occupation(record: EvolutionRecord, margin: int = 5) -> np.ndarray:
    """Population on the outermost ``margin`` sites of each lead at every record time."""
    n = record.populations.shape[1]
    if not 0 < margin < n / 2:
        raise ParameterError(f"margin must satisfy 0 < margin < N/2, got {margin} for N={n}")
    p = record.populations
    return p[:, :margin].sum(axis=1) + p[:, -margin:].sum(axis=1)


def validity_horizon(record: EvolutionRecord, margin: int = 5, threshold: float = BOUNDARY_THRESHOLD) -> float:
    """Last record time before boundary occupation first exceeds ``threshold``."""
    occ = boundary_occupation(record, margin)
    bad = np.nonzero(occ > threshold)[0]
    if len(bad) == 0:
        return float(record.times[-1])
    first = bad[0]
    return float(record.times[first - 1]) if first > 0 else 0.0


def _upper_padded(rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    out = np.zeros((n + 2, n + 2), dtype=complex)
    out[1:-1, 1:-1] = np.triu(rho)
    return out


def _full_from_upper(u: np.ndarray) -> np.ndarray:
    inner = u[1:-1, 1:-1]
    return inner + np.triu(inner, 1).conj().T


def _uniform_hopping(H: Hamiltonian) -> float | None:
    if H.size > 1 and np.all(H.hopping == H.hopping[0]):
        return float(H.hopping[0])
    return None


def lindblad_rhs(rho: DensityMatrix | np.ndarray, H: Hamiltonian, gamma: DephasingProfile) -> np.ndarray:
    """Right-hand side ``-i[H, rho] + D(rho)`` for a Hermitian ``rho``.

    Runs the same compiled kernel as :func:`evolve`, so this is the routine the
    literal projector form is checked against.
    """
    r = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    n = H.size
    if r.shape != (n, n) or gamma.rates.shape != (n,):
        raise StructureError(f"shape mismatch: rho {r.shape}, H {n}, gamma {gamma.rates.shape}")
    if not np.allclose(r, r.conj().T, rtol=0, atol=1e-12):
        raise StructureError("rho must be Hermitian")
    src = _upper_padded(r)
    zero = np.zeros_like(src)
    out = np.zeros_like(src)
    V, G = K.pad_sites(H.diagonal), K.pad_sites(gamma.rates)
    J = _uniform_hopping(H)
    if J is not None:
        K.dm_apply_uniform(src, zero, out, V, J, G, 1.0, 1, n)
    else:
        K.dm_apply(src, zero, out, V, K.pad_bonds(H.hopping), G, 1.0, 1, n)
    return _full_from_upper(out)


class _DensityState:
    """Padded upper-triangle state, scratch buffers and the active window ``[lo, hi]``.

    Entries outside the window are exactly zero; the window widens whenever its
    edge carries more than ``window_tol``, so it always encloses the packet.
    """

    method = "density-matrix"

    def __init__(self, rho0: np.ndarray, H: Hamiltonian, gamma: DephasingProfile, window_tol: float):
        n = H.size
        self.n = n
        self.rho = _upper_padded(rho0)
        self.u = np.zeros_like(self.rho)
        self.w = np.zeros_like(self.rho)
        self.full_step: np.ndarray | None = None
        self.half_step: np.ndarray | None = None
        self.V = K.pad_sites(H.diagonal)
        self.hop = K.pad_bonds(H.hopping)
        self.J = _uniform_hopping(H)
        self.G = K.pad_sites(gamma.rates)
        self.window_tol = window_tol
        rows, cols = np.nonzero(self.rho)
        if len(rows):
            lo, hi = int(rows.min()), int(cols.max())
        else:
            lo = hi = (n + 1) // 2
        self.lo = max(1, lo - WINDOW_CHUNK)
        self.hi = min(n, hi + WINDOW_CHUNK)

    def _rk4(self, y: np.ndarray, h: float) -> None:
        K.rk4_dm(y, self.u, self.w, self.V, self.hop, self.G, h, self.lo, self.hi, self.J)

    def step(self, h: float) -> None:
        self._rk4(self.rho, h)

    def doubling_error(self, h: float) -> float:
        """One full step vs two half steps from the current state; the half-step result is kept aside."""
        if self.full_step is None:
            self.full_step = np.zeros_like(self.rho)
            self.half_step = np.zeros_like(self.rho)
        lo, hi = self.lo, self.hi
        K.dm_copy(self.rho, self.full_step, lo, hi)
        K.dm_copy(self.rho, self.half_step, lo, hi)
        self._rk4(self.full_step, h)
        self._rk4(self.half_step, 0.5 * h)
        self._rk4(self.half_step, 0.5 * h)
        return K.dm_max_diff(self.full_step, self.half_step, lo, hi)

    def accept_halves(self) -> None:
        self.rho, self.half_step = self.half_step, self.rho

    def trace(self) -> float:
        return K.dm_trace(self.rho, self.lo, self.hi)

    def scale(self, f: float) -> None:
        K.dm_scale(self.rho, self.lo, self.hi, f)

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rho[self.lo:self.hi + 1, self.lo:self.hi + 1])))

    def grow_window(self) -> None:
        while (self.lo > 1 or self.hi < self.n) and K.dm_edge_max(self.rho, self.lo, self.hi, 2) > self.window_tol:
            self.lo = max(1, self.lo - WINDOW_CHUNK)
            self.hi = min(self.n, self.hi + WINDOW_CHUNK)

    def populations(self) -> np.ndarray:
        return self.rho.diagonal()[1:-1].real.copy()

    def full(self) -> np.ndarray:
        return _full_from_upper(self.rho)


class _PureState:
    method = "pure-state"

    def __init__(self, psi0: np.ndarray, H: Hamiltonian):
        self.n = H.size
        self.psi = K.pad_sites(np.asarray(psi0, dtype=complex))
        self.u = np.zeros_like(self.psi)
        self.w = np.zeros_like(self.psi)
        self.full_step = np.zeros_like(self.psi)
        self.half_step = np.zeros_like(self.psi)
        self.V = K.pad_sites(H.diagonal)
        self.hop = K.pad_bonds(H.hopping)

    def _rk4(self, y: np.ndarray, h: float) -> None:
        K.rk4_psi(y, self.u, self.w, self.V, self.hop, h, 1, self.n)

    def step(self, h: float) -> None:
        self._rk4(self.psi, h)

    def doubling_error(self, h: float) -> float:
        self.full_step[:] = self.psi
        self.half_step[:] = self.psi
        self._rk4(self.full_step, h)
        self._rk4(self.half_step, 0.5 * h)
        self._rk4(self.half_step, 0.5 * h)
        return float(np.max(np.abs(self.full_step - self.half_step)))

    def accept_halves(self) -> None:
        self.psi, self.half_step = self.half_step, self.psi

    def trace(self) -> float:
        return float(np.vdot(self.psi, self.psi).real)

    def scale(self, f: float) -> None:
        self.psi *= math.sqrt(f)

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.psi)))

    def grow_window(self) -> None:
        pass

    def populations(self) -> np.ndarray:
        return np.abs(self.psi[1:-1]) ** 2

    def full(self) -> np.ndarray:
        psi = self.psi[1:-1]
        return np.outer(psi, psi.conj())


def _settle(state, t: float, counters: dict) -> float:
    """Post-step bookkeeping: trace check and renormalization, window growth. Returns drift."""
    tr = state.trace()
    if not math.isfinite(tr):
        raise IntegrationError("non-finite state", t)
    drift = abs(tr - 1.0)
    if drift > TRACE_FAIL_THRESHOLD:
        raise IntegrationError(f"trace drift {drift:.3e} exceeds {TRACE_FAIL_THRESHOLD:g}; dt too large", t)
    if drift > TRACE_RENORM_THRESHOLD:
        state.scale(1.0 / tr)
        counters["renormalizations"] += 1
    state.grow_window()
    return drift


def _integrate(state, cfg: IntegratorConfig, dt: float, geometry: LatticeGeometry) -> EvolutionRecord:
    grid = cfg.grid()
    checkpoint_set = {float(x) for x in cfg.checkpoint_times}
    counters = {"steps": 0, "rejected": 0, "renormalizations": 0}
    pops, drifts, checkpoints = [], [], []
    t = 0.0
    h_adapt = dt
    drift = abs(state.trace() - 1.0)
    start = time.perf_counter()
    for target in grid:
        span = target - t
        if span > 0 and cfg.error_control == "fixed":
            nsteps = max(1, math.ceil(span / dt * (1.0 - 1e-12)))
            h = span / nsteps
            for k in range(nsteps):
                state.step(h)
                counters["steps"] += 1
                drift = _settle(state, t + (k + 1) * h, counters)
        elif span > 0:
            while t < target:
                h = min(h_adapt, target - t)
                err = state.doubling_error(h)
                if not math.isfinite(err):
                    raise IntegrationError("non-finite state", t)
                if err > cfg.step_tol:
                    counters["rejected"] += 1
                    h_adapt = 0.5 * h
                    if h_adapt < 1e-12 * cfg.t_max:
                        raise IntegrationError("step size underflow", t)
                    continue
                state.accept_halves()
                counters["steps"] += 1
                t = target if h >= target - t else t + h
                drift = _settle(state, t, counters)
                if err < cfg.step_tol / 64.0:
                    h_adapt = min(2.0 * h_adapt, dt)
        t = float(target)
        if not state.finite():
            raise IntegrationError("non-finite state", t)
        if t in checkpoint_set:
            full = state.full()
            checkpoints.append(Checkpoint(
                time=t,
                rho=full,
                hermiticity_defect=float(np.max(np.abs(full - full.conj().T))),
                min_eigenvalue=float(np.linalg.eigvalsh(full)[0]),
            ))
        pops.append(state.populations())
        drifts.append(drift)
    wall = time.perf_counter() - start
    record = EvolutionRecord(
        times=grid,
        populations=np.array(pops),
        trace_drift=np.array(drifts),
        geometry=geometry,
        method=state.method,
        dt=dt,
        steps=counters["steps"],
        rejected_steps=counters["rejected"],
        renormalizations=counters["renormalizations"],
        wall_seconds=wall,
        checkpoints=checkpoints,
    )
    logger.debug("%s: %d steps in %.2fs", state.method, counters["steps"], wall)
    return record


def evolve(
    rho0: DensityMatrix,
    H: Hamiltonian,
    gamma: DephasingProfile,
    cfg: IntegratorConfig,
    geometry: LatticeGeometry | None = None,
) -> EvolutionRecord:
    """Integrate the dephasing master equation with RK4 and record populations on ``cfg``'s grid."""
    n = H.size
    if rho0.size != n or gamma.rates.shape != (n,):
        raise StructureError(f"shape mismatch: rho {rho0.size}, H {n}, gamma {gamma.rates.shape}")
    geometry = geometry or rho0.geometry or LatticeGeometry(0, (n - 1) // 2)
    dt = cfg.dt if cfg.dt is not None else default_dt(H, gamma)
    state = _DensityState(rho0.entries, H, gamma, cfg.window_tol)
    return _integrate(state, cfg, dt, geometry)


def pure_state_evolve(geometry: LatticeGeometry, H: Hamiltonian, cfg: IntegratorConfig,
                      psi0: np.ndarray | None = None) -> EvolutionRecord:
    """Noiseless Schrodinger evolution ``i dpsi/dt = H psi`` from the central site."""
    n = H.size
    if geometry.total_sites != n:
        raise StructureError(f"geometry has {geometry.total_sites} sites, H has {n}")
    if psi0 is None:
        psi0 = np.zeros(n, dtype=complex)
        psi0[geometry.center_index] = 1.0
    dt = cfg.dt if cfg.dt is not None else default_dt(H)
    return _integrate(_PureState(psi0, H), cfg, dt, geometry)
