"""Spreading measures, power-law fits and transport-regime labels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .lattice import LatticeGeometry, ParameterError

REGIMES = ("subdiffusive", "diffusive", "superdiffusive", "ballistic", "superballistic")
DEFAULT_EPSILON = 0.05
MIN_FIT_POINTS = 5


class FitError(ValueError):
    """Not enough usable points for a power-law fit."""


def _indices(populations: np.ndarray, geometry: LatticeGeometry | None) -> np.ndarray:
    n = populations.shape[-1]
    if geometry is not None:
        if geometry.total_sites != n:
            raise ParameterError(f"populations have {n} sites, geometry has {geometry.total_sites}")
        return geometry.physical_index
    return np.arange(n) - (n - 1) // 2


def second_moment(populations, geometry: LatticeGeometry | None = None) -> np.ndarray | float:
    """Raw second moment ``sum_n n^2 p_n`` about the launch site.

    Accepts one population vector or a stack of them (last axis = sites). A square
    complex matrix is read as a density matrix and its diagonal is used.
    """
    p = np.asarray(populations)
    if p.ndim == 2 and p.shape[0] == p.shape[1] and np.iscomplexobj(p):
        p = p.diagonal().real
    n = _indices(p, geometry)
    out = p @ (n.astype(float) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def first_moment(populations, geometry: LatticeGeometry | None = None) -> np.ndarray | float:
    p = np.asarray(populations)
    n = _indices(p, geometry)
    out = p @ n.astype(float)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class MomentSeries:
    times: np.ndarray
    sigma2: np.ndarray
    source: str = "single-run"
    realizations: int = 1
    validity_horizon: float = np.inf

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if self.times.shape != self.sigma2.shape or self.times.ndim != 1:
            raise ParameterError("times and sigma2 must be 1-D and of equal length")
        if np.any(self.times <= 0):
            raise ParameterError("times must be positive")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("times must be strictly increasing")
        if np.any(self.sigma2 < 0):
            raise ParameterError("sigma2 must be nonnegative")

    @classmethod
    def from_arrays(cls, times, sigma2, **kw) -> "MomentSeries":
        """Build from a record grid that may start at t = 0; nonpositive times are dropped."""
        t = np.asarray(times, dtype=float)
        s = np.asarray(sigma2, dtype=float)
        keep = t > 0
        # roundoff can push a vanishing moment a hair below zero
        return cls(t[keep], np.maximum(s[keep], 0.0), **kw)

    @property
    def t_hi(self) -> float:
        return float(min(self.times[-1], self.validity_horizon))


@dataclass
class ExponentFit:
    nu: float
    log_prefactor: float
    t_lo: float
    t_hi: float
    rms_residual: float
    point_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def default_window(series: MomentSeries) -> tuple[float, float]:
    """Last decade of valid times."""
    t_hi = series.t_hi
    return t_hi / 10.0, t_hi


def fit_power_law(series: MomentSeries, window: tuple[float, float] | None = None) -> ExponentFit:
    """Least-squares line through ``(log10 t, log10 sigma2)`` inside ``window``."""
    t_lo, t_hi = window if window is not None else default_window(series)
    if not t_lo < t_hi:
        raise FitError(f"empty fit window [{t_lo}, {t_hi}]")
    t_hi = min(t_hi, series.validity_horizon)
    sel = (series.times >= t_lo * (1 - 1e-12)) & (series.times <= t_hi * (1 + 1e-12))
    count = int(sel.sum())
    if count < MIN_FIT_POINTS:
        raise FitError(f"only {count} valid points in [{t_lo:.6g}, {t_hi:.6g}], need {MIN_FIT_POINTS}")
    s = series.sigma2[sel]
    if np.any(s <= 0):
        raise FitError("sigma2 must be positive inside the fit window")
    x = np.log10(series.times[sel])
    y = np.log10(s)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    return ExponentFit(
        nu=float(slope),
        log_prefactor=float(icpt),
        t_lo=float(series.times[sel][0]),
        t_hi=float(series.times[sel][-1]),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        point_count=count,
    )


def classify_regime(nu: float, epsilon: float = DEFAULT_EPSILON) -> str:
    if not 0 < epsilon < 0.5:
        raise ParameterError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if abs(nu - 1.0) <= epsilon:
        return "diffusive"
    if abs(nu - 2.0) <= epsilon:
        return "ballistic"
    if nu < 1.0:
        return "subdiffusive"
    if nu < 2.0:
        return "superdiffusive"
    return "superballistic"
