"""Tight-binding chain with an embedded disordered or quasiperiodic sublattice.

Sites carry a physical (center-relative) index ``i`` in ``[-(L + lead), L + lead]``.
Storage index is ``i + (N - 1) // 2``. The on-site potential is nonzero only
inside the sublattice window ``|i| <= L``; the leads on either side are
perfect (zero potential) chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

GOLDEN_BETA = (math.sqrt(5.0) - 1.0) / 2.0


class ParameterError(ValueError):
    """A model parameter lies outside its allowed domain."""


class StructureError(ValueError):
    """Array shapes or lengths do not fit together."""


def auto_lead_length(t_max: float, hopping_J: float = -1.0, margin: int = 5) -> int:
    """Lead length that keeps the ballistic front away from the chain ends up to ``t_max``.

    The front of a free packet travels at ``2|J|`` sites per unit time and has an
    Airy-shaped tail of width ~ ``(2|J|t)^(1/3)``; the padding covers that tail
    plus the boundary-guard margin.
    """
    if t_max < 0:
        raise ParameterError(f"t_max must be >= 0, got {t_max}")
    reach = 2.0 * abs(hopping_J) * t_max
    return int(math.ceil(reach)) + 10 + margin + int(math.ceil(4.5 * reach ** (1.0 / 3.0)))


@dataclass(frozen=True)
class LatticeGeometry:
    half_width_L: int
    lead_length: int

    def __post_init__(self) -> None:
        if self.half_width_L < 0 or self.lead_length < 0:
            raise ParameterError(
                f"half_width_L and lead_length must be >= 0, got {self.half_width_L}, {self.lead_length}"
            )

    @property
    def total_sites(self) -> int:
        return 2 * (self.half_width_L + self.lead_length) + 1

    @property
    def center_index(self) -> int:
        return (self.total_sites - 1) // 2

    @property
    def physical_index(self) -> np.ndarray:
        half = self.half_width_L + self.lead_length
        return np.arange(-half, half + 1)

    @property
    def window_mask(self) -> np.ndarray:
        return np.abs(self.physical_index) <= self.half_width_L

    def storage_index(self, i: int) -> int:
        return i + self.center_index


@dataclass(frozen=True)
class PotentialProfile:
    """On-site energies for the in-window sites plus how they were generated.

    ``window`` holds the ``2L + 1`` sublattice values; :meth:`values` embeds them
    into a chain of a given geometry.
    """

    window: np.ndarray
    kind: str
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.asarray(self.window, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "window", w)

    @property
    def half_width_L(self) -> int:
        return (len(self.window) - 1) // 2

    def values(self, geometry: LatticeGeometry) -> np.ndarray:
        if geometry.half_width_L != self.half_width_L:
            raise StructureError(
                f"profile has L={self.half_width_L} but geometry has L={geometry.half_width_L}"
            )
        v = np.zeros(geometry.total_sites)
        v[geometry.window_mask] = self.window
        return v


def zero_potential(L: int) -> PotentialProfile:
    if L < 0:
        raise ParameterError(f"L must be >= 0, got {L}")
    return PotentialProfile(np.zeros(2 * L + 1), "uniform-zero", {"L": L})


def disordered_potential(L: int, V: float, seed: int) -> PotentialProfile:
    """Binary disorder: each sublattice site independently gets -V or +V."""
    if L < 0:
        raise ParameterError(f"L must be >= 0, got {L}")
    if not V > 0:
        raise ParameterError(f"V must be > 0, got {V}")
    rng = np.random.default_rng(int(seed))
    signs = rng.integers(0, 2, size=2 * L + 1) * 2 - 1
    return PotentialProfile(V * signs.astype(float), "disordered", {"L": L, "V": V, "seed": int(seed)})


def harper_potential(
    L: int, Delta: float, beta: float = GOLDEN_BETA, phi: float = 0.0
) -> PotentialProfile:
    """Aubry-Andre cosine ``Delta * cos(2 pi beta i + phi)`` on the sublattice."""
    if L < 0:
        raise ParameterError(f"L must be >= 0, got {L}")
    if not all(math.isfinite(x) for x in (Delta, beta, phi)):
        raise ParameterError("Delta, beta and phi must be finite")
    i = np.arange(-L, L + 1)
    window = Delta * np.cos(2.0 * np.pi * beta * i + phi)
    return PotentialProfile(window, "harper", {"L": L, "Delta": Delta, "beta": beta, "phi": phi})


@dataclass(frozen=True)
class Hamiltonian:
    """Real symmetric tridiagonal operator (hbar = 1).

    ``hopping[k]`` is the matrix element ``H[k, k + 1]`` as stored, sign included.
    """

    diagonal: np.ndarray
    hopping: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.diagonal, dtype=float)
        h = np.array(self.hopping, dtype=float)
        if d.ndim != 1 or h.ndim != 1 or len(h) != max(len(d) - 1, 0):
            raise StructureError(f"need N diagonal and N-1 hopping entries, got {len(d)} and {len(h)}")
        d.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "diagonal", d)
        object.__setattr__(self, "hopping", h)

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.hopping, 1) + np.diag(self.hopping, -1)

    def without_hopping(self) -> "Hamiltonian":
        """Diagnostic copy with all hopping switched off (static lattice)."""
        return Hamiltonian(self.diagonal, np.zeros_like(self.hopping))

    def spectral_bound(self) -> float:
        return float(np.max(np.abs(self.diagonal), initial=0.0) + 2.0 * np.max(np.abs(self.hopping), initial=0.0))


def assemble_hamiltonian(
    geometry: LatticeGeometry, potential: PotentialProfile | np.ndarray, hopping_J: float = -1.0
) -> Hamiltonian:
    if isinstance(potential, PotentialProfile):
        values = potential.values(geometry)
    else:
        values = np.asarray(potential, dtype=float)
        if values.shape != (geometry.total_sites,):
            raise StructureError(f"potential has shape {values.shape}, expected ({geometry.total_sites},)")
    if hopping_J == 0:
        raise ParameterError("hopping_J must be nonzero")
    return Hamiltonian(values, np.full(geometry.total_sites - 1, float(hopping_J)))


def potential_table(geometry: LatticeGeometry, potential: PotentialProfile) -> str:
    """Two-column text table ``index, V`` covering the whole chain."""
    lines = ["index,V"]
    for i, v in zip(geometry.physical_index, potential.values(geometry)):
        lines.append(f"{i},{v:.17g}")
    return "\n".join(lines) + "\n"
