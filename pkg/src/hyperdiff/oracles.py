"""Closed-form reference solutions and the brute-force checks that back them.

Every oracle here can be re-verified in the field with :func:`self_test`
(``hyperdiff oracle`` on the command line).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .lattice import Hamiltonian


def bessel_squares(nmax: int, x: float) -> np.ndarray:
    """``J_n(x)^2`` for ``n = 0..nmax`` by Miller's downward recurrence.

    The unnormalized sequence is scaled so that ``J_0^2 + 2 sum_k J_k^2 = 1``.
    """
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    x = abs(float(x))
    out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    start = int(max(nmax, x) + 30 + 12 * x ** (1.0 / 3.0))
    j = np.zeros(start + 2)
    j[start] = 1e-30
    for k in range(start, 0, -1):
        j[k - 1] = (2.0 * k / x) * j[k] - j[k + 1]
        if abs(j[k - 1]) > 1e100:
            j[k - 1:] *= 1e-100
    sq = j[: start + 1] ** 2
    norm = sq[0] + 2.0 * sq[1:].sum()
    return sq[: nmax + 1] / norm


def bessel_free_density(n: int, J: float, t: float) -> float:
    """Occupation of site ``n`` at time ``t`` for a free chain launched from site 0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(bessel_squares(abs(n), 2.0 * abs(J) * t)[abs(n)])


def bessel_free_populations(nmax: int, J: float, t: float) -> np.ndarray:
    """Free-chain occupations on sites ``-nmax..nmax``."""
    sq = bessel_squares(nmax, 2.0 * abs(J) * t)
    return np.concatenate([sq[:0:-1], sq])


def free_ballistic_variance(J: float, t: float) -> float:
    return 2.0 * J * J * t * t


def haken_strobl_variance(J: float, Gamma: float, t):
    """Second moment of a uniform chain under uniform dephasing ``Gamma``."""
    if not Gamma > 0:
        raise ValueError("Gamma must be > 0")
    t = np.asarray(t, dtype=float)
    out = 4.0 * J * J / Gamma * t - 4.0 * J * J / Gamma**2 * (-np.expm1(-Gamma * t))
    return float(out) if out.ndim == 0 else out


def static_offdiagonal_decay(rho0_entry: complex, Vn: float, Vm: float, Gn: float, Gm: float, t: float) -> complex:
    """Coherence of a chain with hopping switched off."""
    return complex(rho0_entry * np.exp(-1j * (Vn - Vm) * t - 0.5 * (Gn + Gm) * t))


# --- brute-force references --------------------------------------------------


def literal_lindblad_rhs(rho: np.ndarray, H: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Master-equation RHS with every dephasing generator built as an explicit projector matrix."""
    n = rho.shape[0]
    out = -1j * (H @ rho - rho @ H)
    for i in range(n):
        A = np.zeros((n, n))
        A[i, i] = 1.0
        Ad = A.conj().T
        out = out + rates[i] * (A @ rho @ Ad - 0.5 * rho @ Ad @ A - 0.5 * Ad @ A @ rho)
    return out


def _dense_rhs(H: np.ndarray, rates: np.ndarray):
    n = H.shape[0]
    Gd = np.diag(rates)

    def f(_t, y):
        rho = y.reshape(n, n)
        # sum_i G_i A_i^dag A_i = diag(G);  sum_i G_i A_i rho A_i^dag = diag(G * diag(rho))
        d = np.diag(rates * rho.diagonal()) - 0.5 * (rho @ Gd + Gd @ rho)
        return (-1j * (H @ rho - rho @ H) + d).ravel()

    return f


def brute_force_lindblad(rho0: np.ndarray, H: np.ndarray, rates: np.ndarray, times, rtol: float = 1e-11,
                         atol: float = 1e-13) -> np.ndarray:
    """Dense adaptive (DOP853) integration; returns ``rho(t)`` for each requested time."""
    n = rho0.shape[0]
    times = np.asarray(times, dtype=float)
    sol = solve_ivp(_dense_rhs(H, np.asarray(rates, dtype=float)), (0.0, times[-1]),
                    rho0.astype(complex).ravel(), method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y.T.reshape(len(times), n, n)


def expm_free_populations(n_sites: int, J: float, t: float) -> np.ndarray:
    """Free-chain occupations by exponentiating the dense Hamiltonian of an open chain."""
    H = Hamiltonian(np.zeros(n_sites), np.full(n_sites - 1, J)).dense()
    psi0 = np.zeros(n_sites, dtype=complex)
    psi0[(n_sites - 1) // 2] = 1.0
    return np.abs(expm(-1j * H * t) @ psi0) ** 2


# --- self tests --------------------------------------------------------------


@dataclass
class OracleCheck:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)


def check_bessel_vs_expm(tol: float = 1e-10) -> OracleCheck:
    n_sites, J, t = 101, -1.0, 1.0
    brute = expm_free_populations(n_sites, J, t)
    ref = bessel_free_populations((n_sites - 1) // 2, J, t)
    return OracleCheck("bessel_free_density vs matrix exponential (101 sites, t=1)",
                       float(np.max(np.abs(brute - ref))), tol)


def check_bessel_normalization(tol: float = 1e-12) -> OracleCheck:
    dev = 0.0
    for t in (0.0, 0.5, 5.0, 50.0):
        nmax = int(2 * t + 60)
        dev = max(dev, abs(bessel_free_populations(nmax, -1.0, t).sum() - 1.0))
    return OracleCheck("bessel_free_density normalization", dev, tol)


def check_ballistic_variance(tol: float = 1e-10) -> OracleCheck:
    dev = 0.0
    for J, t in ((-1.0, 1.0), (-1.0, 2.0), (0.7, 10.0)):
        nmax = int(2 * abs(J) * t + 60)
        p = bessel_free_populations(nmax, J, t)
        n = np.arange(-nmax, nmax + 1)
        dev = max(dev, abs(float(p @ n**2) / free_ballistic_variance(J, t) - 1.0))
    return OracleCheck("free_ballistic_variance vs summed Bessel densities", dev, tol)


def check_haken_strobl(tol: float = 1e-4, n_sites: int = 201, gammas=(0.04, 0.1),
                       times=(1.0, 2.0, 5.0, 10.0, 20.0)) -> OracleCheck:
    J = -1.0
    H = Hamiltonian(np.zeros(n_sites), np.full(n_sites - 1, J)).dense()
    rho0 = np.zeros((n_sites, n_sites), dtype=complex)
    c = (n_sites - 1) // 2
    rho0[c, c] = 1.0
    n = np.arange(n_sites) - c
    dev = 0.0
    for g in gammas:
        rhos = brute_force_lindblad(rho0, H, np.full(n_sites, g), times, rtol=1e-10, atol=1e-12)
        s2 = np.array([r.diagonal().real @ n**2 for r in rhos])
        dev = max(dev, float(np.max(np.abs(s2 / haken_strobl_variance(J, g, np.array(times)) - 1.0))))
    return OracleCheck(f"haken_strobl_variance vs brute-force Lindblad ({n_sites} sites)", dev, tol)


def check_haken_strobl_small_t(tol: float = 1e-6) -> OracleCheck:
    # series: 2J^2 t^2 (1 - Gamma t / 3 + Gamma^2 t^2 / 12 - ...)
    dev = 0.0
    for J, g, t in ((-1.0, 0.1, 1e-3), (-1.0, 0.04, 1e-2), (0.5, 1.0, 1e-3)):
        ratio = haken_strobl_variance(J, g, t) / free_ballistic_variance(J, t)
        dev = max(dev, abs(ratio - (1.0 - g * t / 3.0 + (g * t) ** 2 / 12.0)))
    return OracleCheck("haken_strobl_variance small-t limit 2J^2t^2", dev, tol)


def check_static_decay(tol: float = 1e-10, seed: int = 7) -> OracleCheck:
    rng = np.random.default_rng(seed)
    n = 6
    V = rng.uniform(-2, 2, n)
    G = rng.uniform(0, 0.5, n)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho0 = a @ a.conj().T
    rho0 /= np.trace(rho0).real
    times = [0.5, 2.0, 5.0]
    brute = brute_force_lindblad(rho0, np.diag(V), G, times, rtol=1e-12, atol=1e-14)
    dev = 0.0
    for k, t in enumerate(times):
        for i in range(n):
            for j in range(n):
                ref = static_offdiagonal_decay(rho0[i, j], V[i], V[j], G[i], G[j], t) if i != j else rho0[i, i]
                dev = max(dev, abs(brute[k, i, j] - ref))
    return OracleCheck("static_offdiagonal_decay vs brute-force J=0 Lindblad", dev, tol)


def check_structured_rhs(tol: float = 1e-12, trials: int = 200, seed: int = 11) -> OracleCheck:
    from .propagator import DephasingProfile, lindblad_rhs

    rng = np.random.default_rng(seed)
    dev = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        H = Hamiltonian(rng.uniform(-3, 3, n), rng.uniform(-2, 2, n - 1))
        G = rng.uniform(0, 1, n)
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        rho = 0.5 * (a + a.conj().T)
        got = lindblad_rhs(rho, H, DephasingProfile(G))
        ref = literal_lindblad_rhs(rho, H.dense(), G)
        dev = max(dev, float(np.max(np.abs(got - ref))))
    return OracleCheck(f"structured RHS vs explicit projector dissipator ({trials} trials, N<=8)", dev, tol)


def self_test(tolerance_scale: float = 1.0, quick: bool = False) -> list[OracleCheck]:
    """Run every oracle against its brute-force reference.

    ``tolerance_scale`` multiplies all tolerances; a negative value makes every
    check fail, which is how the failure path of ``verify`` is exercised.
    """
    checks = [
        check_bessel_vs_expm(),
        check_bessel_normalization(),
        check_ballistic_variance(),
        check_haken_strobl_small_t(),
        check_haken_strobl(times=(1.0, 2.0, 3.0, 4.0, 5.0)) if quick else check_haken_strobl(),
        check_static_decay(),
        check_structured_rhs(trials=50 if quick else 200),
    ]
    for c in checks:
        c.tolerance *= tolerance_scale
    return checks


def format_report(checks: list[OracleCheck]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'max deviation':>14}  {'tolerance':>10}  result"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.max_deviation:>14.3e}  {c.tolerance:>10.1e}  {'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
