"""Compiled inner loops for the RK4 integrators.

All arrays are padded by one zero site on each side: physical storage index
``s`` lives at ``s + 1``. Padding entries are never written, so neighbor reads
at the chain ends see zeros without branches.

Density matrices are held as their upper triangle (diagonal included); the
lower triangle of every buffer stays zero. A Hermitian matrix is fully
determined by this half, so Hermiticity holds exactly by construction.

The generator is linear and time independent, so one classical RK4 step equals
the degree-4 Taylor polynomial of ``exp(hL)``. It is evaluated in nested form,

    y <- y + h L (y + h/2 L (y + h/3 L (y + h/4 L y)))

which needs two scratch buffers and no separate accumulator.
"""

from __future__ import annotations

import numba as nb
import numpy as np

HORNER = (0.25, 1.0 / 3.0, 0.5, 1.0)


@nb.njit(cache=True, nogil=True, fastmath=True, boundscheck=False)
def dm_apply_uniform(src, base, out, V, J, G, c, lo, hi):
    """``out = base + c * L(src)`` on the window ``[lo, hi]``, uniform hopping ``J``."""
    for n in range(lo, hi + 1):
        up = src[n - 1]
        row = src[n]
        dn = src[n + 1]
        brow = base[n]
        orow = out[n]
        # diagonal of -i[H, rho] is real for Hermitian rho; dephasing leaves it alone
        orow[n] = brow[n] + c * (2.0 * J * (up[n].imag - row[n + 1].imag))
        vn = V[n]
        gn = 0.5 * G[n]
        for m in range(n + 1, hi + 1):
            s = row[m]
            comm = (vn - V[m]) * s + J * (up[m] + dn[m] - row[m - 1] - row[m + 1])
            g = gn + 0.5 * G[m]
            orow[m] = brow[m] + c * complex(comm.imag - g * s.real, -comm.real - g * s.imag)


@nb.njit(cache=True, nogil=True, fastmath=True, boundscheck=False)
def dm_apply(src, base, out, V, hop, G, c, lo, hi):
    """As :func:`dm_apply_uniform` with per-bond hopping ``hop[k] = H[k, k+1]`` (padded)."""
    for n in range(lo, hi + 1):
        up = src[n - 1]
        row = src[n]
        dn = src[n + 1]
        brow = base[n]
        orow = out[n]
        hl = hop[n - 1]
        hr = hop[n]
        orow[n] = brow[n] + c * (2.0 * (hl * up[n].imag - hr * row[n + 1].imag))
        vn = V[n]
        gn = 0.5 * G[n]
        for m in range(n + 1, hi + 1):
            s = row[m]
            comm = (vn - V[m]) * s + hl * up[m] + hr * dn[m] - hop[m - 1] * row[m - 1] - hop[m] * row[m + 1]
            g = gn + 0.5 * G[m]
            orow[m] = brow[m] + c * complex(comm.imag - g * s.real, -comm.real - g * s.imag)


@nb.njit(cache=True, nogil=True, fastmath=True, boundscheck=False)
def psi_apply(src, base, out, V, hop, c, lo, hi):
    """``out = base + c * (-i H src)``."""
    for n in range(lo, hi + 1):
        hpsi = V[n] * src[n] + hop[n - 1] * src[n - 1] + hop[n] * src[n + 1]
        out[n] = base[n] + c * complex(hpsi.imag, -hpsi.real)


@nb.njit(cache=True, nogil=True)
def dm_trace(rho, lo, hi):
    t = 0.0
    for n in range(lo, hi + 1):
        t += rho[n, n].real
    return t


@nb.njit(cache=True, nogil=True)
def dm_scale(rho, lo, hi, f):
    for n in range(lo, hi + 1):
        for m in range(n, hi + 1):
            rho[n, m] *= f


@nb.njit(cache=True, nogil=True)
def dm_copy(src, dst, lo, hi):
    for n in range(lo, hi + 1):
        for m in range(n, hi + 1):
            dst[n, m] = src[n, m]


@nb.njit(cache=True, nogil=True)
def dm_max_diff(a, b, lo, hi):
    d = 0.0
    for n in range(lo, hi + 1):
        for m in range(n, hi + 1):
            x = abs(a[n, m] - b[n, m])
            if x > d:
                d = x
    return d


@nb.njit(cache=True, nogil=True)
def dm_edge_max(rho, lo, hi, width):
    """Largest modulus among entries touching the outermost ``width`` rows/columns of the window."""
    d = 0.0
    top = min(lo + width, hi + 1)
    for n in range(lo, top):
        for m in range(n, hi + 1):
            x = abs(rho[n, m])
            if x > d:
                d = x
    left = max(hi - width + 1, lo)
    for m in range(left, hi + 1):
        for n in range(lo, m + 1):
            x = abs(rho[n, m])
            if x > d:
                d = x
    return d


def rk4_dm(y, u, w, V, hop, G, h, lo, hi, uniform_J=None):
    """One RK4 step of length ``h`` applied to ``y`` in place; ``u`` and ``w`` are scratch."""
    if uniform_J is not None:
        J = uniform_J
        dm_apply_uniform(y, y, u, V, J, G, 0.25 * h, lo, hi)
        dm_apply_uniform(u, y, w, V, J, G, h / 3.0, lo, hi)
        dm_apply_uniform(w, y, u, V, J, G, 0.5 * h, lo, hi)
        dm_apply_uniform(u, y, y, V, J, G, h, lo, hi)
    else:
        dm_apply(y, y, u, V, hop, G, 0.25 * h, lo, hi)
        dm_apply(u, y, w, V, hop, G, h / 3.0, lo, hi)
        dm_apply(w, y, u, V, hop, G, 0.5 * h, lo, hi)
        dm_apply(u, y, y, V, hop, G, h, lo, hi)


def rk4_psi(y, u, w, V, hop, h, lo, hi):
    psi_apply(y, y, u, V, hop, 0.25 * h, lo, hi)
    psi_apply(u, y, w, V, hop, h / 3.0, lo, hi)
    psi_apply(w, y, u, V, hop, 0.5 * h, lo, hi)
    psi_apply(u, y, y, V, hop, h, lo, hi)


def pad_sites(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    out = np.zeros(len(x) + 2, dtype=x.dtype)
    out[1:-1] = x
    return out


def pad_bonds(hopping: np.ndarray) -> np.ndarray:
    """Bond ``k`` joins padded sites k and k+1; the two end bonds touch padding and are zero."""
    out = np.zeros(len(hopping) + 2)
    out[1:-1] = hopping
    return out
