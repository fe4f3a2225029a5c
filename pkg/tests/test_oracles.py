import numpy as np
import pytest
from scipy.special import jv

from hyperdiff import oracles
from hyperdiff.lattice import Hamiltonian


@pytest.mark.parametrize("x", [0.0, 0.3, 2.0, 10.0, 40.0, 400.0])
def test_bessel_squares_vs_scipy(x):
    n = np.arange(int(x) + 60)
    np.testing.assert_allclose(oracles.bessel_squares(len(n) - 1, x), jv(n, x) ** 2, atol=1e-14)


def test_free_variance_closed_form():
    for t in (0.5, 3.0, 12.0):
        nmax = int(2 * t) + 60
        p = oracles.bessel_free_populations(nmax, -1.0, t)
        n = np.arange(-nmax, nmax + 1)
        s2 = np.sum(n**2 * p)
        assert s2 == pytest.approx(oracles.free_ballistic_variance(-1.0, t), rel=1e-12)


def test_haken_strobl_limits():
    t = np.array([1e-4, 1e-3])
    np.testing.assert_allclose(oracles.haken_strobl_variance(-1.0, 0.1, t), 2 * t**2, rtol=1e-4)
    big = 1e4
    g = 0.1
    assert oracles.haken_strobl_variance(-1.0, g, big) == pytest.approx(4 / g * big - 4 / g**2, rel=1e-12)
    with pytest.raises(ValueError):
        oracles.haken_strobl_variance(-1.0, 0.0, 3.0)


def test_literal_rhs_trace_free(rng):
    n = 5
    H = Hamiltonian(rng.normal(size=n), rng.normal(size=n - 1)).dense()
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    d = oracles.literal_lindblad_rhs(rho, H, rng.uniform(0, 1, n))
    assert abs(np.trace(d)) < 1e-12
    np.testing.assert_allclose(d, d.conj().T, atol=1e-12)


def test_self_test_quick_passes():
    checks = oracles.self_test(quick=True)
    assert checks and all(c.passed for c in checks)
    report = oracles.format_report(checks)
    assert "max deviation" in report and report.count("PASS") == len(checks)


def test_corrupted_tolerance_fails_every_row():
    checks = oracles.self_test(tolerance_scale=-1.0, quick=True)
    assert not any(c.passed for c in checks)
