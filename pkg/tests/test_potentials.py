"""Model coefficient containers and radial-potential Hessians."""

import numpy as np
import pytest

from bqcf.potentials import (
    PairModel1D,
    PairModel2D,
    c0,
    harmonic,
    hessians_from_radial,
    lennard_jones,
    model_1d_from_radial,
    morse,
    radial_hessian,
)


def test_c0_values():
    assert c0(PairModel1D(phiF=1.0, phi2F=0.0)) == 1.0
    assert c0(PairModel1D(phiF=1.0, phi2F=-0.24)) == pytest.approx(0.04, abs=1e-15)
    assert c0(PairModel1D(phiF=1.0, phi2F=0.5)) == 1.0


def test_c0_never_exceeds_phiF(rng):
    for _ in range(200):
        phiF = float(rng.uniform(0.1, 5.0))
        phi2F = float(rng.uniform(-1.0, 1.0))
        m = PairModel1D(phiF=phiF, phi2F=phi2F)
        assert c0(m) <= phiF
        assert (c0(m) == phiF) == (phi2F >= 0.0)


def test_model_1d_validation():
    with pytest.raises(ValueError):
        PairModel1D(phiF=-1.0, phi2F=0.0)
    with pytest.raises(ValueError):
        PairModel1D(phiF=0.0, phi2F=0.0)
    with pytest.raises(ValueError):
        PairModel1D(phiF=1.0, phi2F=0.0, F=-2.0)


def test_model_2d_validation():
    eye = np.eye(2)
    zero = np.zeros((2, 2))
    asym = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        PairModel2D(B=eye, Ha=(asym,) * 3, Hb=(zero,) * 3)
    with pytest.raises(ValueError):
        PairModel2D(B=np.diag([1.0, -1.0]), Ha=(eye,) * 3, Hb=(zero,) * 3)
    m = PairModel2D(B=eye, Ha=(eye,) * 3, Hb=(zero,) * 3)
    assert np.array_equal(m.Ha[2], eye)


def test_harmonic_hessians_identity():
    # phi'' = 1 and phi'(rho)/rho = 1 at every length, so H = I on all bonds
    m = hessians_from_radial(harmonic(), np.eye(2))
    for H in (*m.Ha, *m.Hb):
        assert np.allclose(H, np.eye(2), atol=1e-14)


def test_lennard_jones_nearest_bond():
    # phi = rho^-12 - 2 rho^-6: phi'(1) = 0 and phi''(1) = 156 - 84 = 72
    m = hessians_from_radial(lennard_jones(), np.eye(2))
    rhat = np.array([1.0, 0.0])
    assert np.allclose(m.Ha[0], 72.0 * np.outer(rhat, rhat), atol=1e-10)


def test_morse_nearest_bond():
    # phi''(1) = 2 alpha^2 = 32 at alpha = 4, phi'(1) = 0
    m = hessians_from_radial(morse(4.0), np.eye(2))
    rhat = np.array([1.0, 0.0])
    assert np.allclose(m.Ha[0], 32.0 * np.outer(rhat, rhat), atol=1e-10)


def test_hessian_eigenvalues(rng):
    phi = morse(3.0)
    for _ in range(20):
        r0 = rng.normal(size=2)
        r0 /= np.linalg.norm(r0) / rng.uniform(0.5, 2.0)
        rho = float(np.linalg.norm(r0))
        H = radial_hessian(phi, r0)
        got = np.sort(np.linalg.eigvalsh(H))
        want = np.sort([phi.d2(rho), phi.d1(rho) / rho])
        assert np.allclose(got, want, rtol=1e-12)


def test_degenerate_bond_error():
    with pytest.raises(ValueError, match="degenerate bond direction"):
        radial_hessian(harmonic(), np.zeros(2))


def test_radial_derivative_consistency():
    # d2 must be the derivative of d1 (central difference oracle)
    phi = morse(4.0)
    h = 1e-6
    for rho in (0.8, 1.0, 1.3):
        fd = (phi.d1(rho + h) - phi.d1(rho - h)) / (2 * h)
        assert phi.d2(rho) == pytest.approx(fd, rel=1e-8)


def test_model_1d_from_radial():
    m = model_1d_from_radial(harmonic(), F=1.0)
    assert m.phiF == pytest.approx(1.0)
    assert m.phi2F == pytest.approx(1.0)
    lj = model_1d_from_radial(lennard_jones(), F=1.0)
    assert lj.phiF == pytest.approx(72.0, rel=1e-12)
    assert lj.phi2F == pytest.approx(lennard_jones().d2(2.0), rel=1e-12)
