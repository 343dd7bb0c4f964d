"""Tests for phase mismatch and the phased-array factor."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oband_nli.phase import (
    phased_array,
    phased_array_sum,
    phi_exact,
    phi_spm,
    phi_xpm,
    taylor_coefficients,
    taylor_phase,
)
from oband_nli.system import dispersion_to_betas
from oband_nli.utils import DegenerateParameterError, TripletMismatchError

from .conftest import make_fibre

BETAS = dispersion_to_betas(make_fibre(dispersion=2e-6))


def _propagation_constant(f):
    """beta(f) - beta(f_ref) - beta1 (2 pi f) in high precision."""
    w = 2 * mpmath.pi * mpmath.mpf(f)
    return (
        mpmath.mpf(BETAS.beta2) * w**2 / 2
        + mpmath.mpf(BETAS.beta3) * w**3 / 6
        + mpmath.mpf(BETAS.beta4) * w**4 / 24
    )


@pytest.mark.parametrize(
    "f1, f2, f_i",
    [(3e11, -2e11, 1e11), (-7.9e12, 8e12, 0.0), (1.5e12, 1.5e12, -4e12), (5e11, 2e11, 5e11)],
)
def test_phi_exact_matches_propagation_constants(f1, f2, f_i):
    """Test the closed bracket equals beta(f1) + beta(f2) - beta(f3) - beta(f_i)."""
    with mpmath.workdps(50):
        b = _propagation_constant
        expected = float(b(f1) + b(f2) - b(f1 + f2 - f_i) - b(f_i))
    assert phi_exact(f1, f2, f_i, BETAS) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_phi_exact_vectorised():
    """Test array inputs broadcast."""
    f1 = np.array([1e11, 2e11, 3e11])
    out = phi_exact(f1, -1e11, 0.0, BETAS)
    assert out.shape == (3,)
    assert out[1] == pytest.approx(phi_exact(2e11, -1e11, 0.0, BETAS))


def _central(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def test_taylor_phase_first_derivatives():
    """Test phi1 and phi2 against central differences of the exact mismatch."""
    f_j, f_k, f_i = 3e11, -2e11, 1e11
    taylor = taylor_phase((f_j, f_k, f_j + f_k - f_i, f_i), BETAS)
    h = 1e8
    d1 = _central(lambda f: phi_exact(f, f_k, f_i, BETAS), f_j, h)
    d2 = _central(lambda f: phi_exact(f_j, f, f_i, BETAS), f_k, h)
    assert taylor.phi0 == pytest.approx(phi_exact(f_j, f_k, f_i, BETAS), rel=1e-12)
    assert taylor.phi1 == pytest.approx(d1, rel=1e-5)
    assert taylor.phi2 == pytest.approx(d2, rel=1e-5)


def test_taylor_coefficients_vectorised():
    """Test the vectorised form agrees with the scalar one."""
    fj = np.array([0.0, 2e11])
    fk = np.array([1e11, -3e11])
    phi0, phi1, phi2 = taylor_coefficients(fj, fk, 1e11, BETAS)
    scalar = taylor_phase((2e11, -3e11, -2e11, 1e11), BETAS)
    assert phi0[1] == pytest.approx(scalar.phi0)
    assert phi1[1] == pytest.approx(scalar.phi1)
    assert phi2[1] == pytest.approx(scalar.phi2)


def test_taylor_phase_rejects_non_triplet():
    """Test frequencies violating f_j + f_k - f_m = f_i are rejected."""
    with pytest.raises(TripletMismatchError, match="exceeds"):
        taylor_phase((1e9, 2e9, 0.0, 0.0), BETAS)


@pytest.mark.parametrize("f_i", [0.0, 5e11, -3e12])
def test_phi_spm_mixed_derivative(f_i):
    """Test phi_spm against a mixed central difference at (f_i, f_i)."""
    h = 1e9

    def phi(a, b):
        return phi_exact(f_i + a, f_i + b, f_i, BETAS)

    mixed = (phi(h, h) - phi(h, -h) - phi(-h, h) + phi(-h, -h)) / (4 * h * h)
    assert phi_spm(f_i, BETAS) == pytest.approx(mixed, rel=1e-6)


def test_phi_spm_vanishes_at_zero_dispersion():
    """Test phi_spm(0) = 0 when D = 0 at the reference wavelength."""
    betas = dispersion_to_betas(make_fibre(dispersion=0.0))
    assert phi_spm(0.0, betas) == 0.0


def test_phi_xpm_is_derivative_along_coi_axis():
    """Test phi_xpm is d phi / d f1 at (f_i, f_k)."""
    f_i, f_k = -1e11, 6e11
    d1 = _central(lambda f: phi_exact(f, f_k, f_i, BETAS), f_i, 1e8)
    assert phi_xpm(f_i, f_k, BETAS) == pytest.approx(d1, rel=1e-5)


def test_phi_xpm_rejects_coi():
    """Test the interferer must differ from the channel of interest."""
    with pytest.raises(DegenerateParameterError, match="distinct"):
        phi_xpm(1e11, 1e11, BETAS)


def test_phased_array_limits():
    """Test N = 1 gives 1 and phase matching gives N^2."""
    assert phased_array(0.37, 80e3, 1) == 1.0
    assert phased_array(0.0, 80e3, 7) == 49.0
    assert phased_array(2 * math.pi / 80e3, 80e3, 5) == 25.0
    np.testing.assert_array_equal(phased_array(np.zeros(3), 80e3, 4), np.full(3, 16.0))


def test_phased_array_rejects_zero_spans():
    """Test n_spans must be positive."""
    with pytest.raises(DegenerateParameterError, match="n_spans"):
        phased_array(0.1, 80e3, 0)


@given(
    phi=st.floats(-2e-4, 2e-4),
    n_spans=st.integers(1, 20),
)
def test_phased_array_equals_cosine_sum(phi, n_spans):
    """Test the closed ratio equals the cosine-sum form."""
    length = 1e4
    closed = phased_array(phi, length, n_spans)
    expanded = phased_array_sum(phi, length, n_spans)
    assert closed == pytest.approx(expanded, abs=1e-9 * n_spans**2)
    assert -1e-9 <= closed <= n_spans**2 + 1e-9
