"""Tests for the closed-form NLI engine."""

import math

import mpmath
import numpy as np
import pytest

from oband_nli.engine import (
    CLOSED_FORM,
    NLI_PREFACTOR,
    OMEGA1,
    OMEGA2,
    QUADRATURE_FALLBACK,
    ClosedFormModel,
    Triplet,
    assemble,
    enumerate_triplets,
    epsilon,
    eta_fwm_total,
    eta_fwm_triplet,
    eta_spm_coherent,
    eta_spm_xpm_incoherent,
    eta_xpm_coherent,
    richardson,
    spm_incoherent_square,
    xpm_incoherent_strips,
)
from oband_nli.linkfn import link_fn_closed, link_fn_terms, power_profile_terms
from oband_nli.phase import phi_xpm
from oband_nli.profile import fit_all_channels
from oband_nli.system import (
    BetaCoefficients,
    Channel,
    EngineSettings,
    WdmGrid,
    dispersion_to_betas,
)
from oband_nli.utils import DegenerateParameterError

from .conftest import make_fibre, make_grid


def _model_inputs(grid, spec):
    return fit_all_channels(grid, spec), dispersion_to_betas(spec)


def test_triplet_count_centre_channel():
    """Test the pure-FWM triplets of the centre of nine channels."""
    triplets = enumerate_triplets(make_grid(9), 4)
    assert len(triplets) == 24
    assert sum(t.tau for t in triplets) == 44
    assert sum(t.set_tag == OMEGA1 for t in triplets) == 4
    assert triplets == sorted(triplets, key=lambda t: (t.j, t.k, t.m))


def test_triplets_two_and_three_channels():
    """Test the smallest grids."""
    assert enumerate_triplets(make_grid(2), 0) == []
    assert enumerate_triplets(make_grid(3), 1) == [Triplet(0, 2, 1, 1, 2, OMEGA1)]
    assert enumerate_triplets(make_grid(3), 0) == [Triplet(1, 1, 2, 0, 1, OMEGA2)]


def test_triplet_membership():
    """Test every enumerated triplet satisfies f_j + f_k - f_m = f_i."""
    grid = make_grid(41)
    f = grid.offsets
    for i in (0, 7, 20, 40):
        for t in enumerate_triplets(grid, i):
            assert abs(f[t.j] + f[t.k] - f[t.m] - f[t.i]) <= 1e-3
            assert t.j <= t.k
            assert i not in (t.j, t.k)
            assert t.tau == (1 if t.j == t.k else 2)
            assert (t.set_tag == OMEGA1) == (t.m == i)


def _rectangle_reference(triplet, fits, grid, spec, betas, nodes=128):
    """Gauss-Legendre integral of the link function under the linear phase."""
    contribution = eta_fwm_triplet(triplet, fits, grid, spec, betas)
    taylor = contribution.taylor
    terms = link_fn_terms((triplet.j, triplet.k, triplet.m, triplet.i), fits, spec.span_length)
    x, w = np.polynomial.legendre.leggauss(nodes)
    b1 = grid.bandwidths[triplet.j]
    b2 = grid.bandwidths[triplet.k]
    x1, w1 = x * b1 / 2, w * b1 / 2
    x2, w2 = x * b2 / 2, w * b2 / 2
    phi = taylor.phi0 + taylor.phi1 * x1[:, None] + taylor.phi2 * x2[None, :]
    integral = w1 @ link_fn_closed(terms, phi) @ w2
    b_max = max(b1, b2, grid.bandwidths[triplet.m])
    p = grid.powers
    scale = (
        NLI_PREFACTOR
        * triplet.tau
        * spec.gamma**2
        * grid.bandwidths[triplet.i]
        / p[triplet.i] ** 3
        * p[triplet.j]
        * p[triplet.k]
        * p[triplet.m]
        / b_max**3
    )
    return contribution, scale * integral


def test_fwm_rectangle_against_quadrature(fibre):
    """Test the closed-form rectangle integral against Gauss-Legendre."""
    grid = make_grid(9)
    fits, betas = _model_inputs(grid, fibre)
    for i in (0, 4, 6):
        for triplet in enumerate_triplets(grid, i):
            contribution, expected = _rectangle_reference(triplet, fits, grid, fibre, betas)
            assert contribution.eta > 0
            assert contribution.eta == pytest.approx(expected, rel=1e-3)


def test_fwm_zero_dispersion_uses_fallback(fibre):
    """Test a fully phase-matched triplet goes to quadrature and gives B^2 mu(0)."""
    grid = make_grid(3)
    fits = fit_all_channels(grid, fibre)
    betas = BetaCoefficients(0.0, 0.0, 0.0, fibre.f_ref)
    triplet = enumerate_triplets(grid, 1)[0]
    contribution = eta_fwm_triplet(triplet, fits, grid, fibre, betas)
    assert contribution.path == QUADRATURE_FALLBACK
    terms = link_fn_terms((0, 2, 1, 1), fits, fibre.span_length)
    b = 96e9
    scale = NLI_PREFACTOR * 2 * fibre.gamma**2 * b / b**3
    assert contribution.eta == pytest.approx(scale * b * b * terms.peak(), rel=1e-10)
    dispersive = eta_fwm_triplet(triplet, fits, grid, fibre, dispersion_to_betas(fibre))
    assert dispersive.path == CLOSED_FORM
    assert 0 < dispersive.eta < contribution.eta


def test_fwm_total_scales_with_spans(fibre):
    """Test FWM accumulates incoherently over spans."""
    one = make_grid(5)
    fits, betas = _model_inputs(one, fibre)
    single, contributions = eta_fwm_total(2, one, fits, fibre, betas)
    triple, _ = eta_fwm_total(2, one.with_spans(3), fits, fibre, betas)
    assert single == pytest.approx(math.fsum(c.eta for c in contributions))
    assert triple == pytest.approx(3 * single, rel=1e-12)


def test_assemble_nonnegative(fibre):
    """Test the incoherent parts and the total are positive."""
    grid = make_grid(5, power_dbm=0.0, n_spans=2)
    fits, betas = _model_inputs(grid, fibre)
    for i in range(grid.n_channels):
        b = assemble(i, grid, fits, fibre, betas)
        assert b.eta_spm_inc > 0
        assert b.eta_xpm_inc > 0
        assert b.eta_fwm >= 0
        assert b.eta_nli > 0
        assert b.snr_nli is not None
        assert b.eta_nli == pytest.approx(b.eta_spm + b.eta_xpm + b.eta_fwm)


def test_incoherent_terms_scale_linearly_with_spans(fibre):
    """Test N_s linearity with the coherent corrections switched off."""
    settings = EngineSettings(coherent_corrections=False)
    grid = make_grid(5)
    fits, betas = _model_inputs(grid, fibre)
    one = assemble(1, grid, fits, fibre, betas, settings)
    four = assemble(1, grid.with_spans(4), fits, fibre, betas, settings)
    assert four.eta_nli == pytest.approx(4 * one.eta_nli, rel=1e-12)
    assert four.eta_spm_cc == four.eta_xpm_cc == 0.0


def test_eta_independent_of_power_without_raman(raman_off):
    """Test eta in 1/W^2 does not depend on launch power when C_r = 0."""
    low = make_grid(5, power_dbm=-2.0, n_spans=2)
    high = make_grid(5, power_dbm=3.0, n_spans=2)
    betas = dispersion_to_betas(raman_off)
    a = assemble(3, low, fit_all_channels(low, raman_off), raman_off, betas)
    b = assemble(3, high, fit_all_channels(high, raman_off), raman_off, betas)
    assert b.eta_nli == pytest.approx(a.eta_nli, rel=1e-9)
    assert b.eta_fwm == pytest.approx(a.eta_fwm, rel=1e-9)
    assert b.snr_nli == pytest.approx(a.snr_nli - 10.0, abs=1e-9)


def test_incoherent_xpm_strips(fibre):
    """Test the per-interferer strips sum to the XPM term and skip the COI."""
    grid = make_grid(5)
    fits, betas = _model_inputs(grid, fibre)
    strips = xpm_incoherent_strips(2, grid, fits, fibre, betas)
    coarse = xpm_incoherent_strips(2, grid, fits, fibre, betas, rows=128)
    _, xpm = eta_spm_xpm_incoherent(2, grid, fits, fibre, betas)
    assert strips[2] == 0.0
    assert np.all(strips[[0, 1, 3, 4]] > 0)
    assert xpm == pytest.approx(richardson(math.fsum(strips), math.fsum(coarse)), rel=1e-12)
    # nearer interferers couple more strongly
    assert strips[1] > strips[0]
    assert strips[3] > strips[4]


def test_richardson():
    """Test the extrapolation removes an h^2 error term exactly."""
    assert richardson(1.0 + 0.25, 1.0 + 1.0) == pytest.approx(1.0)
    assert richardson(3.0, 3.0) == 3.0
    assert richardson(1.0 + 0.125, 1.0 + 1.0, order=3) == pytest.approx(1.0)


def test_incoherent_spm_is_extrapolated():
    """Test the SPM coefficient combines the two row counts."""
    spec = make_fibre(dispersion=2e-6)
    grid = WdmGrid.uniform(1, 100e9, 96e9, 1e-3)
    fits, betas = _model_inputs(grid, spec)
    settings = EngineSettings(quadrature_resolution=32, quadrature_tolerance_db=1.0)
    spm, xpm = eta_spm_xpm_incoherent(0, grid, fits, spec, betas, settings)
    fine = spm_incoherent_square(0, grid, fits, spec, betas, settings, rows=32)
    coarse = spm_incoherent_square(0, grid, fits, spec, betas, settings, rows=16)
    assert spm == pytest.approx(richardson(fine, coarse), rel=1e-12)
    assert xpm == 0.0


def test_extrapolated_spm_beats_fine_rows():
    """Test the extrapolated SPM coefficient is nearer a high-resolution reference."""
    spec = make_fibre(dispersion=2e-6)
    grid = WdmGrid.uniform(1, 100e9, 96e9, 1e-3)
    fits, betas = _model_inputs(grid, spec)
    settings = EngineSettings(quadrature_resolution=32, quadrature_tolerance_db=1.0)
    reference, _ = eta_spm_xpm_incoherent(
        0, grid, fits, spec, betas, EngineSettings(quadrature_resolution=1024)
    )
    extrapolated, _ = eta_spm_xpm_incoherent(0, grid, fits, spec, betas, settings)
    fine = spm_incoherent_square(0, grid, fits, spec, betas, settings, rows=32)
    assert fine != reference
    assert abs(extrapolated - reference) < abs(fine - reference)


def test_spm_coherent_at_zero_dispersion(fibre):
    """Test the coherent SPM kernel is 1 where phi_SPM vanishes."""
    grid = make_grid(3, n_spans=4)
    fits, betas = _model_inputs(grid, fibre)
    terms = power_profile_terms(fits[1], fibre.span_length)
    s = float(np.sum(terms.t * terms.kappa / terms.alpha_tilde))
    expected = NLI_PREFACTOR * fibre.gamma**2 * s * s * 4 * 3
    assert eta_spm_coherent(1, grid, fits[1], fibre, betas) == pytest.approx(expected, rel=1e-12)
    assert eta_spm_coherent(1, grid, fits[1], fibre, betas, n_spans=1) == 0.0


def test_spm_coherent_decreases_with_dispersion():
    """Test dispersion reduces the coherent SPM term, with either kernel."""
    spec = make_fibre(dispersion=5e-6)
    grid = make_grid(3, n_spans=4)
    fits, betas = _model_inputs(grid, spec)
    matched = make_fibre()
    matched_fits, matched_betas = _model_inputs(grid, matched)
    dispersed = eta_spm_coherent(1, grid, fits[1], spec, betas)
    dispersed_si = eta_spm_coherent(1, grid, fits[1], spec, betas, use_si=True)
    reference = eta_spm_coherent(1, grid, matched_fits[1], matched, matched_betas)
    assert 0 < dispersed < reference
    assert 0 < dispersed_si < reference


def test_xpm_coherent_against_quadrature(fibre):
    """Test the E1 form of coherent XPM against direct integration."""
    grid = make_grid(5, n_spans=3)
    fits, betas = _model_inputs(grid, fibre)
    i, k, n = 2, 4, 3
    length = fibre.span_length
    b = 96e9
    phase = phi_xpm(float(grid.offsets[i]), float(grid.offsets[k]), betas)
    terms = power_profile_terms(fits[k], length)
    c = terms.t * terms.kappa
    total = mpmath.mpf(0)
    for l in range(len(terms)):
        for lp in range(len(terms)):
            pair = float(terms.alpha_tilde[l] * terms.alpha_tilde[lp])
            for q in range(1, n):
                integral = mpmath.quad(
                    lambda f: mpmath.cos(q * phase * length * f) / (pair + (phase * f) ** 2),
                    [-b / 2, 0, b / 2],
                )
                total += float(c[l] * c[lp]) * 2 * (n - q) * b * integral
    expected = 2 * NLI_PREFACTOR * fibre.gamma**2 / b**2 * float(total)
    assert eta_xpm_coherent(i, k, grid, fits, fibre, betas) == pytest.approx(expected, rel=1e-7)
    fast = eta_xpm_coherent(i, k, grid, fits, fibre, betas, path="real_sin")
    assert math.isfinite(fast)


def test_xpm_coherent_rejects_coi(fibre):
    """Test k = i is rejected."""
    grid = make_grid(3, n_spans=2)
    fits, betas = _model_inputs(grid, fibre)
    with pytest.raises(DegenerateParameterError, match="k != i"):
        eta_xpm_coherent(1, 1, grid, fits, fibre, betas)


def test_xpm_coherent_vanishes_for_far_interferer():
    """Test a far-detuned interferer barely adds coherently."""
    spec = make_fibre(raman_slope=0.0, loss_db_km=0.4, span_km=100.0)
    grid = WdmGrid(
        channels=(Channel(0.0, 96e9, 1e-3), Channel(8e12, 96e9, 1e-3)), n_spans=2
    )
    fits, betas = _model_inputs(grid, spec)
    coherent = eta_xpm_coherent(0, 1, grid, fits, spec, betas)
    incoherent = 2 * xpm_incoherent_strips(0, grid, fits, spec, betas)[1]
    assert abs(coherent) / incoherent < 1e-3


@pytest.mark.parametrize(
    "coherent, incoherent, n_spans, expected",
    [
        (0.0, 1.0, 5, 0.0),
        (1.0, 1.0, 1, 0.0),
        (3.0, 1.0, 4, 1.0),
        (1.0, 1.0, 4, 0.5),
        (1.0, 0.0, 3, None),
        (-2.0, 1.0, 3, None),
    ],
)
def test_epsilon(coherent, incoherent, n_spans, expected):
    """Test the coherence factor and its undefined cases."""
    value = epsilon(coherent, incoherent, n_spans)
    if expected is None:
        assert value is None
    else:
        assert value == pytest.approx(expected)


def test_single_span_has_no_coherence(fibre):
    """Test one span gives zero coherent terms and epsilon = 0."""
    grid = make_grid(3)
    fits, betas = _model_inputs(grid, fibre)
    b = assemble(1, grid, fits, fibre, betas)
    assert b.eta_spm_cc == b.eta_xpm_cc == 0.0
    assert b.epsilon_spm == b.epsilon_xpm == b.epsilon_fwm == b.epsilon_total == 0.0


def test_mirror_symmetry_without_cubic_dispersion():
    """Test channels mirrored about f_ref see the same NLI when beta3 = 0."""
    d = 2e-6
    spec = make_fibre(raman_slope=0.0, dispersion=d, slope=-2 * d / 1302.3e-9, curvature=0.0)
    grid = make_grid(7, n_spans=3)
    fits, betas = _model_inputs(grid, spec)
    assert abs(betas.beta3) * 1e13 < 1e-9 * abs(betas.beta2)
    for n in (0, 1, 2):
        a = assemble(n, grid, fits, spec, betas)
        b = assemble(6 - n, grid, fits, spec, betas)
        for name in ("eta_spm_inc", "eta_spm_cc", "eta_xpm_inc", "eta_xpm_cc", "eta_fwm"):
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-6, abs=1e-30)


def test_snr_total_with_amplifier(fibre):
    """Test the ASE-inclusive SNR is below the NLI-only SNR."""
    grid = make_grid(3, n_spans=2)
    fits, betas = _model_inputs(grid, fibre)
    plain = assemble(1, grid, fits, fibre, betas)
    amplified = assemble(1, grid, fits, fibre, betas, EngineSettings(noise_figure_db=5.0))
    assert plain.snr_total is None
    assert amplified.snr_total < amplified.snr_nli


def test_model_threads_agree(fibre):
    """Test threaded evaluation returns the same breakdowns in request order."""
    grid = make_grid(5, n_spans=2)
    serial = ClosedFormModel(fibre, grid).evaluate([4, 0, 2], threads=1)
    parallel = ClosedFormModel(fibre, grid).evaluate([4, 0, 2], threads=2)
    assert serial == parallel
    assert [b.channel for b in serial] == [4, 0, 2]
