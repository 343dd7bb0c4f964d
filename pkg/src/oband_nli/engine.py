"""
Closed-form NLI estimator.

For a channel of interest (COI) i the NLI coefficient is assembled as

    eta_NLI = N_s (eta_SPM,1 + eta_XPM,1) + eta_SPM,cc + eta_XPM,cc + eta_FWM

where the single-span SPM and XPM terms come from a semi-analytic quadrature
of the closed-form link function, the ``cc`` terms are the multi-span
coherent corrections and FWM is summed in closed form over the pure-FWM
triplets and accumulates incoherently over spans.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .linkfn import (
    FitTable,
    LinkFnTerms,
    link_fn_antiderivative,
    link_fn_closed,
    power_profile_terms,
    spm_terms,
    stacked_member_terms,
    xpm_terms,
)
from .phase import (
    TRIPLET_TOLERANCE,
    TaylorPhase,
    phi_exact,
    phi_spm,
    phi_xpm,
    taylor_coefficients,
)
from .profile import ChannelFit, fit_all_channels
from .special import atan_surrogate, big_f, cos_lorentz_integral, sine_integral
from .system import (
    BetaCoefficients,
    EngineSettings,
    FibreSpec,
    WdmGrid,
    ase_power,
    dispersion_to_betas,
)
from .utils import (
    DegenerateParameterError,
    QuadratureConvergenceError,
    neper_per_m_to_db_per_km,
    offset_to_wavelength,
)

__all__ = [
    "NLI_PREFACTOR",
    "OMEGA1",
    "OMEGA2",
    "CLOSED_FORM",
    "QUADRATURE_FALLBACK",
    "Triplet",
    "TripletContribution",
    "NliBreakdown",
    "enumerate_triplets",
    "eta_fwm_triplet",
    "eta_fwm_total",
    "richardson",
    "spm_incoherent_square",
    "xpm_incoherent_strips",
    "eta_spm_xpm_incoherent",
    "eta_spm_coherent",
    "eta_xpm_coherent",
    "epsilon",
    "make_breakdown",
    "assemble",
    "ClosedFormModel",
]

logger = logging.getLogger(__name__)

NLI_PREFACTOR = 16.0 / 27.0

OMEGA1 = "omega1"
OMEGA2 = "omega2"
CLOSED_FORM = "closed_form"
QUADRATURE_FALLBACK = "quadrature_fallback"

# Gauss-Legendre nodes per axis for degenerate FWM rectangles.
_GL_NODES = 64

# Closed-form rectangles below this fraction of their F-term magnitude are
# dominated by rounding and go to quadrature.
_CANCELLATION_LIMIT = 1e-9

# Segments whose phase change is below this fraction of min(alpha~) use mu(mid).
_FLAT_SEGMENT = 1e-6

# Below this relative argument the coherent kernels use their analytic limits.
_SMALL_ARGUMENT = 1e-6

_EPSILON_SLACK = 1e-6


class Triplet(NamedTuple):
    """Pure-FWM frequency combination (j, k, m) -> i, with j <= k after folding."""

    j: int
    k: int
    m: int
    i: int
    tau: int
    set_tag: str


@dataclass(frozen=True)
class TripletContribution:
    """One FWM term of a channel of interest."""

    j: int
    k: int
    m: int
    i: int
    tau: int
    set_tag: str
    taylor: TaylorPhase
    eta: float
    path: str


@dataclass(frozen=True)
class NliBreakdown:
    """
    Per-channel NLI decomposition.

    The ``*_inc`` fields already carry the N_s factor, so ``eta_nli`` is the
    plain sum of the five eta fields. Coherent (``*_cc``) terms may be
    negative. SNR values are in dB; None marks a value that does not exist
    (e.g. no NLI at all, or no amplifier configured).
    """

    channel: int
    f_offset: float
    wavelength: float
    power: float
    n_spans: int
    eta_spm_inc: float
    eta_spm_cc: float
    eta_xpm_inc: float
    eta_xpm_cc: float
    eta_fwm: float
    epsilon_spm: Optional[float]
    epsilon_xpm: Optional[float]
    epsilon_fwm: Optional[float]
    epsilon_total: Optional[float]
    snr_nli: Optional[float]
    snr_total: Optional[float] = None
    fwm_fallbacks: int = 0

    @property
    def eta_spm(self) -> float:
        return self.eta_spm_inc + self.eta_spm_cc

    @property
    def eta_xpm(self) -> float:
        return self.eta_xpm_inc + self.eta_xpm_cc

    @property
    def eta_nli(self) -> float:
        return math.fsum(
            (
                self.eta_spm_inc,
                self.eta_spm_cc,
                self.eta_xpm_inc,
                self.eta_xpm_cc,
                self.eta_fwm,
            )
        )


# FWM


def _triplet_indices(grid: WdmGrid, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = grid.n_channels
    offsets = grid.offsets
    jj, kk = np.triu_indices(n)
    keep = (jj != i) & (kk != i)
    jj, kk = jj[keep], kk[keep]
    target = offsets[jj] + offsets[kk] - offsets[i]
    upper = np.clip(np.searchsorted(offsets, target), 0, n - 1)
    lower = np.clip(upper - 1, 0, n - 1)
    closer = np.abs(offsets[upper] - target) <= np.abs(offsets[lower] - target)
    mm = np.where(closer, upper, lower)
    hit = np.abs(offsets[mm] - target) <= TRIPLET_TOLERANCE
    return jj[hit], kk[hit], mm[hit]


def enumerate_triplets(grid: WdmGrid, i: int) -> List[Triplet]:
    """
    Pure-FWM triplets of channel i in lexicographic (j, k, m) order.

    A triplet satisfies f_j + f_k - f_m = f_i with j != i and k != i (which
    also rules out k = m and j = m). The mirror (k, j) is folded into
    (j, k) with tau = 2; tau = 1 for j = k.

    Args:
        grid: WDM grid
        i: Channel-of-interest index (0-based)

    Returns:
        List of Triplet; empty when no pure-FWM combination exists
    """
    jj, kk, mm = _triplet_indices(grid, i)
    return [
        Triplet(
            j=int(j),
            k=int(k),
            m=int(m),
            i=i,
            tau=1 if j == k else 2,
            set_tag=OMEGA1 if m == i else OMEGA2,
        )
        for j, k, m in zip(jj, kk, mm)
    ]


def _rectangle_closed(
    terms: LinkFnTerms,
    phi0: np.ndarray,
    phi1: np.ndarray,
    phi2: np.ndarray,
    b1: np.ndarray,
    b2: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched int int mu(phi0 + phi1 f1 + phi2 f2) over [-b1/2, b1/2] x [-b2/2, b2/2].

    mu = 2 sum_l W_l a_l / (a_l^2 + phi^2), and each Lorentzian integrates
    over the rectangle to a D(a) / (phi1 phi2) with
    D(a) = F(u+) - F(u-) - F(v+) + F(v-).

    Returns:
        Tuple of (integrals, magnitude of the summed F terms); a small ratio
        of the two flags cancellation
    """
    a = terms.alpha_tilde
    c = 2 * phi0[:, None]
    s1 = (phi1 * b1)[:, None]
    s2 = (phi2 * b2)[:, None]
    corners = [
        big_f((c + s1 + s2) / (2 * a)),
        big_f((c + s1 - s2) / (2 * a)),
        big_f((c - s1 + s2) / (2 * a)),
        big_f((c - s1 - s2) / (2 * a)),
    ]
    d = corners[0] - corners[1] - corners[2] + corners[3]
    wa = terms.weights * a
    magnitude = np.sum(np.abs(wa) * np.max(np.abs(corners), axis=0), axis=-1)
    scale = 2 / np.abs(phi1 * phi2)
    integral = 2 * np.sum(wa * d, axis=-1) / (phi1 * phi2)
    return np.asarray(integral), np.asarray(scale * magnitude)


def _rectangle_fallback(
    terms: LinkFnTerms,
    taylor: TaylorPhase,
    b1: float,
    b2: float,
    threshold: float,
) -> float:
    """
    Quadrature of the rectangle integral.

    An axis along which the phase barely moves is integrated by
    Gauss-Legendre and the other one with the link-function antiderivative.
    With both or neither axis flat the whole rectangle is Gauss-Legendre.
    """
    nodes, weights = np.polynomial.legendre.leggauss(_GL_NODES)
    a_min = float(np.min(terms.alpha_tilde))
    flat1 = abs(taylor.phi1) * b1 < threshold * a_min
    flat2 = abs(taylor.phi2) * b2 < threshold * a_min
    x1, w1 = nodes * b1 / 2, weights * b1 / 2
    x2, w2 = nodes * b2 / 2, weights * b2 / 2
    if flat1 == flat2:
        phi = taylor.phi0 + taylor.phi1 * x1[:, None] + taylor.phi2 * x2[None, :]
        return float(w1 @ link_fn_closed(terms, phi) @ w2)
    if flat1:
        base = taylor.phi0 + taylor.phi1 * x1
        half = taylor.phi2 * b2 / 2
        strip = (
            link_fn_antiderivative(terms, base + half)
            - link_fn_antiderivative(terms, base - half)
        ) / taylor.phi2
        return float(np.dot(w1, strip))
    base = taylor.phi0 + taylor.phi2 * x2
    half = taylor.phi1 * b1 / 2
    strip = (
        link_fn_antiderivative(terms, base + half)
        - link_fn_antiderivative(terms, base - half)
    ) / taylor.phi1
    return float(np.dot(w2, strip))


def _fwm_contributions(
    triplets: Sequence[Triplet],
    fits: Sequence[ChannelFit],
    grid: WdmGrid,
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: EngineSettings,
) -> List[TripletContribution]:
    if not triplets:
        return []
    jj = np.array([t.j for t in triplets])
    kk = np.array([t.k for t in triplets])
    mm = np.array([t.m for t in triplets])
    ii = np.array([t.i for t in triplets])
    tau = np.array([t.tau for t in triplets], dtype=float)

    offsets, widths, powers = grid.offsets, grid.bandwidths, grid.powers
    phi0, phi1, phi2 = (
        np.atleast_1d(np.asarray(p, dtype=float))
        for p in taylor_coefficients(offsets[jj], offsets[kk], offsets[ii], betas)
    )
    bj, bk = widths[jj], widths[kk]

    table = FitTable.from_fits(fits)
    omega1 = mm == ii
    three = ~omega1 if settings.omega_assignment == "cancel_equal" else omega1
    integrals = np.empty(len(triplets))
    fallback = np.zeros(len(triplets), dtype=bool)
    threshold = settings.degeneracy_threshold

    for mask, members, cancel in (
        (three, np.column_stack([jj, kk, mm]), ii),
        (~three, np.column_stack([jj, kk]), None),
    ):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        terms = stacked_member_terms(
            table,
            members[idx],
            spec.span_length,
            cancel[idx] if cancel is not None else None,
        )
        a_min = np.min(terms.alpha_tilde, axis=1)
        slopes = np.minimum(np.abs(phi1[idx]) * bj[idx], np.abs(phi2[idx]) * bk[idx])
        degenerate = slopes < threshold * a_min
        with np.errstate(divide="ignore", invalid="ignore"):
            values, magnitude = _rectangle_closed(
                terms, phi0[idx], phi1[idx], phi2[idx], bj[idx], bk[idx]
            )
            degenerate |= ~(np.abs(values) >= _CANCELLATION_LIMIT * magnitude)
        for n in np.flatnonzero(degenerate):
            t = idx[n]
            values[n] = _rectangle_fallback(
                terms.row(int(n)),
                TaylorPhase(float(phi0[t]), float(phi1[t]), float(phi2[t])),
                float(bj[t]),
                float(bk[t]),
                threshold,
            )
        integrals[idx] = values
        fallback[idx] = degenerate

    b_max = np.maximum(np.maximum(bj, bk), widths[mm])
    scale = (
        NLI_PREFACTOR
        * tau
        * spec.gamma**2
        * widths[ii]
        / powers[ii] ** 3
        * powers[jj]
        * powers[kk]
        * powers[mm]
        / b_max**3
    )
    etas = scale * integrals
    return [
        TripletContribution(
            j=t.j,
            k=t.k,
            m=t.m,
            i=t.i,
            tau=t.tau,
            set_tag=t.set_tag,
            taylor=TaylorPhase(float(phi0[n]), float(phi1[n]), float(phi2[n])),
            eta=float(etas[n]),
            path=QUADRATURE_FALLBACK if fallback[n] else CLOSED_FORM,
        )
        for n, t in enumerate(triplets)
    ]


def eta_fwm_triplet(
    triplet: Triplet,
    fits: Sequence[ChannelFit],
    grid: WdmGrid,
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
) -> TripletContribution:
    """
    Single-span FWM coefficient of one triplet.

    eta = 16/27 tau gamma^2 B_i / P_i^3 P_j P_k P_m / max(B_j, B_k, B_m)^3
    times the rectangle integral of the closed-form link function under the
    triplet's linear phase. Triplets whose phase slopes are too small for
    the closed form are integrated by quadrature instead.

    Args:
        triplet: Triplet from :func:`enumerate_triplets`
        fits: Per-channel fits in channel order
        grid: WDM grid
        spec: Fibre description
        betas: Dispersion coefficients
        settings: Engine settings (degeneracy threshold, member assignment)

    Returns:
        TripletContribution with the evaluation path used
    """
    settings = settings or EngineSettings()
    return _fwm_contributions([triplet], fits, grid, spec, betas, settings)[0]


def eta_fwm_total(
    i: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
) -> Tuple[float, List[TripletContribution]]:
    """
    FWM coefficient of channel i over all spans, and its per-triplet terms.

    Spans add incoherently, each weighted by its (P_i,q / P_i)^2 scale.
    Triplets are summed in lexicographic order with compensated summation.

    Returns:
        Tuple of (eta_FWM [1/W^2], single-span contributions)
    """
    settings = settings or EngineSettings()
    triplets = enumerate_triplets(grid, i)
    contributions = _fwm_contributions(triplets, fits, grid, spec, betas, settings)
    fallbacks = sum(c.path == QUADRATURE_FALLBACK for c in contributions)
    if fallbacks:
        logger.warning(
            "channel %d: %d of %d FWM triplets used the quadrature fallback",
            i + 1,
            fallbacks,
            len(contributions),
        )
    single = math.fsum(c.eta for c in contributions)
    return math.fsum(grid.span_scales()) * single, contributions


# Incoherent SPM / XPM


def _edges_within(grid: WdmGrid, lower: float, upper: float) -> np.ndarray:
    edges = grid.slot_edges()
    return edges[(edges > lower) & (edges < upper)]


def _row_integrals(
    f2: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    f_i: float,
    terms: LinkFnTerms,
    grid: WdmGrid,
    betas: BetaCoefficients,
    segments: int,
    edges: np.ndarray,
) -> np.ndarray:
    """
    int G(f1 + f2 - f_i) mu(phi(f1, f2)) df1 over [lower, upper] for each row f2.

    phi is taken piecewise linear between breakpoints, and each piece is
    integrated exactly with the link-function antiderivative. Breakpoints
    are a uniform partition, f_i, and the f1 values where f3 crosses a slot
    edge, so G(f3) is constant on every piece.
    """
    d2 = f2 - f_i
    fractions = np.linspace(0.0, 1.0, segments + 1)
    uniform = lower[:, None] + (upper - lower)[:, None] * fractions[None, :]
    crossings = edges[None, :] - d2[:, None]
    centre = np.full((len(f2), 1), f_i)
    points = np.concatenate([uniform, centre, crossings], axis=1)
    points = np.sort(np.clip(points, lower[:, None], upper[:, None]), axis=1)

    phi = np.asarray(phi_exact(points, f2[:, None], f_i, betas))
    anti = np.asarray(link_fn_antiderivative(terms, phi))
    width = np.diff(points, axis=1)
    dphi = np.diff(phi, axis=1)
    g3 = grid.psd_at((points[:, 1:] + points[:, :-1]) / 2 + d2[:, None])

    steep = np.abs(dphi) > _FLAT_SEGMENT * float(np.min(terms.alpha_tilde))
    mean_mu = np.where(
        steep,
        np.diff(anti, axis=1) / np.where(steep, dphi, 1.0),
        link_fn_closed(terms, (phi[:, 1:] + phi[:, :-1]) / 2),
    )
    return np.asarray(np.sum(g3 * width * mean_mu, axis=1))


def _spm_square(
    i: int,
    grid: WdmGrid,
    terms: LinkFnTerms,
    betas: BetaCoefficients,
    rows: int,
    segments: int,
) -> float:
    """int int G G G mu over the COI square, as twice the triangle |d1| <= |d2|."""
    f_i = float(grid.offsets[i])
    b_i = float(grid.bandwidths[i])
    step = b_i / rows
    d2 = -b_i / 2 + (np.arange(rows) + 0.5) * step
    reach = np.abs(d2)
    values = _row_integrals(
        f_i + d2,
        f_i - reach,
        f_i + reach,
        f_i,
        terms,
        grid,
        betas,
        segments,
        _edges_within(grid, f_i - b_i, f_i + b_i),
    )
    g = float(grid.powers[i]) / b_i
    return 2 * g * g * step * math.fsum(values)


def _xpm_strip(
    i: int,
    k: int,
    grid: WdmGrid,
    terms: LinkFnTerms,
    betas: BetaCoefficients,
    rows: int,
    segments: int,
) -> float:
    """int int G G G mu over f1 in slot i, f2 in slot k, doubled for the mirror."""
    f_i, f_k = float(grid.offsets[i]), float(grid.offsets[k])
    b_i, b_k = float(grid.bandwidths[i]), float(grid.bandwidths[k])
    step = b_k / rows
    f2 = f_k - b_k / 2 + (np.arange(rows) + 0.5) * step
    reach = (b_i + b_k) / 2
    values = _row_integrals(
        f2,
        np.full(rows, f_i - b_i / 2),
        np.full(rows, f_i + b_i / 2),
        f_i,
        terms,
        grid,
        betas,
        segments,
        _edges_within(grid, f_k - reach, f_k + reach),
    )
    g_i = float(grid.powers[i]) / b_i
    g_k = float(grid.powers[k]) / b_k
    return 2 * g_i * g_k * step * math.fsum(values)


def _incoherent_scale(i: int, grid: WdmGrid, spec: FibreSpec) -> float:
    return float(
        NLI_PREFACTOR * spec.gamma**2 * grid.bandwidths[i] / grid.powers[i] ** 3
    )


def richardson(fine: float, coarse: float, order: int = 2) -> float:
    """Extrapolate two estimates at step h and 2h with error ~ h^order."""
    gain = 2.0**order
    return (gain * fine - coarse) / (gain - 1.0)


def spm_incoherent_square(
    i: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
    rows: Optional[int] = None,
) -> float:
    """Single-span incoherent SPM coefficient of channel i at one resolution [1/W^2]."""
    settings = settings or EngineSettings()
    rows = rows or settings.quadrature_resolution
    terms = spm_terms(fits[i], spec.span_length)
    return _incoherent_scale(i, grid, spec) * _spm_square(
        i, grid, terms, betas, rows, settings.quadrature_segments
    )


def xpm_incoherent_strips(
    i: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
    rows: Optional[int] = None,
) -> np.ndarray:
    """
    Single-span incoherent XPM coefficient of channel i per interferer.

    Returns:
        Array of length N_ch [1/W^2]; entry i is 0
    """
    settings = settings or EngineSettings()
    rows = rows or settings.quadrature_resolution
    scale = _incoherent_scale(i, grid, spec)
    out = np.zeros(grid.n_channels)
    for k in range(grid.n_channels):
        if k == i:
            continue
        terms = xpm_terms(fits[k], spec.span_length)
        out[k] = scale * _xpm_strip(
            i, k, grid, terms, betas, rows, settings.quadrature_segments
        )
    return out


def _check_refinement(
    label: str, i: int, fine: float, coarse: float, rows: int, tolerance: float
) -> None:
    if fine == coarse:
        return
    if fine <= 0 or coarse <= 0:
        gap = math.inf
    else:
        gap = abs(10 * math.log10(fine / coarse))
    if gap > tolerance:
        raise QuadratureConvergenceError(
            f"{label} quadrature for channel {i + 1} moved {gap:.3g} dB between "
            f"{rows // 2} and {rows} rows (tolerance {tolerance:g} dB); "
            "increase engine.quadrature_resolution"
        )


def eta_spm_xpm_incoherent(
    i: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
) -> Tuple[float, float]:
    """
    Single-span incoherent SPM and XPM coefficients of channel i.

    Integrates G(f1) G(f2) G(f3) mu(phi) with the closed-form link function
    and the exact phase mismatch: over the COI square for SPM and over the
    (COI, interferer) strips for XPM. Each result is recomputed with half
    the rows and must agree within ``settings.quadrature_tolerance_db``. The
    two midpoint sums, with error ~ h^2 in the row height h, are then
    combined by Richardson extrapolation.

    Args:
        i: Channel-of-interest index
        grid: WDM grid
        fits: Per-channel fits in channel order
        spec: Fibre description
        betas: Dispersion coefficients
        settings: Engine settings (resolution, segments, tolerance)

    Returns:
        Tuple of extrapolated (eta_SPM,1, eta_XPM,1) [1/W^2]

    Raises:
        QuadratureConvergenceError: If the refinement check fails
    """
    settings = settings or EngineSettings()
    rows = settings.quadrature_resolution

    spm = spm_incoherent_square(i, grid, fits, spec, betas, settings, rows)
    spm_coarse = spm_incoherent_square(i, grid, fits, spec, betas, settings, rows // 2)
    _check_refinement("SPM", i, spm, spm_coarse, rows, settings.quadrature_tolerance_db)

    xpm = math.fsum(xpm_incoherent_strips(i, grid, fits, spec, betas, settings, rows))
    xpm_coarse = math.fsum(
        xpm_incoherent_strips(i, grid, fits, spec, betas, settings, rows // 2)
    )
    _check_refinement("XPM", i, xpm, xpm_coarse, rows, settings.quadrature_tolerance_db)
    return richardson(spm, spm_coarse), richardson(xpm, xpm_coarse)


# Coherent SPM / XPM


def _spm_kernel(x: float, use_si: bool) -> float:
    if abs(x) < _SMALL_ARGUMENT:
        return 1.0
    value = sine_integral(x) if use_si else atan_surrogate(x)
    return float(value) / x


def eta_spm_coherent(
    i: int,
    grid: WdmGrid,
    fit: ChannelFit,
    spec: FibreSpec,
    betas: BetaCoefficients,
    n_spans: Optional[int] = None,
    use_si: bool = False,
) -> float:
    """
    Multi-span coherent SPM correction of channel i.

    16/27 gamma^2 s^2 sum_{n=1}^{N-1} 2 (N - n) atan(x_n) / x_n, with
    x_n = n phi_i L B_i^2 / 4 and s = sum_l T'_l kappa_l / alpha~_l from the
    power-profile terms. ``use_si`` replaces atan by the sine integral.

    Returns:
        eta_SPM,cc [1/W^2]; 0 for a single span
    """
    n = grid.n_spans if n_spans is None else n_spans
    if n <= 1:
        return 0.0
    terms = power_profile_terms(fit, spec.span_length)
    s = float(np.sum(terms.t * terms.kappa / terms.alpha_tilde))
    phase = float(phi_spm(float(grid.offsets[i]), betas))
    b_i = float(grid.bandwidths[i])
    base = phase * spec.span_length * b_i * b_i / 4
    total = math.fsum(
        2 * (n - q) * _spm_kernel(q * base, use_si) for q in range(1, n)
    )
    return NLI_PREFACTOR * spec.gamma**2 * s * s * total


def _xpm_kernel(
    q: int,
    pair: float,
    phase: float,
    span_length: float,
    b_i: float,
    b_k: float,
    path: str,
) -> float:
    """B_k int cos(q phi L f1) / (alpha~ alpha~' + phi^2 f1^2) df1 over the COI slot."""
    root = math.sqrt(pair)
    a = q * span_length * root
    x = q * phase * span_length * b_i / 2
    if phase == 0.0 or abs(x) < _SMALL_ARGUMENT * a:
        return b_k * b_i / pair
    if path == "e1_exact":
        return 2 * b_k * (q * span_length / phase) * cos_lorentz_integral(a, x)
    branch = math.pi * math.exp(-a) / (abs(phase) * root)
    ripple = 2 * math.sin(x) / (
        phase * q * span_length * (pair + phase * phase * b_i * b_i / 4)
    )
    return b_k * (branch + ripple)


def eta_xpm_coherent(
    i: int,
    k: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    n_spans: Optional[int] = None,
    path: str = "e1_exact",
) -> float:
    """
    Multi-span coherent XPM correction of channel i caused by interferer k.

    Each (l, l') pair of the interferer's power-profile terms contributes a
    Lorentzian 1 / (alpha~_l alpha~_l' + phi^2) in phi = phi_ik f1, integrated
    against cos(n phi L) over the COI slot. ``e1_exact`` evaluates that
    integral through the complex exponential integral including its
    branch-cut term; ``real_sin`` uses the first-order asymptotic form.

    Args:
        i: Channel-of-interest index
        k: Interferer index, different from i
        grid: WDM grid
        fits: Per-channel fits in channel order
        spec: Fibre description
        betas: Dispersion coefficients
        n_spans: Span count, defaults to the grid's
        path: ``e1_exact`` or ``real_sin``

    Returns:
        eta_XPM,cc contribution of k [1/W^2]; 0 for a single span

    Raises:
        DegenerateParameterError: If k equals i
    """
    if k == i:
        raise DegenerateParameterError("coherent XPM needs an interferer k != i")
    n = grid.n_spans if n_spans is None else n_spans
    if n <= 1:
        return 0.0
    terms = power_profile_terms(fits[k], spec.span_length)
    phase = phi_xpm(float(grid.offsets[i]), float(grid.offsets[k]), betas)
    b_i, b_k = float(grid.bandwidths[i]), float(grid.bandwidths[k])
    c = terms.t * terms.kappa
    parts = []
    for l in range(len(terms)):
        for lp in range(len(terms)):
            pair = float(terms.alpha_tilde[l] * terms.alpha_tilde[lp])
            series = math.fsum(
                2 * (n - q) * _xpm_kernel(q, pair, phase, spec.span_length, b_i, b_k, path)
                for q in range(1, n)
            )
            parts.append(float(c[l] * c[lp]) * series)
    ratio = float(grid.powers[k] / grid.powers[i])
    return 2 * NLI_PREFACTOR * spec.gamma**2 / b_k**2 * ratio**2 * math.fsum(parts)


# Assembly


def epsilon(coherent: float, incoherent: float, n_spans: int) -> Optional[float]:
    """
    Coherence factor ln(1 + coherent / incoherent) / ln(N_s).

    Returns 0 for one span or a zero coherent term, and None when the
    ratio leaves the logarithm's domain.
    """
    if n_spans <= 1 or coherent == 0:
        return 0.0
    if not incoherent > 0:
        return None
    ratio = 1.0 + coherent / incoherent
    if ratio <= 0:
        return None
    return math.log(ratio) / math.log(n_spans)


def _snr_db(value: float) -> Optional[float]:
    if not (value > 0 and math.isfinite(value)):
        return None
    return 10 * math.log10(value)


def make_breakdown(
    i: int,
    grid: WdmGrid,
    spec: FibreSpec,
    settings: EngineSettings,
    spm_inc: float,
    spm_cc: float,
    xpm_inc: float,
    xpm_cc: float,
    fwm: float,
    fwm_inc: Optional[float] = None,
    fwm_fallbacks: int = 0,
) -> NliBreakdown:
    """
    Combine eta terms into an NliBreakdown with coherence factors and SNRs.

    ``spm_inc`` and ``xpm_inc`` are the N_s-multiplied incoherent terms.
    ``fwm_inc`` is the incoherent FWM part when ``fwm`` includes coherent
    accumulation (integral model); without it FWM counts as incoherent.
    """
    n = grid.n_spans
    power = float(grid.powers[i])
    f_i = float(grid.offsets[i])
    fwm_base = fwm if fwm_inc is None else fwm_inc
    eta_nli = math.fsum((spm_inc, spm_cc, xpm_inc, xpm_cc, fwm))
    inc_total = math.fsum((spm_inc, xpm_inc, fwm_base))

    eps = {
        "spm": epsilon(spm_cc, spm_inc, n),
        "xpm": epsilon(xpm_cc, xpm_inc, n),
        "fwm": epsilon(fwm - fwm_base, fwm_base, n),
        "total": epsilon(eta_nli - inc_total, inc_total, n),
    }
    for name, value in eps.items():
        if value is not None and not -_EPSILON_SLACK <= value <= 1 + _EPSILON_SLACK:
            logger.warning(
                "channel %d: epsilon_%s = %.4g lies outside [0, 1]", i + 1, name, value
            )

    snr_nli = _snr_db(1.0 / (eta_nli * power**2)) if eta_nli > 0 else None
    snr_total = None
    if settings.noise_figure_db is not None:
        alpha = float(spec.alpha_at(f_i))
        gain_db = neper_per_m_to_db_per_km(alpha) * spec.span_length / 1e3
        p_ase = ase_power(
            settings.noise_figure_db, gain_db, spec.f_ref + f_i, float(grid.bandwidths[i])
        )
        noise = n * p_ase + eta_nli * power**3
        snr_total = _snr_db(power / noise) if noise > 0 else None

    return NliBreakdown(
        channel=i,
        f_offset=f_i,
        wavelength=offset_to_wavelength(f_i, spec.f_ref),
        power=power,
        n_spans=n,
        eta_spm_inc=spm_inc,
        eta_spm_cc=spm_cc,
        eta_xpm_inc=xpm_inc,
        eta_xpm_cc=xpm_cc,
        eta_fwm=fwm,
        epsilon_spm=eps["spm"],
        epsilon_xpm=eps["xpm"],
        epsilon_fwm=eps["fwm"],
        epsilon_total=eps["total"],
        snr_nli=snr_nli,
        snr_total=snr_total,
        fwm_fallbacks=fwm_fallbacks,
    )


def assemble(
    i: int,
    grid: WdmGrid,
    fits: Sequence[ChannelFit],
    spec: FibreSpec,
    betas: BetaCoefficients,
    settings: Optional[EngineSettings] = None,
) -> NliBreakdown:
    """
    Full closed-form NLI breakdown of channel i.

    Args:
        i: Channel-of-interest index
        grid: WDM grid
        fits: Per-channel fits in channel order
        spec: Fibre description
        betas: Dispersion coefficients
        settings: Engine settings

    Returns:
        NliBreakdown of channel i
    """
    settings = settings or EngineSettings()
    n = grid.n_spans
    spm1, xpm1 = eta_spm_xpm_incoherent(i, grid, fits, spec, betas, settings)

    spm_cc = xpm_cc = 0.0
    if settings.coherent_corrections and n > 1:
        spm_cc = eta_spm_coherent(
            i, grid, fits[i], spec, betas, n, settings.spm_coherent_si
        )
        xpm_cc = math.fsum(
            eta_xpm_coherent(
                i, k, grid, fits, spec, betas, n, settings.xpm_coherent_path
            )
            for k in range(grid.n_channels)
            if k != i
        )

    fwm = 0.0
    fallbacks = 0
    if settings.fwm:
        fwm, contributions = eta_fwm_total(i, grid, fits, spec, betas, settings)
        fallbacks = sum(c.path == QUADRATURE_FALLBACK for c in contributions)

    return make_breakdown(
        i,
        grid,
        spec,
        settings,
        n * spm1,
        spm_cc,
        n * xpm1,
        xpm_cc,
        fwm,
        fwm_fallbacks=fallbacks,
    )


class ClosedFormModel:
    """Closed-form NLI estimator bound to one fibre and grid."""

    def __init__(
        self,
        spec: FibreSpec,
        grid: WdmGrid,
        settings: Optional[EngineSettings] = None,
        fits: Optional[Sequence[ChannelFit]] = None,
    ):
        """
        Initialize the model.

        Args:
            spec: Fibre description
            grid: WDM grid
            settings: Engine settings, defaults to EngineSettings()
            fits: Precomputed per-channel fits; computed on first use if None
        """
        self.spec = spec
        self.grid = grid
        self.settings = settings or EngineSettings()
        self.betas = dispersion_to_betas(spec)
        self._fits: Optional[Tuple[ChannelFit, ...]] = (
            tuple(fits) if fits is not None else None
        )

    def fits(self, threads: int = 1) -> Tuple[ChannelFit, ...]:
        """Per-channel ISRS fits, computed once."""
        if self._fits is None:
            self._fits = fit_all_channels(
                self.grid, self.spec, self.settings, threads=threads
            )
        return self._fits

    def evaluate_channel(self, i: int) -> NliBreakdown:
        started = time.perf_counter()
        result = assemble(
            i, self.grid, self.fits(), self.spec, self.betas, self.settings
        )
        logger.debug(
            "channel %d evaluated in %.3f s", i + 1, time.perf_counter() - started
        )
        return result

    def evaluate(
        self, channels: Optional[Sequence[int]] = None, threads: int = 1
    ) -> List[NliBreakdown]:
        """
        Evaluate a set of channels (0-based), all by default.

        Results come back in the order of ``channels`` regardless of
        ``threads``.
        """
        self.fits(threads)
        indices = list(range(self.grid.n_channels)) if channels is None else list(channels)
        if threads <= 1:
            results = [self.evaluate_channel(i) for i in indices]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(self.evaluate_channel, indices))
        logger.info("closed-form model evaluated %d channel(s)", len(results))
        return results
