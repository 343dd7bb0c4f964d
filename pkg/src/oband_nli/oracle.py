"""
Numerical integral model of the ISRS GN model.

The reference the closed-form engine is checked against. It evaluates the
link function by integrating sqrt(rho_1 rho_2 rho_3 / rho_i) e^(j phi z) over
the span on a fixed z-grid, with the exact phase mismatch, and sums the GN
integrand over midpoint cells of every channel slot. Cells are tagged by the
slots (j, k) of (f1, f2): SPM for j = k = i, XPM when exactly one of j, k is
i, FWM when neither is and some channel m completes the pure-FWM triplet
f_j + f_k - f_m = f_i. That is the triplet rectangle of the closed form, so
f3 may cross into a slot next to m within it. Pairs with no partner channel
form the residual region: they belong to the GN integral but to no term of
the closed form. Multi-span coherence enters through the phased-array factor.

Within each z-step the envelope is taken exponential and the step is
integrated exactly against e^(j phi z), so coarse steps do not alias fast
phase rotation back onto phase matching.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .engine import NLI_PREFACTOR, NliBreakdown, make_breakdown
from .phase import TRIPLET_TOLERANCE, phased_array, phi_exact
from .profile import isrs_factors, solve_isrs_ode
from .system import (
    BetaCoefficients,
    EngineSettings,
    FibreSpec,
    QuadratureSettings,
    WdmGrid,
    dispersion_to_betas,
)
from .utils import BudgetExceededError

__all__ = [
    "REGION_NAMES",
    "RegionValue",
    "OracleResult",
    "SpanProfile",
    "mu_numeric",
    "integrate_regions",
    "eta_numeric",
    "check_budget",
    "IntegralOracle",
]

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SPM, XPM, FWM, RESIDUAL = "spm", "xpm", "fwm", "residual"
REGION_NAMES = (SPM, XPM, FWM, RESIDUAL)

# Cells per tile of the (f1, f2) sum.
_TILE_CELLS = 1 << 17

# Below this |kappa| a z-step uses the series of (e^kappa - 1) / kappa.
_PANEL_SERIES = 1e-4


@dataclass(frozen=True)
class RegionValue:
    """eta of one region with (``total``) and without (``incoherent``) span coherence."""

    total: float
    incoherent: float
    cells: int


@dataclass(frozen=True)
class OracleResult:
    """Per-region eta of one channel; ``total`` covers the whole (f1, f2) domain."""

    channel: int
    regions: Dict[str, RegionValue]

    @property
    def total(self) -> float:
        return math.fsum(r.total for r in self.regions.values())

    @property
    def incoherent(self) -> float:
        return math.fsum(r.incoherent for r in self.regions.values())

    @property
    def modelled_total(self) -> float:
        """Total over the SPM, XPM and FWM regions, without the residual cells."""
        return math.fsum(self.regions[name].total for name in (SPM, XPM, FWM))


class SpanProfile:
    """
    Log power profiles on the oracle's z-grid.

    In ``analytic`` mode rho is the closed-form triangular-gain profile,
    which separates as ratio(z) e^(-x(z) f) e^(-alpha(f) z). In ``ode`` mode
    each frequency takes the RK4 trace of its nearest channel.
    """

    def __init__(
        self,
        grid: WdmGrid,
        spec: FibreSpec,
        mode: str = "analytic",
        steps_per_km: float = 2.0,
    ):
        if mode not in ("analytic", "ode"):
            raise ValueError(f"unknown profile mode: {mode}")
        self.grid = grid
        self.spec = spec
        self.mode = mode
        n_steps = max(1, math.ceil(spec.span_length / 1e3 * steps_per_km))
        self.z = np.linspace(0.0, spec.span_length, n_steps + 1)
        self.step = spec.span_length / n_steps
        if mode == "analytic":
            ratio, x = isrs_factors(self.z, grid, spec)
            self._log_ratio = np.log(ratio)
            self._x = x
        else:
            _, trace = solve_isrs_ode(grid, spec, steps_per_km)
            self._log_rho = np.log(trace / trace[:, :1])

    def prepare(
        self, f1: np.ndarray, f2: np.ndarray, f3: np.ndarray, f_i: float
    ) -> Dict[str, np.ndarray]:
        """Per-cell constants for :meth:`log_envelope`."""
        if self.mode == "analytic":
            alpha = self.spec.alpha_at
            loss = (alpha(f1) + alpha(f2) + alpha(f3) - float(alpha(f_i))) / 2
            return {"f3": np.asarray(f3), "loss": np.asarray(loss)}
        nearest = self.grid.nearest_index
        return {
            "n1": nearest(f1),
            "n2": nearest(f2),
            "n3": nearest(f3),
            "ni": np.full(np.shape(f1), int(nearest(f_i))),
        }

    def log_envelope(self, cells: Dict[str, np.ndarray], s: int) -> np.ndarray:
        """ln sqrt(rho_1 rho_2 rho_3 / rho_i) at z-node s."""
        if self.mode == "analytic":
            return np.asarray(
                self._log_ratio[s]
                - self._x[s] * cells["f3"]
                - cells["loss"] * self.z[s]
            )
        lr = self._log_rho[:, s]
        return np.asarray(
            0.5 * (lr[cells["n1"]] + lr[cells["n2"]] + lr[cells["n3"]] - lr[cells["ni"]])
        )

    def amplitude(self, cells: Dict[str, np.ndarray], phi: np.ndarray) -> np.ndarray:
        """int_0^L sqrt(rho_1 rho_2 rho_3 / rho_i) e^(j phi z) dz per cell."""
        phi = np.asarray(phi, dtype=float)
        h = self.step
        rotation = np.exp(1j * phi * h)
        phase = np.ones(phi.shape, dtype=complex)
        acc = np.zeros(phi.shape, dtype=complex)
        g_prev = self.log_envelope(cells, 0)
        for s in range(1, len(self.z)):
            g_next = self.log_envelope(cells, s)
            dg = g_next - g_prev
            kappa = dg + 1j * phi * h
            small = np.abs(kappa) < _PANEL_SERIES
            grown = np.exp(dg) * rotation
            panel = np.where(
                small,
                1 + kappa / 2 + kappa * kappa / 6,
                (grown - 1) / np.where(small, 1.0, kappa),
            )
            acc += np.exp(g_prev) * phase * panel
            phase *= rotation
            g_prev = g_next
        return np.asarray(acc * h)


def mu_numeric(
    f1: ArrayLike,
    f2: ArrayLike,
    f_i: float,
    grid: WdmGrid,
    spec: FibreSpec,
    profile_mode: str = "analytic",
    z_steps_per_km: float = 2.0,
    betas: Optional[BetaCoefficients] = None,
) -> ArrayLike:
    """
    Link function |int_0^L sqrt(rho_1 rho_2 rho_3 / rho_i) e^(j phi z) dz|^2.

    Args:
        f1: First pump offset(s) [Hz]
        f2: Second pump offset(s) [Hz]
        f_i: Channel-of-interest offset [Hz]
        grid: WDM grid (sets the ISRS profiles)
        spec: Fibre description
        profile_mode: ``analytic`` or ``ode``
        z_steps_per_km: z-grid density
        betas: Dispersion coefficients, derived from ``spec`` if None

    Returns:
        mu [m^2]
    """
    betas = betas or dispersion_to_betas(spec)
    f1, f2 = np.broadcast_arrays(np.asarray(f1, dtype=float), np.asarray(f2, dtype=float))
    f3 = f1 + f2 - f_i
    phi = np.asarray(phi_exact(f1, f2, f_i, betas))
    profile = SpanProfile(grid, spec, profile_mode, z_steps_per_km)
    amp = profile.amplitude(profile.prepare(f1, f2, f3, f_i), phi)
    out = np.abs(amp) ** 2
    return float(out) if out.ndim == 0 else out


def _channel_samples(grid: WdmGrid, n: int) -> Dict[str, np.ndarray]:
    """Midpoint samples of every slot: frequency, cell width, PSD and slot index."""
    q = (np.arange(n) + 0.5) / n
    lowers = grid.offsets - grid.bandwidths / 2
    freq = (lowers[:, None] + grid.bandwidths[:, None] * q[None, :]).ravel()
    width = np.repeat(grid.bandwidths / n, n)
    psd = np.repeat(grid.powers / grid.bandwidths, n)
    slot = np.repeat(np.arange(grid.n_channels), n)
    return {"freq": freq, "width": width, "psd": psd, "slot": slot}


def integrate_regions(
    i: int,
    grid: WdmGrid,
    spec: FibreSpec,
    settings: Optional[QuadratureSettings] = None,
    betas: Optional[BetaCoefficients] = None,
) -> OracleResult:
    """
    Riemann sum of the GN integral for channel i, split by region.

    Args:
        i: Channel-of-interest index
        grid: WDM grid
        spec: Fibre description
        settings: Oracle resolution, region filter and profile mode
        betas: Dispersion coefficients, derived from ``spec`` if None

    Returns:
        OracleResult with the SPM, XPM, FWM and residual regions; regions
        excluded by the filter are reported as zero
    """
    settings = settings or QuadratureSettings()
    betas = betas or dispersion_to_betas(spec)
    profile = SpanProfile(grid, spec, settings.profile_mode, settings.z_steps_per_km)
    samples = _channel_samples(grid, settings.riemann_samples_per_axis)
    f_i = float(grid.offsets[i])
    freq, width, psd, slot = (
        samples["freq"],
        samples["width"],
        samples["psd"],
        samples["slot"],
    )
    count = len(freq)
    rows_per_tile = max(1, _TILE_CELLS // count)
    wanted = REGION_NAMES if settings.region_filter == "all" else (settings.region_filter,)
    offsets = grid.offsets

    totals: Dict[str, List[float]] = {name: [] for name in REGION_NAMES}
    singles: Dict[str, List[float]] = {name: [] for name in REGION_NAMES}
    cells: Dict[str, int] = {name: 0 for name in REGION_NAMES}

    for start in range(0, count, rows_per_tile):
        rows = slice(start, min(count, start + rows_per_tile))
        f1 = np.repeat(freq[rows], count)
        f2 = np.tile(freq, rows.stop - rows.start)
        s1 = np.repeat(slot[rows], count)
        s2 = np.tile(slot, rows.stop - rows.start)
        area = np.repeat(width[rows] * psd[rows], count) * np.tile(width * psd, rows.stop - rows.start)
        f3 = f1 + f2 - f_i
        g3 = grid.psd_at(f3)
        target = offsets[s1] + offsets[s2] - f_i
        partner = np.abs(offsets[grid.nearest_index(target)] - target) <= TRIPLET_TOLERANCE
        hits = (s1 == i).astype(int) + (s2 == i).astype(int)
        tags = {
            SPM: hits == 2,
            XPM: hits == 1,
            FWM: (hits == 0) & partner,
            RESIDUAL: (hits == 0) & ~partner,
        }
        for name in wanted:
            mask = tags[name] & (g3 > 0)
            if not np.any(mask):
                continue
            phi = np.asarray(phi_exact(f1[mask], f2[mask], f_i, betas))
            amp = profile.amplitude(
                profile.prepare(f1[mask], f2[mask], f3[mask], f_i), phi
            )
            weight = area[mask] * g3[mask] * np.abs(amp) ** 2
            chi = np.asarray(phased_array(phi, spec.span_length, grid.n_spans))
            totals[name].append(math.fsum(weight * chi))
            singles[name].append(math.fsum(weight))
            cells[name] += int(np.count_nonzero(mask))

    scale = NLI_PREFACTOR * spec.gamma**2 * float(grid.bandwidths[i]) / float(grid.powers[i]) ** 3
    regions = {
        name: RegionValue(
            total=scale * math.fsum(totals[name]),
            incoherent=scale * grid.n_spans * math.fsum(singles[name]),
            cells=cells[name],
        )
        for name in REGION_NAMES
    }
    return OracleResult(channel=i, regions=regions)


def eta_numeric(
    i: int,
    grid: WdmGrid,
    spec: FibreSpec,
    settings: Optional[EngineSettings] = None,
    betas: Optional[BetaCoefficients] = None,
) -> NliBreakdown:
    """
    Integral-model NLI breakdown of channel i.

    The coherent part of each region is its phased-array total minus N_s
    times the single-span value, so coherence factors come out of the same
    decomposition as for the closed form.
    """
    settings = settings or EngineSettings()
    result = integrate_regions(i, grid, spec, settings.oracle, betas)
    spm, xpm, fwm = (result.regions[name] for name in (SPM, XPM, FWM))
    return make_breakdown(
        i,
        grid,
        spec,
        settings,
        spm.incoherent,
        spm.total - spm.incoherent,
        xpm.incoherent,
        xpm.total - xpm.incoherent,
        fwm.total,
        fwm_inc=fwm.incoherent,
    )


def check_budget(grid: WdmGrid, settings: QuadratureSettings, n_channels: int) -> float:
    """
    Refuse oracle runs above the configured cell budget.

    Returns:
        Number of cells the run visits

    Raises:
        BudgetExceededError: If (N_ch n)^2 times the COI count exceeds the budget
    """
    per_axis = grid.n_channels * settings.riemann_samples_per_axis
    cells = float(per_axis) ** 2 * n_channels
    if cells > settings.cell_budget:
        raise BudgetExceededError(
            f"oracle needs {cells:.3g} cells ({grid.n_channels} channels x "
            f"{settings.riemann_samples_per_axis} samples per axis, squared, for "
            f"{n_channels} channel(s)), above engine.oracle.cell_budget = "
            f"{settings.cell_budget:.3g}; lower riemann_samples_per_axis or "
            "select fewer channels"
        )
    return cells


class IntegralOracle:
    """Integral-model NLI estimator bound to one fibre and grid."""

    def __init__(
        self,
        spec: FibreSpec,
        grid: WdmGrid,
        settings: Optional[EngineSettings] = None,
    ):
        self.spec = spec
        self.grid = grid
        self.settings = settings or EngineSettings()
        self.betas = dispersion_to_betas(spec)

    def evaluate_channel(self, i: int) -> NliBreakdown:
        return eta_numeric(i, self.grid, self.spec, self.settings, self.betas)

    def evaluate(
        self, channels: Optional[Sequence[int]] = None, threads: int = 1
    ) -> List[NliBreakdown]:
        """
        Evaluate a set of channels (0-based), all by default.

        Raises:
            BudgetExceededError: Before any work, if the run is too large
        """
        indices = list(range(self.grid.n_channels)) if channels is None else list(channels)
        cells = check_budget(self.grid, self.settings.oracle, len(indices))
        if self.settings.oracle.profile_mode == "ode":
            solve_isrs_ode(self.grid, self.spec, self.settings.oracle.z_steps_per_km)
        if threads <= 1:
            results = [self.evaluate_channel(i) for i in indices]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(self.evaluate_channel, indices))
        logger.info(
            "integral oracle evaluated %d channel(s), %.3g cells", len(results), cells
        )
        return results
