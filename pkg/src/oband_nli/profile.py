"""
Signal power profiles under inter-channel stimulated Raman scattering.

Three profiles live here:

* the closed-form normalised profile rho(z, f) of a triangular Raman gain,
* its first-order square-root Taylor form used by the closed-form engine,
* a coupled per-channel power ODE, integrated with fixed-step RK4.

:func:`fit_channel` maps the reference profile (closed form or ODE) onto the
three effective parameters (alpha_i, alpha_tilde_i, C_r,i) of the Taylor form.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy import optimize

from .system import EngineSettings, FibreSpec, WdmGrid
from .utils import FitDivergenceError, OdeInstabilityError

__all__ = [
    "ChannelFit",
    "effective_length",
    "mean_attenuation",
    "isrs_factors",
    "rho_closed",
    "sqrt_rho_taylor",
    "solve_isrs_ode",
    "rho_reference",
    "fit_channel",
    "fit_all_channels",
]

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Below this |B_tot x / 2| the ratio y / sinh(y) is taken from its series.
_SINH_SERIES_LIMIT = 1e-6

# Normalised fit bounds: (alpha, alpha_tilde, C_r) relative to physical values.
_LOWER = np.array([0.5, 0.5, 0.0])
_UPPER = np.array([2.0, 2.0, 4.0])


@dataclass(frozen=True)
class ChannelFit:
    """Effective ISRS parameters of one channel and the derived T factors."""

    f_offset: float
    alpha_i: float
    alpha_tilde_i: float
    cr_i: float
    t_tilde_i: float
    t_i: float
    t_tilde_prime_i: float
    t_prime_i: float
    residual_rms: float = 0.0
    converged: bool = True

    @classmethod
    def from_parameters(
        cls,
        f_offset: float,
        alpha: float,
        alpha_tilde: float,
        cr: float,
        total_power: float,
        residual_rms: float = 0.0,
        converged: bool = True,
    ) -> "ChannelFit":
        """
        Build a fit record, deriving T, T~, T' and T~' from the parameters.

        Args:
            f_offset: Channel offset from f_ref [Hz]
            alpha: Effective loss alpha_i [1/m]
            alpha_tilde: Effective auxiliary loss alpha~_i [1/m]
            cr: Effective Raman slope C_r,i [1/(W m Hz)]
            total_power: Launch power summed over the grid [W]
            residual_rms: RMS fit residual of sqrt(rho)
            converged: False when the parameters are a physical fallback
        """
        t_tilde = -total_power * cr * f_offset / (2 * alpha_tilde)
        t_tilde_prime = -total_power * cr * f_offset / alpha_tilde
        return cls(
            f_offset=f_offset,
            alpha_i=alpha,
            alpha_tilde_i=alpha_tilde,
            cr_i=cr,
            t_tilde_i=t_tilde,
            t_i=1.0 + t_tilde,
            t_tilde_prime_i=t_tilde_prime,
            t_prime_i=1.0 + t_tilde_prime,
            residual_rms=residual_rms,
            converged=converged,
        )


def effective_length(z: ArrayLike, alpha: float) -> ArrayLike:
    """L_eff(z) = (1 - e^(-alpha z)) / alpha [m]."""
    out = -np.expm1(-alpha * np.asarray(z, dtype=float)) / alpha
    return float(out) if np.ndim(out) == 0 else out


def mean_attenuation(grid: WdmGrid, spec: FibreSpec) -> float:
    """Power-weighted mean loss over the grid [1/m]."""
    alphas = spec.alpha_at(grid.offsets)
    return float(np.sum(alphas * grid.powers) / grid.total_power)


def isrs_factors(
    z: ArrayLike, grid: WdmGrid, spec: FibreSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Frequency-independent factors of :func:`rho_closed`.

    Returns:
        Tuple of (B_tot x / (2 sinh(B_tot x / 2)), x) with
        x = P_tot C_r L_eff(z) [1/Hz], so rho = ratio e^(-x f - alpha(f) z)
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(
        grid.total_power
        * spec.raman_slope
        * effective_length(z, mean_attenuation(grid, spec))
    )
    y = grid.total_bandwidth * x / 2
    small = np.abs(y) < _SINH_SERIES_LIMIT
    safe = np.where(small, 1.0, y)
    ratio = np.where(small, 1.0 - y * y / 6, safe / np.sinh(safe))
    return ratio, x


def rho_closed(z: ArrayLike, f_i: float, grid: WdmGrid, spec: FibreSpec) -> ArrayLike:
    """
    Closed-form normalised power profile under a triangular Raman gain.

    rho = B_tot x e^(-x f_i) / (2 sinh(B_tot x / 2)) e^(-alpha_i z) with
    x = P_tot C_r L_eff(z), L_eff taken at the power-weighted mean loss.

    Args:
        z: Distance(s) along the span [m]
        f_i: Channel offset [Hz]
        grid: WDM grid
        spec: Fibre description

    Returns:
        rho(z), strictly positive, equal to 1 at z = 0
    """
    z = np.asarray(z, dtype=float)
    alpha_i = float(spec.alpha_at(f_i))
    ratio, x = isrs_factors(z, grid, spec)
    out = ratio * np.exp(-x * f_i - alpha_i * z)
    return float(out) if out.ndim == 0 else out


def sqrt_rho_taylor(z: ArrayLike, fit: ChannelFit, grid: WdmGrid) -> ArrayLike:
    """e^(-alpha_i z / 2) (1 - P_tot C_r,i f_i L_eff(z; alpha~_i) / 2)."""
    z = np.asarray(z, dtype=float)
    leff = effective_length(z, fit.alpha_tilde_i)
    raman = grid.total_power * fit.cr_i * fit.f_offset * np.asarray(leff) / 2
    out = np.exp(-fit.alpha_i * z / 2) * (1.0 - raman)
    return float(out) if out.ndim == 0 else out


def _isrs_rhs(
    powers: np.ndarray, alphas: np.ndarray, offsets: np.ndarray, raman_slope: float
) -> np.ndarray:
    transfer = raman_slope * (np.dot(offsets, powers) - offsets * np.sum(powers))
    return powers * (transfer - alphas)


@lru_cache(maxsize=32)
def solve_isrs_ode(
    grid: WdmGrid, spec: FibreSpec, steps_per_km: float = 2.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate dP_n/dz = -alpha_n P_n + C_r P_n sum_m (f_m - f_n) P_m over a span.

    Fixed-step classical RK4 with ceil(L_km * steps_per_km) steps. Results are
    cached per (grid, spec, steps_per_km) and returned read-only.

    Args:
        grid: WDM grid with launch powers
        spec: Fibre description
        steps_per_km: Step density, at least 2

    Returns:
        Tuple of (z [m] with shape (S+1,), powers [W] with shape (N_ch, S+1))

    Raises:
        OdeInstabilityError: If any power becomes non-positive or non-finite
    """
    n_steps = max(1, math.ceil(spec.span_length / 1e3 * steps_per_km))
    dz = spec.span_length / n_steps
    alphas = np.asarray(spec.alpha_at(grid.offsets), dtype=float)
    offsets = grid.offsets
    cr = spec.raman_slope

    trace = np.empty((grid.n_channels, n_steps + 1))
    p = grid.powers.astype(float)
    trace[:, 0] = p
    for step in range(1, n_steps + 1):
        k1 = _isrs_rhs(p, alphas, offsets, cr)
        k2 = _isrs_rhs(p + dz / 2 * k1, alphas, offsets, cr)
        k3 = _isrs_rhs(p + dz / 2 * k2, alphas, offsets, cr)
        k4 = _isrs_rhs(p + dz * k3, alphas, offsets, cr)
        p = p + dz / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise OdeInstabilityError(
                f"channel power left the positive range at z = {step * dz:.1f} m; "
                f"increase ode_steps_per_km (currently {steps_per_km:g})"
            )
        trace[:, step] = p

    z = np.linspace(0.0, spec.span_length, n_steps + 1)
    z.flags.writeable = False
    trace.flags.writeable = False
    logger.debug("ISRS ODE: %d channels, %d steps", grid.n_channels, n_steps)
    return z, trace


def rho_reference(
    z: ArrayLike,
    f_i: float,
    grid: WdmGrid,
    spec: FibreSpec,
    mode: str = "analytic",
    steps_per_km: float = 2.0,
) -> ArrayLike:
    """
    Reference profile used for fitting and by the integral model.

    ``analytic`` returns :func:`rho_closed`. ``ode`` returns P_n(z) / P_n(0)
    of the channel nearest to f_i, log-linearly interpolated between RK4
    nodes.
    """
    if mode == "analytic":
        return rho_closed(z, f_i, grid, spec)
    if mode != "ode":
        raise ValueError(f"unknown profile mode: {mode}")
    zs, trace = solve_isrs_ode(grid, spec, steps_per_km)
    n = int(grid.nearest_index(f_i))
    log_rho = np.log(trace[n] / trace[n, 0])
    out = np.exp(np.interp(z, zs, log_rho))
    return float(out) if np.ndim(out) == 0 else out


def _taylor_model(
    params: np.ndarray,
    z: np.ndarray,
    f_i: float,
    total_power: float,
    physical: Tuple[float, float],
) -> Tuple[np.ndarray, np.ndarray]:
    """Model values and Jacobian w.r.t. the normalised parameters."""
    alpha0, cr0 = physical
    alpha = params[0] * alpha0
    alpha_tilde = params[1] * alpha0
    cr = params[2] * cr0
    decay = np.exp(-alpha * z / 2)
    leff = -np.expm1(-alpha_tilde * z) / alpha_tilde
    k = total_power * f_i / 2
    bracket = 1.0 - k * cr * leff
    model = decay * bracket
    dleff = (z * np.exp(-alpha_tilde * z) - leff) / alpha_tilde
    jac = np.column_stack(
        [
            -alpha0 * z / 2 * model,
            -alpha0 * decay * k * cr * dleff,
            -cr0 * decay * k * leff,
        ]
    )
    return model, jac


def fit_channel(
    f_i: float,
    grid: WdmGrid,
    spec: FibreSpec,
    settings: Optional[EngineSettings] = None,
) -> ChannelFit:
    """
    Fit (alpha_i, alpha~_i, C_r,i) so that the Taylor form matches sqrt(rho).

    Minimises sum_z [sqrt_rho_taylor(z) - sqrt(rho_reference(z))]^2 over a
    uniform grid of ``settings.fit_samples`` points on [0, L] with bounded
    trust-region least squares. Parameters are normalised to their physical
    values (alpha(f_i), alpha(f_i), C_r) and bounded to [0.5, 2], [0.5, 2]
    and [0, 4].

    Args:
        f_i: Channel offset [Hz]
        grid: WDM grid
        spec: Fibre description
        settings: Engine settings (fit samples, threshold, strictness, mode)

    Returns:
        ChannelFit; ``converged`` is False when the physical parameters were
        kept because the residual stayed above the threshold

    Raises:
        FitDivergenceError: If the fit fails and ``settings.fit_strict`` is set
    """
    settings = settings or EngineSettings()
    alpha0 = float(spec.alpha_at(f_i))
    cr0 = spec.raman_slope
    total_power = grid.total_power
    z = np.linspace(0.0, spec.span_length, settings.fit_samples)
    target = np.sqrt(
        rho_reference(
            z, f_i, grid, spec, settings.profile_mode, settings.ode_steps_per_km
        )
    )

    def residual_of(params: np.ndarray) -> np.ndarray:
        model, _ = _taylor_model(params, z, f_i, total_power, (alpha0, cr0))
        return np.asarray(model - target)

    def rms(params: np.ndarray) -> float:
        return float(np.sqrt(np.mean(residual_of(params) ** 2)))

    physical = np.ones(3)
    if cr0 == 0.0:
        return ChannelFit.from_parameters(
            f_i, alpha0, alpha0, 0.0, total_power, residual_rms=rms(physical)
        )

    # Only alpha_i shapes the model at zero offset.
    free = np.array([True, f_i != 0.0, f_i != 0.0])

    def residual(x: np.ndarray) -> np.ndarray:
        params = physical.copy()
        params[free] = x
        return residual_of(params)

    def jacobian(x: np.ndarray) -> np.ndarray:
        params = physical.copy()
        params[free] = x
        _, jac = _taylor_model(params, z, f_i, total_power, (alpha0, cr0))
        return np.asarray(jac[:, free])

    result = optimize.least_squares(
        residual,
        physical[free],
        jac=jacobian,
        bounds=(_LOWER[free], _UPPER[free]),
        method="trf",
        x_scale="jac",
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=500,
    )
    params = physical.copy()
    params[free] = result.x
    residual_rms = rms(params)

    # Hitting max_nfev near the optimum is fine; the residual decides.
    if result.status < 0 or residual_rms > settings.fit_residual_threshold:
        message = (
            f"ISRS fit at f_i = {f_i / 1e12:+.3f} THz did not converge "
            f"(residual RMS {residual_rms:.3g}, threshold "
            f"{settings.fit_residual_threshold:g})"
        )
        if settings.fit_strict:
            raise FitDivergenceError(message)
        logger.warning("%s; using physical parameters", message)
        return ChannelFit.from_parameters(
            f_i,
            alpha0,
            alpha0,
            cr0,
            total_power,
            residual_rms=rms(physical),
            converged=False,
        )

    return ChannelFit.from_parameters(
        f_i,
        float(params[0] * alpha0),
        float(params[1] * alpha0),
        float(params[2] * cr0),
        total_power,
        residual_rms=residual_rms,
    )


def fit_all_channels(
    grid: WdmGrid,
    spec: FibreSpec,
    settings: Optional[EngineSettings] = None,
    threads: int = 1,
) -> Tuple[ChannelFit, ...]:
    """Fit every channel of the grid; results are in channel order."""
    settings = settings or EngineSettings()
    if settings.profile_mode == "ode":
        # Solve once before fanning out.
        solve_isrs_ode(grid, spec, settings.ode_steps_per_km)
    offsets = [float(f) for f in grid.offsets]
    if threads <= 1:
        fits = [fit_channel(f, grid, spec, settings) for f in offsets]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(lambda f: fit_channel(f, grid, spec, settings), offsets))
    logger.info("fitted ISRS parameters for %d channels", len(fits))
    return tuple(fits)
