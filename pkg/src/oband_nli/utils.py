"""Error types and unit helpers shared across the package."""

import math
from typing import Optional

from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "NliError",
    "ConfigError",
    "NumericError",
    "FitDivergenceError",
    "QuadratureConvergenceError",
    "OdeInstabilityError",
    "TripletMismatchError",
    "DegenerateParameterError",
    "BudgetExceededError",
    "SPEED_OF_LIGHT",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_per_km_to_neper_per_m",
    "neper_per_m_to_db_per_km",
    "wavelength_to_offset",
    "offset_to_wavelength",
]


class NliError(Exception):
    """Base exception for every failure raised by oband-nli."""

    exit_code = 2


class ConfigError(NliError):
    """Malformed configuration or violated system invariant.

    Args:
        message: Human readable description of the violated constraint
        field: Dotted path of the offending field (e.g. ``grid.n_spans``)
    """

    exit_code = 1

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NumericError(NliError):
    """A numerical procedure failed to produce a trustworthy value."""

    exit_code = 2


class FitDivergenceError(NumericError):
    """The per-channel ISRS fit could not reach the residual threshold."""


class QuadratureConvergenceError(NumericError):
    """Doubling the quadrature resolution moved the result too much."""


class OdeInstabilityError(NumericError):
    """The ISRS power ODE produced a non-positive or non-finite power."""


class TripletMismatchError(NumericError):
    """Frequencies do not satisfy f_j + f_k - f_m = f_i."""


class DegenerateParameterError(NumericError):
    """A function was evaluated at a parameter value it excludes."""


class BudgetExceededError(NliError):
    """The requested oracle evaluation exceeds the configured cell budget."""

    exit_code = 3


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB to a linear ratio."""
    return float(10.0 ** (value_db / 10.0))


def linear_to_db(value: float) -> float:
    """Convert a linear power ratio to dB."""
    return 10.0 * math.log10(value)


def dbm_to_watt(value_dbm: float) -> float:
    """Convert a power in dBm to watts."""
    return 1e-3 * db_to_linear(value_dbm)


def watt_to_dbm(value_w: float) -> float:
    """Convert a power in watts to dBm."""
    return linear_to_db(value_w / 1e-3)


def db_per_km_to_neper_per_m(value: float) -> float:
    """Convert a power attenuation in dB/km to a power coefficient in 1/m."""
    return value * math.log(10.0) / 10.0 / 1e3


def neper_per_m_to_db_per_km(value: float) -> float:
    """Inverse of :func:`db_per_km_to_neper_per_m`."""
    return value * 1e3 * 10.0 / math.log(10.0)


def wavelength_to_offset(wavelength: float, f_ref: float) -> float:
    """
    Convert an absolute wavelength to a frequency offset from f_ref.

    Args:
        wavelength: Vacuum wavelength [m]
        f_ref: Absolute reference frequency [Hz]

    Returns:
        Frequency offset [Hz]
    """
    return SPEED_OF_LIGHT / wavelength - f_ref


def offset_to_wavelength(offset: float, f_ref: float) -> float:
    """Inverse of :func:`wavelength_to_offset`."""
    return SPEED_OF_LIGHT / (f_ref + offset)
