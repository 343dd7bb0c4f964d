"""
Phase mismatch of a frequency triplet and the multi-span phased-array factor.

All frequencies are offsets from f_ref [Hz]; phase mismatches are in rad/m.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .system import BetaCoefficients
from .utils import DegenerateParameterError, TripletMismatchError

__all__ = [
    "TRIPLET_TOLERANCE",
    "TaylorPhase",
    "phi_exact",
    "taylor_coefficients",
    "taylor_phase",
    "phi_spm",
    "phi_xpm",
    "phased_array",
    "phased_array_sum",
]

ArrayLike = Union[float, np.ndarray]

# |f_j + f_k - f_m - f_i| allowed for triplet membership [Hz]
TRIPLET_TOLERANCE = 1e-3

_FOUR_PI2 = 4 * math.pi**2
_C4 = 2 * math.pi**2 / 3


@dataclass(frozen=True)
class TaylorPhase:
    """First-order expansion phi ~ phi0 + phi1 f1 + phi2 f2 about a triplet."""

    phi0: float
    phi1: float
    phi2: float


def phi_exact(
    f1: ArrayLike, f2: ArrayLike, f_i: ArrayLike, betas: BetaCoefficients
) -> ArrayLike:
    """
    Phase mismatch including the full fourth-order dispersion bracket.

    Args:
        f1: First pump offset [Hz]
        f2: Second pump offset [Hz]
        f_i: Channel-of-interest offset [Hz]
        betas: Dispersion coefficients

    Returns:
        Phase mismatch [rad/m]; broadcasts over array inputs
    """
    d1 = np.subtract(f1, f_i)
    d2 = np.subtract(f2, f_i)
    fi = np.asarray(f_i, dtype=float)
    quartic = (
        d1 * d1 + 1.5 * d1 * d2 + 3 * d1 * fi + d2 * d2 + 3 * d2 * fi + 3 * fi * fi
    )
    bracket = (
        betas.beta2
        + math.pi * betas.beta3 * np.add(f1, f2)
        + _C4 * betas.beta4 * quartic
    )
    out = -_FOUR_PI2 * d1 * d2 * bracket
    return float(out) if np.ndim(out) == 0 else out


def taylor_coefficients(
    f_j: ArrayLike, f_k: ArrayLike, f_i: ArrayLike, betas: BetaCoefficients
) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """Vectorised (phi0, phi1, phi2) for triplets anchored at (f_j, f_k)."""
    dj = np.subtract(f_j, f_i)
    dk = np.subtract(f_k, f_i)
    fi = np.asarray(f_i, dtype=float)
    q0 = dj * dj + 1.5 * dj * dk + 3 * dj * fi + dk * dk + 3 * dk * fi + 3 * fi * fi
    q1 = 2 * dj + 1.5 * dk + 3 * fi
    q2 = 2 * dk + 1.5 * dj + 3 * fi
    fsum = np.add(f_j, f_k)
    b2, b3, b4 = betas.beta2, betas.beta3, betas.beta4
    phi0 = -_FOUR_PI2 * dj * dk * (b2 + math.pi * b3 * fsum + _C4 * b4 * q0)
    phi1 = -_FOUR_PI2 * dk * (
        b2 + math.pi * b3 * (fsum + dj) + _C4 * b4 * (q0 + dj * q1)
    )
    phi2 = -_FOUR_PI2 * dj * (
        b2 + math.pi * b3 * (fsum + dk) + _C4 * b4 * (q0 + dk * q2)
    )
    return phi0, phi1, phi2


def taylor_phase(
    triplet: Tuple[float, float, float, float],
    betas: BetaCoefficients,
    tolerance: float = TRIPLET_TOLERANCE,
) -> TaylorPhase:
    """
    Taylor coefficients of phi(f1 + f_j, f2 + f_k, f_i) about (0, 0).

    Args:
        triplet: Offsets (f_j, f_k, f_m, f_i) [Hz]
        betas: Dispersion coefficients
        tolerance: Allowed violation of f_j + f_k - f_m = f_i [Hz]

    Returns:
        TaylorPhase with phi0 [rad/m], phi1 and phi2 [rad s/m]

    Raises:
        TripletMismatchError: If the frequencies do not form a triplet
    """
    f_j, f_k, f_m, f_i = triplet
    mismatch = f_j + f_k - f_m - f_i
    if abs(mismatch) > tolerance:
        raise TripletMismatchError(
            f"f_j + f_k - f_m - f_i = {mismatch:.6g} Hz exceeds {tolerance:g} Hz"
        )
    phi0, phi1, phi2 = taylor_coefficients(f_j, f_k, f_i, betas)
    return TaylorPhase(phi0=float(phi0), phi1=float(phi1), phi2=float(phi2))


def phi_spm(f_i: ArrayLike, betas: BetaCoefficients) -> ArrayLike:
    """Mixed derivative d2 phi / df1 df2 at (f_i, f_i) [rad s^2/m]."""
    fi = np.asarray(f_i, dtype=float)
    out = -_FOUR_PI2 * (
        betas.beta2
        + 2 * math.pi * betas.beta3 * fi
        + 2 * math.pi**2 * betas.beta4 * fi * fi
    )
    return float(out) if out.ndim == 0 else out


def phi_xpm(f_i: float, f_k: float, betas: BetaCoefficients) -> float:
    """
    Slope of phi along the channel-of-interest axis in the XPM region.

    Raises:
        DegenerateParameterError: If f_k equals f_i
    """
    if f_k == f_i:
        raise DegenerateParameterError(
            "XPM mismatch needs an interferer distinct from the COI"
        )
    return taylor_phase((f_i, f_k, f_k, f_i), betas).phi1


def phased_array(phi: ArrayLike, span_length: float, n_spans: int) -> ArrayLike:
    """
    |sin(N phi L / 2) / sin(phi L / 2)|^2, equal to N^2 at phase matching.

    Args:
        phi: Phase mismatch [rad/m]
        span_length: Span length [m]
        n_spans: Number of identical spans, >= 1

    Returns:
        Phased-array factor in [0, n_spans^2]
    """
    if n_spans < 1:
        raise DegenerateParameterError(f"n_spans must be >= 1, got {n_spans}")
    phi = np.asarray(phi, dtype=float)
    if n_spans == 1:
        out = np.ones_like(phi)
    else:
        half = phi * span_length / 2
        den = np.sin(half)
        matched = np.abs(den) < 1e-12
        safe = np.where(matched, 1.0, den)
        ratio = np.sin(n_spans * half) / safe
        out = np.where(matched, float(n_spans**2), ratio * ratio)
    return float(out) if out.ndim == 0 else out


def phased_array_sum(phi: ArrayLike, span_length: float, n_spans: int) -> ArrayLike:
    """Cosine-sum form N + 2 sum_n (N - n) cos(n phi L) of :func:`phased_array`."""
    phi = np.asarray(phi, dtype=float)
    out = np.full_like(phi, float(n_spans))
    for n in range(1, n_spans):
        out = out + 2 * (n_spans - n) * np.cos(n * phi * span_length)
    return float(out) if out.ndim == 0 else out
