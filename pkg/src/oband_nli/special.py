"""
Special functions and closed-form integral identities.

E1 and Si come from :mod:`scipy.special` (``exp1`` accepts complex arguments
on the principal branch, cut along the negative real axis; ``sici`` returns
Si and Ci). The identity helpers are the closed forms the engine integrates
with, and double as test oracles against direct quadrature.
"""

import math
from typing import Union

import numpy as np
from scipy import integrate, special

from .utils import DegenerateParameterError

__all__ = [
    "big_f",
    "exp_integral_e1",
    "sine_integral",
    "atan_surrogate",
    "binomial_expansion",
    "atan_rect_identity",
    "cos_lorentz_integral",
    "atan_strip_integral",
]

ArrayLike = Union[float, np.ndarray]

# Above this Lorentzian width the exponentials of the E1 form leave double range.
_E1_FORM_MAX_A = 300.0


def big_f(x: ArrayLike) -> ArrayLike:
    """F(x) = x atan(x) - ln(1 + x^2) / 2, an even antiderivative of atan."""
    x = np.asarray(x, dtype=float)
    out = x * np.arctan(x) - 0.5 * np.log1p(x * x)
    return float(out) if out.ndim == 0 else out


def exp_integral_e1(z: complex) -> complex:
    """
    Principal-branch exponential integral E1(z) for complex z.

    Args:
        z: Complex argument, non-zero

    Returns:
        E1(z)

    Raises:
        DegenerateParameterError: If z is 0
    """
    z = complex(z)
    if z == 0:
        raise DegenerateParameterError("E1 is singular at z = 0")
    return complex(special.exp1(z))


def sine_integral(x: ArrayLike) -> ArrayLike:
    si, _ = special.sici(x)
    return float(si) if np.ndim(si) == 0 else si


def atan_surrogate(x: ArrayLike) -> ArrayLike:
    """Cheap stand-in for Si(x): same slope at 0 and the same pi/2 limit."""
    out = np.arctan(x)
    return float(out) if np.ndim(out) == 0 else out


def binomial_expansion(x: float, y: float, n: int) -> float:
    """(x + y)^n evaluated term by term as sum_l C(n, l) x^l y^(n - l)."""
    if n < 0:
        raise DegenerateParameterError(f"binomial order must be >= 0, got {n}")
    return math.fsum(math.comb(n, k) * x**k * y ** (n - k) for k in range(n + 1))


def atan_rect_identity(a: float, b: float, c: float, x: float) -> float:
    """
    Closed form of int_0^x (ab + c^2 s^2) / ((a^2 + c^2 s^2)(b^2 + c^2 s^2)) ds.

    Args:
        a: First Lorentzian width, > 0
        b: Second Lorentzian width, > 0
        c: Slope, non-zero
        x: Upper limit

    Returns:
        [atan(cx/a) + atan(cx/b)] / (c (a + b))

    Raises:
        DegenerateParameterError: If c is 0
    """
    if c == 0:
        raise DegenerateParameterError("slope c must be non-zero")
    return (math.atan(c * x / a) + math.atan(c * x / b)) / (c * (a + b))


def cos_lorentz_integral(a: float, x: float) -> float:
    """
    Evaluate int_0^x cos(s) / (a^2 + s^2) ds.

    Uses the E1 closed form

        (1/2a) [e^a Im E1(a - jx) - e^-a Im E1(-a - jx) + sign(x) pi e^-a]

    for a > 0. The integrand only depends on a^2, so negative a is folded.

    Raises:
        DegenerateParameterError: If a is 0
    """
    if a == 0:
        raise DegenerateParameterError("Lorentzian width a must be non-zero")
    a = abs(a)
    if x == 0:
        return 0.0
    if abs(x) < 1e-4 * min(1.0, a):
        return math.atan(x / a) / a - x**3 / (6 * a * a)
    if a > _E1_FORM_MAX_A:
        value, _ = integrate.quad(
            lambda s: 1.0 / (a * a + s * s), 0.0, abs(x), weight="cos", wvar=1.0
        )
        return math.copysign(float(value), x)
    upper = math.exp(a) * exp_integral_e1(complex(a, -x)).imag
    lower = math.exp(-a) * exp_integral_e1(complex(-a, -x)).imag
    branch = math.copysign(math.pi, x) * math.exp(-a)
    return (upper - lower + branch) / (2 * a)


def atan_strip_integral(a: float, b: float, x: float) -> float:
    """
    Closed form of int_{-x}^{x} atan(a + b s) ds = [F(a + bx) - F(a - bx)] / b.

    Raises:
        DegenerateParameterError: If b is 0
    """
    if b == 0:
        raise DegenerateParameterError("slope b must be non-zero")
    return float(big_f(a + b * x) - big_f(a - b * x)) / b
