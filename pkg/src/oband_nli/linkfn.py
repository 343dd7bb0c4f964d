"""
Closed-form link function built from per-channel ISRS fits.

Each square-root profile sqrt(rho_n) = (T_n - T~_n e^(-alpha~_n z)) e^(-alpha_n z / 2)
is a two-term exponential sum, so the product over the members of a
frequency combination is a sum over index tuples l in {0, 1}^M. Every term
integrates over the span to (1 - e^((-alpha_l + j phi) L)) / (-alpha_l + j phi),
which is replaced by kappa_l / (-alpha~_l + j phi). The link function is then

    mu(phi) = |sum_l T_l kappa_l / (-alpha~_l + j phi)|^2
            = sum_{l, l'} T_l T_l' kappa_l kappa_l'
              (alpha~_l alpha~_l' + phi^2) / ((alpha~_l^2 + phi^2)(alpha~_l'^2 + phi^2))
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .profile import ChannelFit
from .utils import NumericError

__all__ = [
    "LinkFnTerms",
    "FitTable",
    "fraction_parameters",
    "stacked_member_terms",
    "member_terms",
    "link_fn_terms",
    "spm_terms",
    "xpm_terms",
    "power_profile_terms",
    "link_fn_closed",
    "link_fn_amplitude",
    "link_fn_antiderivative",
]

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class LinkFnTerms:
    """Per-index-tuple factors T_l, kappa_l, alpha~_l and alpha_l."""

    t: np.ndarray
    kappa: np.ndarray
    alpha_tilde: np.ndarray
    alpha: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def row(self, n: int) -> "LinkFnTerms":
        """One triplet's terms out of a batch built by :func:`stacked_member_terms`."""
        return LinkFnTerms(
            t=self.t[n], kappa=self.kappa[n], alpha_tilde=self.alpha_tilde[n], alpha=self.alpha[n]
        )

    @property
    def weights(self) -> np.ndarray:
        """W_l = T_l kappa_l sum_l' T_l' kappa_l' / (alpha~_l + alpha~_l')."""
        tk = self.t * self.kappa
        pair = 1.0 / (self.alpha_tilde[..., :, None] + self.alpha_tilde[..., None, :])
        return np.asarray(tk * np.einsum("...lm,...m->...l", pair, tk))

    def peak(self) -> float:
        """mu at phi = 0, (sum_l T_l kappa_l / alpha~_l)^2."""
        return float(np.sum(self.t * self.kappa / self.alpha_tilde) ** 2)


def fraction_parameters(
    alpha: ArrayLike, span_length: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Replace (1 - e^((-a + j phi) L)) / (-a + j phi) by kappa / (-a~ + j phi).

    a~ and kappa match the value and the first phi-derivative of the span
    integral at phi = 0::

        a~    = a (1 - E) / (1 - E - a L E),  E = e^(-a L)
        kappa = a~ (1 - E) / a

    Args:
        alpha: Exponential decay rate(s) a [1/m]
        span_length: Span length L [m]

    Returns:
        Tuple of (alpha_tilde [1/m], kappa [dimensionless])

    Raises:
        NumericError: If any decay rate is not strictly positive
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(~(a > 0)):
        raise NumericError(
            f"link-function decay rate must be > 0, got {float(np.min(a)):.6g} 1/m"
        )
    x = a * span_length
    one_minus_e = -np.expm1(-x)
    # 1 - e^-x (1 + x), series below x = 1e-2
    series = x * x * (0.5 - x / 3 + x * x / 8 - x**3 / 30)
    den = np.where(x < 1e-2, series, one_minus_e - x * np.exp(-x))
    alpha_tilde = a * one_minus_e / den
    kappa = alpha_tilde * one_minus_e / a
    return alpha_tilde, kappa


@dataclass(frozen=True, eq=False)
class FitTable:
    """Channel-indexed arrays of the fit parameters used by batched terms."""

    alpha: np.ndarray
    alpha_tilde: np.ndarray
    t: np.ndarray
    t_tilde: np.ndarray

    @classmethod
    def from_fits(cls, fits: Sequence[ChannelFit]) -> "FitTable":
        return cls(
            alpha=np.array([f.alpha_i for f in fits]),
            alpha_tilde=np.array([f.alpha_tilde_i for f in fits]),
            t=np.array([f.t_i for f in fits]),
            t_tilde=np.array([f.t_tilde_i for f in fits]),
        )


def stacked_member_terms(
    table: FitTable,
    members: np.ndarray,
    span_length: float,
    cancel: Optional[np.ndarray] = None,
) -> LinkFnTerms:
    """
    Batched :func:`member_terms` for many member tuples at once.

    Args:
        table: Fit parameters indexed by channel
        members: Channel indices, shape (T, M)
        span_length: Span length [m]
        cancel: COI channel index per row, shape (T,), or None

    Returns:
        LinkFnTerms whose arrays have shape (T, 2^M)
    """
    members = np.atleast_2d(np.asarray(members, dtype=int))
    ls = np.array(list(itertools.product((0, 1), repeat=members.shape[1])))
    on = ls[None, :, :].astype(bool)
    t = np.prod(
        np.where(on, -table.t_tilde[members][:, None, :], table.t[members][:, None, :]),
        axis=-1,
    )
    alpha = np.sum(
        ls[None, :, :] * table.alpha_tilde[members][:, None, :]
        + table.alpha[members][:, None, :] / 2,
        axis=-1,
    )
    if cancel is not None:
        alpha = alpha - table.alpha[np.asarray(cancel, dtype=int)][:, None] / 2
    alpha_tilde, kappa = fraction_parameters(alpha, span_length)
    return LinkFnTerms(t=t, kappa=kappa, alpha_tilde=alpha_tilde, alpha=alpha)


def member_terms(
    members: Sequence[ChannelFit],
    span_length: float,
    cancel: Optional[ChannelFit] = None,
) -> LinkFnTerms:
    """
    Terms of prod_n sqrt(rho_n), optionally divided by e^(-alpha_i z / 2).

    Args:
        members: Fits whose square-root profiles multiply, e.g. (j, k, m)
        span_length: Span length [m]
        cancel: COI fit whose loss is divided out with its Raman term neglected

    Returns:
        LinkFnTerms over the 2^len(members) index tuples, in lexicographic order
    """
    fits = list(members) + ([cancel] if cancel is not None else [])
    table = FitTable.from_fits(fits)
    index = np.arange(len(members))[None, :]
    cancel_index = np.array([len(members)]) if cancel is not None else None
    return stacked_member_terms(table, index, span_length, cancel_index).row(0)


def link_fn_terms(
    triplet: Tuple[int, int, int, int],
    fits: Sequence[ChannelFit],
    span_length: float,
    omega_assignment: str = "cancel_equal",
) -> LinkFnTerms:
    """
    Link-function terms of an FWM triplet (j, k, m, i) given as channel indices.

    With ``cancel_equal`` (default) a triplet with m = i cancels rho_m against
    rho_i and keeps (j, k); otherwise (j, k, m) are kept and the COI loss is
    divided out with its Raman term neglected. ``transposed`` swaps the two
    forms.
    """
    j, k, m, i = triplet
    omega1 = m == i
    three_members = not omega1 if omega_assignment == "cancel_equal" else omega1
    if three_members:
        return member_terms((fits[j], fits[k], fits[m]), span_length, cancel=fits[i])
    return member_terms((fits[j], fits[k]), span_length)


def spm_terms(fit_i: ChannelFit, span_length: float) -> LinkFnTerms:
    """SPM: rho_i^(3/2) / rho_i^(1/2) leaves the members (i, i)."""
    return member_terms((fit_i, fit_i), span_length)


def xpm_terms(fit_k: ChannelFit, span_length: float) -> LinkFnTerms:
    """XPM with interferer k: rho_i rho_k^2 / rho_i leaves the members (k, k)."""
    return member_terms((fit_k, fit_k), span_length)


def power_profile_terms(fit: ChannelFit, span_length: float) -> LinkFnTerms:
    """
    Terms of the power profile rho ~ (T' - T~' e^(-alpha~ z)) e^(-alpha z).

    Used by the multi-span coherent corrections, where the weights are T'
    and -T~' and the decay rates are alpha + l alpha~.
    """
    alpha = np.array([fit.alpha_i, fit.alpha_i + fit.alpha_tilde_i])
    alpha_tilde, kappa = fraction_parameters(alpha, span_length)
    t = np.array([fit.t_prime_i, -fit.t_tilde_prime_i])
    return LinkFnTerms(t=t, kappa=kappa, alpha_tilde=alpha_tilde, alpha=alpha)


def link_fn_closed(terms: LinkFnTerms, phi: ArrayLike) -> ArrayLike:
    """
    Closed-form link function mu(phi) as the (l, l') pair sum.

    Args:
        terms: Link-function terms
        phi: Phase mismatch(es) [rad/m]

    Returns:
        mu [m^2], non-negative
    """
    phi = np.asarray(phi, dtype=float)
    p2 = (phi * phi)[..., None, None]
    a = terms.alpha_tilde[:, None]
    b = terms.alpha_tilde[None, :]
    tk = terms.t * terms.kappa
    coef = tk[:, None] * tk[None, :]
    out = np.sum(coef * (a * b + p2) / ((a * a + p2) * (b * b + p2)), axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def link_fn_amplitude(terms: LinkFnTerms, phi: ArrayLike) -> ArrayLike:
    """Complex amplitude sum_l T_l kappa_l / (-alpha~_l + j phi); mu = |.|^2."""
    phi = np.asarray(phi, dtype=float)
    out = np.sum(
        terms.t * terms.kappa / (-terms.alpha_tilde + 1j * phi[..., None]), axis=-1
    )
    return complex(out) if out.ndim == 0 else out


def link_fn_antiderivative(terms: LinkFnTerms, phi: ArrayLike) -> ArrayLike:
    """
    A(phi) with dA/dphi = mu(phi) and A(0) = 0.

    Each pair integrates to [atan(phi/a) + atan(phi/b)] / (a + b); by the
    pair symmetry A(phi) = 2 sum_l W_l atan(phi / alpha~_l).
    """
    phi = np.asarray(phi, dtype=float)
    out = 2 * np.sum(
        terms.weights * np.arctan(phi[..., None] / terms.alpha_tilde), axis=-1
    )
    return float(out) if out.ndim == 0 else out

