"""
System description: fibre, WDM grid and engine settings.

Everything inside the package is strict SI (Hz, W, m, s). Engineering units
(km, THz, nm, dBm, ps/nm/km) only appear in configuration files and are
converted here, once, at load time. Frequencies are offsets from the
reference frequency f_ref = c / lambda_c.

Dispersion conversion. With D(lambda) = D + S (lambda - lambda_c)
+ Sdot (lambda - lambda_c)^2 / 2 and beta2(omega) = -lambda^2 D / (2 pi c),
repeated differentiation with d lambda / d omega = -lambda^2 / (2 pi c) gives,
at lambda_c::

    beta2 = -lambda^2 D / (2 pi c)
    beta3 = lambda^2 (2 lambda D + lambda^2 S) / (2 pi c)^2
    beta4 = -lambda^4 (6 D + 6 lambda S + lambda^2 Sdot) / (2 pi c)^3
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.constants import h as PLANCK

from .utils import (
    SPEED_OF_LIGHT,
    ConfigError,
    db_per_km_to_neper_per_m,
    db_to_linear,
    dbm_to_watt,
    wavelength_to_offset,
)

__all__ = [
    "O_BAND_DEFAULT_ATTENUATION",
    "FibreSpec",
    "BetaCoefficients",
    "Channel",
    "WdmGrid",
    "QuadratureSettings",
    "EngineSettings",
    "load_config",
    "parse_config",
    "dispersion_to_betas",
    "betas_to_dispersion",
    "ase_power",
]

logger = logging.getLogger(__name__)

# Non-authoritative O-band loss curve (wavelength nm -> dB/km).
O_BAND_DEFAULT_ATTENUATION: Dict[float, float] = {
    1260.0: 0.36,
    1280.0: 0.345,
    1300.0: 0.33,
    1320.0: 0.32,
    1340.0: 0.31,
    1360.0: 0.30,
}

PS_NM_KM = 1e-6  # ps/(nm km) -> s/m^2
PS_NM2_KM = 1e3  # ps/(nm^2 km) -> s/m^3
PS_NM3_KM = 1e12  # ps/(nm^3 km) -> s/m^4

REGIONS = ("all", "spm", "xpm", "fwm")
PROFILE_MODES = ("analytic", "ode")
XPM_COHERENT_PATHS = ("e1_exact", "real_sin")
OMEGA_ASSIGNMENTS = ("cancel_equal", "transposed")


@dataclass(frozen=True)
class FibreSpec:
    """Per-span fibre description in SI units.

    ``attenuation`` holds power loss coefficients [1/m] sampled at
    ``attenuation_offsets`` [Hz]; a single sample means a flat loss.
    """

    span_length: float
    gamma: float
    raman_slope: float
    attenuation: Tuple[float, ...]
    dispersion_D: float
    dispersion_S: float
    dispersion_Sdot: float
    reference_wavelength: float
    attenuation_offsets: Tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        if not self.span_length > 0:
            raise ConfigError("must be > 0", "fibre.span_length_km")
        if not self.gamma >= 0:
            raise ConfigError("must be >= 0", "fibre.gamma_per_w_km")
        if not self.raman_slope >= 0:
            raise ConfigError("must be >= 0", "fibre.raman_slope_per_w_km_thz")
        if not self.reference_wavelength > 0:
            raise ConfigError("must be > 0", "fibre.reference_wavelength_nm")
        if len(self.attenuation) == 0 or len(self.attenuation) != len(
            self.attenuation_offsets
        ):
            raise ConfigError(
                "needs one loss value per sample point", "fibre.attenuation_db_km"
            )
        if any(not (a > 0 and math.isfinite(a)) for a in self.attenuation):
            raise ConfigError("values must be finite and > 0", "fibre.attenuation_db_km")
        offsets = self.attenuation_offsets
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ConfigError(
                "sample points must be distinct", "fibre.attenuation_db_km"
            )
        for name in ("dispersion_D", "dispersion_S", "dispersion_Sdot"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", f"fibre.{name}")

    @property
    def f_ref(self) -> float:
        """Absolute reference frequency c / lambda_c [Hz]."""
        return SPEED_OF_LIGHT / self.reference_wavelength

    def alpha_at(self, offset: Union[float, np.ndarray]) -> Any:
        """Piecewise-linear loss coefficient [1/m], held constant outside the curve."""
        return np.interp(offset, self.attenuation_offsets, self.attenuation)

    def with_raman_slope(self, raman_slope: float) -> "FibreSpec":
        return replace(self, raman_slope=raman_slope)


@dataclass(frozen=True)
class BetaCoefficients:
    """Group-velocity dispersion coefficients about f_ref."""

    beta2: float
    beta3: float
    beta4: float
    f_ref: float


@dataclass(frozen=True)
class Channel:
    """One WDM channel: offset from f_ref [Hz], bandwidth [Hz], launch power [W]."""

    offset: float
    bandwidth: float
    power: float

    @property
    def lower(self) -> float:
        return self.offset - self.bandwidth / 2

    @property
    def upper(self) -> float:
        return self.offset + self.bandwidth / 2


@dataclass(frozen=True)
class WdmGrid:
    """Ordered, non-overlapping channel plan and span count."""

    channels: Tuple[Channel, ...]
    n_spans: int = 1
    per_span_power_scale: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if len(self.channels) == 0:
            raise ConfigError("at least one channel is required", "grid.channels")
        if isinstance(self.n_spans, bool) or not isinstance(self.n_spans, int):
            raise ConfigError("must be an integer", "grid.n_spans")
        if self.n_spans < 1:
            raise ConfigError("must be a positive integer", "grid.n_spans")
        for n, ch in enumerate(self.channels, start=1):
            if not (ch.bandwidth > 0 and math.isfinite(ch.bandwidth)):
                raise ConfigError(f"channel {n}: bandwidth must be > 0", "grid.channels")
            if not (ch.power > 0 and math.isfinite(ch.power)):
                raise ConfigError(f"channel {n}: power must be > 0", "grid.channels")
            if not math.isfinite(ch.offset):
                raise ConfigError(f"channel {n}: frequency must be finite", "grid.channels")
        for n, (a, b) in enumerate(zip(self.channels, self.channels[1:]), start=1):
            if b.offset <= a.offset:
                raise ConfigError(
                    f"channels {n} and {n + 1} are not in increasing frequency order",
                    "grid.channels",
                )
            if b.offset - a.offset < (a.bandwidth + b.bandwidth) / 2:
                raise ConfigError(
                    f"channels {n} and {n + 1} overlap", "grid.channels"
                )
        if self.per_span_power_scale is not None:
            if len(self.per_span_power_scale) != self.n_spans:
                raise ConfigError(
                    f"needs {self.n_spans} entries (one per span)",
                    "grid.per_span_power_scale",
                )
            if any(not (s > 0) for s in self.per_span_power_scale):
                raise ConfigError("entries must be > 0", "grid.per_span_power_scale")

    @classmethod
    def uniform(
        cls,
        count: int,
        spacing: float,
        symbol_rate: float,
        power: float,
        n_spans: int = 1,
    ) -> "WdmGrid":
        """Symmetric grid centred on f_ref with a flat launch power [W]."""
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError("must be a positive integer", "grid.generator.count")
        centre = (count - 1) / 2
        channels = tuple(
            Channel(offset=(n - centre) * spacing, bandwidth=symbol_rate, power=power)
            for n in range(count)
        )
        return cls(channels=channels, n_spans=n_spans)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([ch.offset for ch in self.channels])

    @cached_property
    def bandwidths(self) -> np.ndarray:
        return np.array([ch.bandwidth for ch in self.channels])

    @cached_property
    def powers(self) -> np.ndarray:
        return np.array([ch.power for ch in self.channels])

    @property
    def total_power(self) -> float:
        return float(np.sum(self.powers))

    @property
    def total_bandwidth(self) -> float:
        """Occupied extent max(f + B/2) - min(f - B/2) [Hz]."""
        return float(self.channels[-1].upper - self.channels[0].lower)

    def span_scales(self) -> Tuple[float, ...]:
        """(P_i,q / P_i)^2 for every span q."""
        if self.per_span_power_scale is None:
            return (1.0,) * self.n_spans
        return self.per_span_power_scale

    def slot_index(self, f: Union[float, np.ndarray]) -> np.ndarray:
        """Index of the channel slot containing ``f``, or -1 in gaps and outside."""
        f = np.asarray(f, dtype=float)
        lowers = self.offsets - self.bandwidths / 2
        idx = np.searchsorted(lowers, f, side="right") - 1
        safe = np.clip(idx, 0, self.n_channels - 1)
        inside = (idx >= 0) & (f <= lowers[safe] + self.bandwidths[safe])
        return np.where(inside, safe, -1)

    def nearest_index(self, f: Union[float, np.ndarray]) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        idx = np.searchsorted(self.offsets, f)
        lo = np.clip(idx - 1, 0, self.n_channels - 1)
        hi = np.clip(idx, 0, self.n_channels - 1)
        closer_hi = np.abs(self.offsets[hi] - f) < np.abs(self.offsets[lo] - f)
        return np.where(closer_hi, hi, lo)

    def psd_at(self, f: Union[float, np.ndarray]) -> np.ndarray:
        """Rectangular launch power spectral density [W/Hz]."""
        idx = self.slot_index(f)
        safe = np.clip(idx, 0, self.n_channels - 1)
        return np.where(idx >= 0, self.powers[safe] / self.bandwidths[safe], 0.0)

    def slot_edges(self) -> np.ndarray:
        """Sorted lower and upper slot edges of every channel."""
        lowers = self.offsets - self.bandwidths / 2
        return np.sort(np.concatenate([lowers, lowers + self.bandwidths]))

    def with_spans(self, n_spans: int) -> "WdmGrid":
        """Same channels over ``n_spans`` spans; any per-span power scale is dropped."""
        return WdmGrid(channels=self.channels, n_spans=n_spans)

    def with_flat_power(self, power: float) -> "WdmGrid":
        channels = tuple(replace(ch, power=power) for ch in self.channels)
        return replace(self, channels=channels)

    def restrict_bandwidth(self, bandwidth: float) -> "WdmGrid":
        """Keep only channels whose slot lies within +/- bandwidth/2 of f_ref."""
        kept = tuple(
            ch
            for ch in self.channels
            if ch.lower >= -bandwidth / 2 - 1e-3 and ch.upper <= bandwidth / 2 + 1e-3
        )
        if not kept:
            raise ConfigError(
                f"no channel fits within {bandwidth:g} Hz", "sweep.bandwidth"
            )
        return WdmGrid(channels=kept, n_spans=self.n_spans)


@dataclass(frozen=True)
class QuadratureSettings:
    """Resolution and scope of the numerical integral model."""

    z_steps_per_km: float = 2.0
    riemann_samples_per_axis: int = 500
    region_filter: str = "all"
    cell_budget: float = 5e9
    profile_mode: str = "analytic"

    def __post_init__(self) -> None:
        if not self.z_steps_per_km > 0:
            raise ConfigError("must be > 0", "engine.oracle.z_steps_per_km")
        if (
            not isinstance(self.riemann_samples_per_axis, int)
            or self.riemann_samples_per_axis < 1
        ):
            raise ConfigError(
                "must be a positive integer", "engine.oracle.riemann_samples_per_axis"
            )
        if self.region_filter not in REGIONS:
            raise ConfigError(f"must be one of {REGIONS}", "engine.oracle.region_filter")
        if not self.cell_budget > 0:
            raise ConfigError("must be > 0", "engine.oracle.cell_budget")
        if self.profile_mode not in PROFILE_MODES:
            raise ConfigError(
                f"must be one of {PROFILE_MODES}", "engine.oracle.profile_mode"
            )


@dataclass(frozen=True)
class EngineSettings:
    """Closed-form engine switches and numerical knobs."""

    profile_mode: str = "analytic"
    ode_steps_per_km: float = 2.0
    fit_samples: int = 512
    fit_residual_threshold: float = 1e-2
    fit_strict: bool = False
    coherent_corrections: bool = True
    fwm: bool = True
    degeneracy_threshold: float = 1e-3
    quadrature_resolution: int = 256
    quadrature_segments: int = 16
    quadrature_tolerance_db: float = 0.05
    xpm_coherent_path: str = "e1_exact"
    spm_coherent_si: bool = False
    omega_assignment: str = "cancel_equal"
    noise_figure_db: Optional[float] = None
    oracle: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self) -> None:
        if self.profile_mode not in PROFILE_MODES:
            raise ConfigError(f"must be one of {PROFILE_MODES}", "engine.profile_mode")
        if self.xpm_coherent_path not in XPM_COHERENT_PATHS:
            raise ConfigError(
                f"must be one of {XPM_COHERENT_PATHS}", "engine.xpm_coherent_path"
            )
        if self.omega_assignment not in OMEGA_ASSIGNMENTS:
            raise ConfigError(
                f"must be one of {OMEGA_ASSIGNMENTS}", "engine.omega_assignment"
            )
        if not self.ode_steps_per_km >= 2:
            raise ConfigError("must be >= 2", "engine.ode_steps_per_km")
        for name, minimum in (
            ("fit_samples", 8),
            ("quadrature_resolution", 4),
            ("quadrature_segments", 1),
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise ConfigError(f"must be an integer >= {minimum}", f"engine.{name}")
        if self.quadrature_resolution % 2:
            raise ConfigError("must be even", "engine.quadrature_resolution")
        for name in (
            "fit_residual_threshold",
            "degeneracy_threshold",
            "quadrature_tolerance_db",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", f"engine.{name}")


def dispersion_to_betas(spec: FibreSpec) -> BetaCoefficients:
    """
    Convert the (D, S, Sdot) triple at lambda_c to beta2, beta3, beta4.

    Args:
        spec: Fibre description

    Returns:
        Dispersion coefficients about f_ref
    """
    lam = spec.reference_wavelength
    w = 2 * math.pi * SPEED_OF_LIGHT
    d, s, sdot = spec.dispersion_D, spec.dispersion_S, spec.dispersion_Sdot
    beta2 = -(lam**2) * d / w
    beta3 = lam**2 * (2 * lam * d + lam**2 * s) / w**2
    beta4 = -(lam**4) * (6 * d + 6 * lam * s + lam**2 * sdot) / w**3
    return BetaCoefficients(beta2=beta2, beta3=beta3, beta4=beta4, f_ref=spec.f_ref)


def betas_to_dispersion(
    betas: BetaCoefficients, reference_wavelength: float
) -> Tuple[float, float, float]:
    """Inverse of :func:`dispersion_to_betas`, returning (D, S, Sdot) in SI."""
    lam = reference_wavelength
    w = 2 * math.pi * SPEED_OF_LIGHT
    d = -w * betas.beta2 / lam**2
    s = (w**2 * betas.beta3 - 2 * lam**3 * d) / lam**4
    sdot = (-(w**3) * betas.beta4 - 6 * lam**4 * d - 6 * lam**5 * s) / lam**6
    return d, s, sdot


def ase_power(
    noise_figure: float, gain: float, f_abs: float, ref_bandwidth: float
) -> float:
    """
    Lumped amplifier ASE power over both polarisations.

    P_ASE = 2 n_sp h f (G - 1) B_ref with n_sp = NF / 2.

    Args:
        noise_figure: Noise figure [dB]
        gain: Amplifier gain [dB], at least 0
        f_abs: Absolute optical frequency [Hz]
        ref_bandwidth: Reference bandwidth [Hz]

    Returns:
        ASE power [W]
    """
    if gain < 0:
        raise ConfigError("must be >= 0 dB", "engine.amplifier.gain_db")
    n_sp = db_to_linear(noise_figure) / 2
    return 2 * n_sp * PLANCK * f_abs * (db_to_linear(gain) - 1.0) * ref_bandwidth


# Configuration parsing

_FIBRE_KEYS = {
    "span_length_km",
    "gamma_per_w_km",
    "raman_slope_per_w_km_thz",
    "attenuation_db_km",
    "dispersion_ps_nm_km",
    "slope_ps_nm2_km",
    "curvature_ps_nm3_km",
    "reference_wavelength_nm",
}
_GRID_KEYS = {"n_spans", "generator", "channels", "per_span_power_scale"}
_GENERATOR_KEYS = {"count", "spacing_hz", "symbol_rate_hz", "power_dbm_flat"}
_CHANNEL_KEYS = {"frequency_thz", "wavelength_nm", "offset_hz", "symbol_rate_hz", "power_dbm"}
_ENGINE_KEYS = {
    "profile_mode",
    "ode_steps_per_km",
    "fit_samples",
    "fit_residual_threshold",
    "fit_strict",
    "coherent_corrections",
    "fwm",
    "degeneracy_threshold",
    "quadrature_resolution",
    "quadrature_segments",
    "quadrature_tolerance_db",
    "xpm_coherent_path",
    "spm_coherent_si",
    "omega_assignment",
    "amplifier",
    "oracle",
}
_ORACLE_KEYS = {
    "z_steps_per_km",
    "riemann_samples_per_axis",
    "region_filter",
    "cell_budget",
    "profile_mode",
}


def _section(data: Mapping[str, Any], key: str, path: str) -> Mapping[str, Any]:
    if key not in data:
        raise ConfigError("required section is missing", f"{path}{key}")
    value = data[key]
    if not isinstance(value, dict):
        raise ConfigError("must be an object", f"{path}{key}")
    return value


def _check_keys(data: Mapping[str, Any], allowed: set, path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown key", f"{path}.{key}")


def _number(data: Mapping[str, Any], key: str, path: str, default: Any = None) -> float:
    if key not in data:
        if default is None:
            raise ConfigError("required field is missing", f"{path}.{key}")
        return float(default)
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", f"{path}.{key}")
    if not math.isfinite(value):
        raise ConfigError("must be finite", f"{path}.{key}")
    return float(value)


def _integer(data: Mapping[str, Any], key: str, path: str, default: Optional[int] = None) -> int:
    if key not in data:
        if default is None:
            raise ConfigError("required field is missing", f"{path}.{key}")
        return default
    value = data[key]
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("must be an integer", f"{path}.{key}")
    return value


def _attenuation(
    value: Any, f_ref: float
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    path = "fibre.attenuation_db_km"
    if value == "o_band_default":
        value = [
            {"wavelength_nm": nm, "db_km": db}
            for nm, db in O_BAND_DEFAULT_ATTENUATION.items()
        ]
    if isinstance(value, bool):
        raise ConfigError("must be a number, a curve or 'o_band_default'", path)
    if isinstance(value, (int, float)):
        if not value > 0:
            raise ConfigError("values must be finite and > 0", path)
        return (db_per_km_to_neper_per_m(float(value)),), (0.0,)
    if not isinstance(value, list) or not value:
        raise ConfigError("must be a number, a curve or 'o_band_default'", path)
    samples: List[Tuple[float, float]] = []
    for n, point in enumerate(value):
        where = f"{path}[{n}]"
        if not isinstance(point, dict):
            raise ConfigError("must be an object", where)
        _check_keys(point, {"wavelength_nm", "db_km"}, where)
        nm = _number(point, "wavelength_nm", where)
        db_km = _number(point, "db_km", where)
        if not nm > 0:
            raise ConfigError("must be > 0", f"{where}.wavelength_nm")
        if not db_km > 0:
            raise ConfigError("values must be finite and > 0", f"{where}.db_km")
        samples.append(
            (wavelength_to_offset(nm * 1e-9, f_ref), db_per_km_to_neper_per_m(db_km))
        )
    samples.sort()
    return tuple(a for _, a in samples), tuple(f for f, _ in samples)


def _parse_fibre(data: Mapping[str, Any]) -> FibreSpec:
    path = "fibre"
    _check_keys(data, _FIBRE_KEYS, path)
    wavelength = _number(data, "reference_wavelength_nm", path) * 1e-9
    if not wavelength > 0:
        raise ConfigError("must be > 0", "fibre.reference_wavelength_nm")
    if "attenuation_db_km" not in data:
        raise ConfigError("required field is missing", "fibre.attenuation_db_km")
    attenuation, offsets = _attenuation(
        data["attenuation_db_km"], SPEED_OF_LIGHT / wavelength
    )
    return FibreSpec(
        span_length=_number(data, "span_length_km", path) * 1e3,
        gamma=_number(data, "gamma_per_w_km", path) * 1e-3,
        raman_slope=_number(data, "raman_slope_per_w_km_thz", path) * 1e-15,
        attenuation=attenuation,
        attenuation_offsets=offsets,
        dispersion_D=_number(data, "dispersion_ps_nm_km", path) * PS_NM_KM,
        dispersion_S=_number(data, "slope_ps_nm2_km", path, 0.0) * PS_NM2_KM,
        dispersion_Sdot=_number(data, "curvature_ps_nm3_km", path, 0.0) * PS_NM3_KM,
        reference_wavelength=wavelength,
    )


def _parse_channel(point: Any, n: int, f_ref: float) -> Channel:
    where = f"grid.channels[{n}]"
    if not isinstance(point, dict):
        raise ConfigError("must be an object", where)
    _check_keys(point, _CHANNEL_KEYS, where)
    given = [k for k in ("frequency_thz", "wavelength_nm", "offset_hz") if k in point]
    if len(given) != 1:
        raise ConfigError(
            "exactly one of frequency_thz, wavelength_nm, offset_hz is required", where
        )
    if given[0] == "frequency_thz":
        offset = _number(point, "frequency_thz", where) * 1e12 - f_ref
    elif given[0] == "wavelength_nm":
        nm = _number(point, "wavelength_nm", where)
        if not nm > 0:
            raise ConfigError("must be > 0", f"{where}.wavelength_nm")
        offset = wavelength_to_offset(nm * 1e-9, f_ref)
    else:
        offset = _number(point, "offset_hz", where)
    symbol_rate = _number(point, "symbol_rate_hz", where)
    if not symbol_rate > 0:
        raise ConfigError("must be > 0", f"{where}.symbol_rate_hz")
    power = dbm_to_watt(_number(point, "power_dbm", where))
    return Channel(offset=offset, bandwidth=symbol_rate, power=power)


def _parse_grid(data: Mapping[str, Any], f_ref: float) -> WdmGrid:
    path = "grid"
    _check_keys(data, _GRID_KEYS, path)
    n_spans = _integer(data, "n_spans", path, 1)
    if n_spans < 1:
        raise ConfigError("must be a positive integer", "grid.n_spans")
    scale: Optional[Tuple[float, ...]] = None
    if "per_span_power_scale" in data:
        raw = data["per_span_power_scale"]
        if not isinstance(raw, list):
            raise ConfigError("must be a list of numbers", "grid.per_span_power_scale")
        scale = tuple(
            _number({"v": v}, "v", f"grid.per_span_power_scale[{n}]")
            for n, v in enumerate(raw)
        )
    has_generator = "generator" in data
    has_channels = "channels" in data
    if has_generator == has_channels:
        raise ConfigError("exactly one of generator or channels is required", path)
    if has_generator:
        gen = _section(data, "generator", "grid.")
        where = "grid.generator"
        _check_keys(gen, _GENERATOR_KEYS, where)
        count = _integer(gen, "count", where)
        if count < 1:
            raise ConfigError("must be a positive integer", f"{where}.count")
        spacing = _number(gen, "spacing_hz", where)
        symbol_rate = _number(gen, "symbol_rate_hz", where)
        if not symbol_rate > 0:
            raise ConfigError("must be > 0", f"{where}.symbol_rate_hz")
        if count > 1 and not spacing > 0:
            raise ConfigError("must be > 0", f"{where}.spacing_hz")
        power = dbm_to_watt(_number(gen, "power_dbm_flat", where))
        grid = WdmGrid.uniform(count, spacing, symbol_rate, power, n_spans=n_spans)
        return replace(grid, per_span_power_scale=scale)
    raw_channels = data["channels"]
    if not isinstance(raw_channels, list):
        raise ConfigError("must be a list", "grid.channels")
    channels = tuple(_parse_channel(p, n, f_ref) for n, p in enumerate(raw_channels))
    return WdmGrid(channels=channels, n_spans=n_spans, per_span_power_scale=scale)


def _parse_engine(data: Mapping[str, Any]) -> EngineSettings:
    path = "engine"
    _check_keys(data, _ENGINE_KEYS, path)
    kwargs: Dict[str, Any] = {}
    for key in ("profile_mode", "xpm_coherent_path", "omega_assignment"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError("must be a string", f"{path}.{key}")
            kwargs[key] = data[key]
    for key in ("fit_strict", "coherent_corrections", "fwm", "spm_coherent_si"):
        if key in data:
            if not isinstance(data[key], bool):
                raise ConfigError("must be true or false", f"{path}.{key}")
            kwargs[key] = data[key]
    for key in ("fit_samples", "quadrature_resolution", "quadrature_segments"):
        if key in data:
            kwargs[key] = _integer(data, key, path)
    for key in (
        "ode_steps_per_km",
        "fit_residual_threshold",
        "degeneracy_threshold",
        "quadrature_tolerance_db",
    ):
        if key in data:
            kwargs[key] = _number(data, key, path)
    if "amplifier" in data:
        amp = _section(data, "amplifier", "engine.")
        _check_keys(amp, {"noise_figure_db"}, "engine.amplifier")
        kwargs["noise_figure_db"] = _number(amp, "noise_figure_db", "engine.amplifier")
    if "oracle" in data:
        oracle = _section(data, "oracle", "engine.")
        where = "engine.oracle"
        _check_keys(oracle, _ORACLE_KEYS, where)
        okw: Dict[str, Any] = {}
        if "z_steps_per_km" in oracle:
            okw["z_steps_per_km"] = _number(oracle, "z_steps_per_km", where)
        if "riemann_samples_per_axis" in oracle:
            okw["riemann_samples_per_axis"] = _integer(
                oracle, "riemann_samples_per_axis", where
            )
        if "cell_budget" in oracle:
            okw["cell_budget"] = _number(oracle, "cell_budget", where)
        for key in ("region_filter", "profile_mode"):
            if key in oracle:
                if not isinstance(oracle[key], str):
                    raise ConfigError("must be a string", f"{where}.{key}")
                okw[key] = oracle[key]
        kwargs["oracle"] = QuadratureSettings(**okw)
    return EngineSettings(**kwargs)


def parse_config(
    data: Mapping[str, Any]
) -> Tuple[FibreSpec, WdmGrid, EngineSettings]:
    """
    Validate an in-memory configuration tree.

    Args:
        data: Decoded JSON object with ``fibre``, ``grid`` and ``engine`` sections

    Returns:
        Tuple of (FibreSpec, WdmGrid, EngineSettings)

    Raises:
        ConfigError: If a field is missing, malformed or violates an invariant
    """
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    _check_keys(data, {"fibre", "grid", "engine"}, "config")
    spec = _parse_fibre(_section(data, "fibre", ""))
    grid = _parse_grid(_section(data, "grid", ""), spec.f_ref)
    settings = _parse_engine(_section(data, "engine", ""))
    return spec, grid, settings


def load_config(path: Union[str, Path]) -> Tuple[FibreSpec, WdmGrid, EngineSettings]:
    """
    Load and validate a JSON configuration file.

    Args:
        path: Path to the configuration file

    Returns:
        Tuple of (FibreSpec, WdmGrid, EngineSettings)

    Raises:
        ConfigError: If the file is missing, is not valid JSON or fails validation
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    spec, grid, settings = parse_config(data)
    logger.info(
        "loaded %s: %d channels, %d span(s), lambda_c=%.2f nm",
        path,
        grid.n_channels,
        grid.n_spans,
        spec.reference_wavelength * 1e9,
    )
    return spec, grid, settings
