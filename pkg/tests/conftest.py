"""Shared fixtures and the hypothesis profile."""

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from oband_nli.system import FibreSpec, WdmGrid
from oband_nli.utils import db_per_km_to_neper_per_m, dbm_to_watt

settings.register_profile(
    "oband",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("oband")

FIXTURES_DIR = Path(__file__).parent / "fixtures"
CONFIGS_DIR = Path(__file__).parent.parent / "configs"


def make_fibre(
    raman_slope: float = 0.033e-15,
    loss_db_km: float = 0.33,
    span_km: float = 80.0,
    dispersion: float = 0.0,
    slope: float = 87.0,
    curvature: float = -9.714e7,
) -> FibreSpec:
    """Single-loss fibre in SI units, zero dispersion at 1302.3 nm by default."""
    return FibreSpec(
        span_length=span_km * 1e3,
        gamma=2e-3,
        raman_slope=raman_slope,
        attenuation=(db_per_km_to_neper_per_m(loss_db_km),),
        dispersion_D=dispersion,
        dispersion_S=slope,
        dispersion_Sdot=curvature,
        reference_wavelength=1302.3e-9,
    )


def make_grid(count: int, power_dbm: float = -2.0, n_spans: int = 1) -> WdmGrid:
    return WdmGrid.uniform(count, 100e9, 96e9, dbm_to_watt(power_dbm), n_spans=n_spans)


@pytest.fixture
def fibre() -> FibreSpec:
    return make_fibre()


@pytest.fixture
def raman_off() -> FibreSpec:
    return make_fibre(raman_slope=0.0)
