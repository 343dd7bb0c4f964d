"""Tests for the system model: configuration, grid and dispersion conversion."""

import copy
import json
import math

import mpmath
import pytest

from oband_nli.system import (
    EngineSettings,
    QuadratureSettings,
    WdmGrid,
    ase_power,
    betas_to_dispersion,
    dispersion_to_betas,
    load_config,
    parse_config,
)
from oband_nli.utils import (
    SPEED_OF_LIGHT,
    ConfigError,
    db_per_km_to_neper_per_m,
    dbm_to_watt,
    wavelength_to_offset,
)

from .conftest import CONFIGS_DIR, FIXTURES_DIR, make_fibre, make_grid

BASE = {
    "fibre": {
        "span_length_km": 80,
        "gamma_per_w_km": 2.0,
        "raman_slope_per_w_km_thz": 0.033,
        "attenuation_db_km": 0.33,
        "dispersion_ps_nm_km": 0.0,
        "slope_ps_nm2_km": 0.087,
        "curvature_ps_nm3_km": -9.714e-5,
        "reference_wavelength_nm": 1302.3,
    },
    "grid": {
        "n_spans": 1,
        "generator": {
            "count": 5,
            "spacing_hz": 100e9,
            "symbol_rate_hz": 96e9,
            "power_dbm_flat": -2,
        },
    },
    "engine": {},
}


def config(**changes):
    """BASE with dotted-path overrides; a value of None deletes the key."""
    data = copy.deepcopy(BASE)
    for path, value in changes.items():
        *parents, key = path.split("__")
        node = data
        for name in parents:
            node = node[name]
        if value is None:
            del node[key]
        else:
            node[key] = value
    return data


def test_load_reference_config():
    """Test the shipped 161-channel configuration loads in SI units."""
    spec, grid, settings = load_config(CONFIGS_DIR / "reference161.json")
    assert spec.gamma == pytest.approx(2e-3)
    assert spec.span_length == pytest.approx(80e3)
    assert spec.reference_wavelength == pytest.approx(1302.3e-9)
    assert spec.dispersion_D == 0.0
    assert spec.dispersion_S == pytest.approx(87.0)
    assert spec.dispersion_Sdot == pytest.approx(-9.714e7)
    assert grid.n_channels == 161
    assert grid.offsets[80] == 0.0
    assert grid.offsets[0] == pytest.approx(-8e12)
    assert grid.bandwidths[0] == pytest.approx(96e9)
    assert settings.noise_figure_db == 5.0
    assert settings.oracle.riemann_samples_per_axis == 200


def test_load_config_missing_file(tmp_path):
    """Test a missing configuration file is a validation error."""
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_load_config_invalid_json(tmp_path):
    """Test malformed JSON reports its position."""
    path = tmp_path / "bad.json"
    path.write_text('{"fibre": ')
    with pytest.raises(ConfigError, match="line 1"):
        load_config(path)


def test_load_config_invalid_spans():
    """Test n_spans = 0 is rejected with its field path."""
    with pytest.raises(ConfigError, match="grid.n_spans") as info:
        load_config(FIXTURES_DIR / "bad_spans.json")
    assert info.value.field == "grid.n_spans"


def test_parse_config_defaults():
    """Test omitted engine keys take their defaults."""
    _, grid, settings = parse_config(config())
    assert grid.n_spans == 1
    assert settings == EngineSettings()
    assert settings.oracle == QuadratureSettings()


def test_parse_config_unknown_key():
    """Test unknown keys are rejected."""
    with pytest.raises(ConfigError, match="unknown key") as info:
        parse_config(config(fibre__gama=2.0))
    assert info.value.field == "fibre.gama"


def test_parse_config_generator_and_channels():
    """Test exactly one of generator and channels is required."""
    data = config(grid__channels=[{"offset_hz": 0, "symbol_rate_hz": 96e9, "power_dbm": 0}])
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(data)
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(config(grid__generator=None))


def test_parse_config_explicit_channels():
    """Test channels given by wavelength, frequency and offset."""
    f_ref = SPEED_OF_LIGHT / 1302.3e-9
    data = config(
        grid__generator=None,
        grid__channels=[
            {"wavelength_nm": 1310.0, "symbol_rate_hz": 64e9, "power_dbm": 0},
            {"offset_hz": 0.0, "symbol_rate_hz": 96e9, "power_dbm": -3},
            {"frequency_thz": f_ref / 1e12 + 0.5, "symbol_rate_hz": 96e9, "power_dbm": 1},
        ],
    )
    _, grid, _ = parse_config(data)
    assert grid.n_channels == 3
    assert grid.offsets[0] == pytest.approx(wavelength_to_offset(1310e-9, f_ref))
    assert grid.offsets[2] == pytest.approx(0.5e12, rel=1e-9)
    assert grid.powers[1] == pytest.approx(dbm_to_watt(-3))
    assert grid.bandwidths[0] == 64e9


def test_parse_config_per_span_scale_length():
    """Test the per-span power scale needs one entry per span."""
    with pytest.raises(ConfigError, match="per_span_power_scale"):
        parse_config(config(grid__n_spans=3, grid__per_span_power_scale=[1.0, 1.0]))
    _, grid, _ = parse_config(config(grid__n_spans=2, grid__per_span_power_scale=[1.0, 0.5]))
    assert grid.span_scales() == (1.0, 0.5)


def test_parse_config_invalid_engine_values():
    """Test engine settings are validated."""
    with pytest.raises(ConfigError, match="engine.profile_mode"):
        parse_config(config(engine={"profile_mode": "exact"}))
    with pytest.raises(ConfigError, match="must be even"):
        parse_config(config(engine={"quadrature_resolution": 33}))
    with pytest.raises(ConfigError, match="region_filter"):
        parse_config(config(engine={"oracle": {"region_filter": "sbs"}}))
    with pytest.raises(ConfigError, match="ode_steps_per_km"):
        parse_config(config(engine={"ode_steps_per_km": 1}))


def test_negative_fibre_values_rejected():
    """Test physical invariants of the fibre section."""
    with pytest.raises(ConfigError, match="span_length_km"):
        parse_config(config(fibre__span_length_km=0))
    with pytest.raises(ConfigError, match="attenuation"):
        parse_config(config(fibre__attenuation_db_km=-0.2))


def test_o_band_default_attenuation():
    """Test the default loss curve interpolates between its samples."""
    spec, _, _ = parse_config(config(fibre__attenuation_db_km="o_band_default"))
    at_1300 = wavelength_to_offset(1300.0 * 1e-9, spec.f_ref)
    at_1340 = wavelength_to_offset(1340.0 * 1e-9, spec.f_ref)
    assert float(spec.alpha_at(at_1300)) == pytest.approx(db_per_km_to_neper_per_m(0.33))
    assert float(spec.alpha_at(at_1340)) == pytest.approx(db_per_km_to_neper_per_m(0.31))
    # constant beyond the curve
    far = wavelength_to_offset(1200e-9, spec.f_ref)
    assert float(spec.alpha_at(far)) == pytest.approx(db_per_km_to_neper_per_m(0.36))


def test_grid_rejects_overlap():
    """Test overlapping channels are rejected."""
    with pytest.raises(ConfigError, match="overlap"):
        WdmGrid.uniform(3, 50e9, 96e9, 1e-3)


def test_grid_rejects_zero_spans():
    """Test n_spans must be positive."""
    with pytest.raises(ConfigError, match="positive"):
        WdmGrid.uniform(3, 100e9, 96e9, 1e-3, n_spans=0)


def test_grid_slots_and_psd():
    """Test slot lookup, guard bands and the rectangular PSD."""
    grid = make_grid(3, power_dbm=0.0)
    assert list(grid.slot_index([-100e9, 0.0, 47e9, 50e9, 100e9, 200e9])) == [0, 1, 1, -1, 2, -1]
    assert float(grid.psd_at(10e9)) == pytest.approx(1e-3 / 96e9)
    assert float(grid.psd_at(50e9)) == 0.0
    assert int(grid.nearest_index(60e9)) == 2
    assert grid.total_bandwidth == pytest.approx(296e9)
    assert grid.total_power == pytest.approx(3e-3)


def test_grid_variants():
    """Test the span, power and bandwidth variants used by sweeps."""
    grid = make_grid(161)
    assert grid.with_spans(4).n_spans == 4
    assert grid.with_flat_power(2e-3).powers[17] == 2e-3
    narrow = grid.restrict_bandwidth(4.1e12)
    assert narrow.n_channels == 41
    assert narrow.offsets[20] == 0.0
    with pytest.raises(ConfigError, match="no channel"):
        grid.restrict_bandwidth(10e9)


def test_beta2_zero_at_reference():
    """Test D = 0 gives beta2 = 0 exactly."""
    betas = dispersion_to_betas(make_fibre())
    assert betas.beta2 == 0.0
    assert betas.beta3 > 0


def _beta2_of_omega(spec):
    """beta2(omega) = -lambda^2 D(lambda) / (2 pi c) with the quadratic D(lambda)."""
    c = mpmath.mpf(SPEED_OF_LIGHT)
    lam_c = mpmath.mpf(spec.reference_wavelength)
    d, s, sdot = (mpmath.mpf(v) for v in (spec.dispersion_D, spec.dispersion_S, spec.dispersion_Sdot))

    def beta2(omega):
        lam = 2 * mpmath.pi * c / omega
        dl = lam - lam_c
        return -(lam**2) * (d + s * dl + sdot * dl**2 / 2) / (2 * mpmath.pi * c)

    return beta2, 2 * mpmath.pi * c / lam_c


@pytest.mark.parametrize("dispersion", [0.0, 1.7e-5, -3e-6])
def test_dispersion_conversion_against_derivatives(dispersion):
    """Test beta3 and beta4 against high-precision derivatives of beta2(omega)."""
    spec = make_fibre(dispersion=dispersion)
    betas = dispersion_to_betas(spec)
    with mpmath.workdps(40):
        beta2, omega_c = _beta2_of_omega(spec)
        assert betas.beta2 == pytest.approx(float(beta2(omega_c)), rel=1e-9, abs=1e-40)
        assert betas.beta3 == pytest.approx(float(mpmath.diff(beta2, omega_c, 1, h=omega_c * 1e-8)), rel=1e-6)
        assert betas.beta4 == pytest.approx(float(mpmath.diff(beta2, omega_c, 2, h=omega_c * 1e-8)), rel=1e-6)


def test_dispersion_round_trip():
    """Test betas_to_dispersion inverts dispersion_to_betas."""
    spec = make_fibre(dispersion=4e-6, slope=70.0, curvature=-5e7)
    d, s, sdot = betas_to_dispersion(dispersion_to_betas(spec), spec.reference_wavelength)
    assert d == pytest.approx(4e-6, rel=1e-9)
    assert s == pytest.approx(70.0, rel=1e-9)
    assert sdot == pytest.approx(-5e7, rel=1e-6)


def test_ase_power():
    """Test ASE vanishes without gain and scales with G - 1."""
    assert ase_power(5.0, 0.0, 230e12, 96e9) == 0.0
    one = ase_power(5.0, 10.0, 230e12, 96e9)
    two = ase_power(5.0, 20.0, 230e12, 96e9)
    assert two / one == pytest.approx(99.0 / 9.0, rel=1e-12)
    assert one > 0
    with pytest.raises(ConfigError):
        ase_power(5.0, -1.0, 230e12, 96e9)


def test_config_json_round_trip(tmp_path):
    """Test a parsed mapping and the same JSON file give equal objects."""
    path = tmp_path / "system.json"
    path.write_text(json.dumps(config()))
    assert load_config(path) == parse_config(config())
    assert math.isclose(load_config(path)[0].gamma, 2e-3)
