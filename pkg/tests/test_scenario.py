import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from vortexlab import ConfigError, DomainError
from vortexlab.scenario import (MassCoordinateMap, build_viscous_initial, check_compatibility,
                                config_from_dict, default_config_dict, load_config,
                                sheet_profile)


def _closed_form_h():
    # x-extent of [a, b] for rho = 1 + ln(r/2)/4 (gamma = 2, V = 1/2, rho_b = 1)
    integral_r_log = (0.0 - 1.0) - (0.5 * math.log(0.5) - 0.25)
    return 1.5 + 0.25 * integral_r_log


def test_h_matches_closed_form_and_ode(cfg):
    cmap = MassCoordinateMap(cfg)
    assert abs(cmap.h - _closed_form_h()) < 1e-12
    assert abs(cmap.h - cmap.h_by_ode()) < 1e-9


def test_mass_map_inverts_initial_geometry(cfg):
    cmap = MassCoordinateMap(cfg)
    x = np.linspace(0.0, 4.0, 201)
    r = cmap.r0_of_x(x)
    side = np.where(x < cmap.h, -1, 1)
    # d(r^2/2)/dx = r r_x = tau0
    assert np.allclose(r * cmap.dr0_dx(x), cfg.tau0(r, side), atol=1e-9)
    assert np.isclose(cmap.r0_of_x(np.array([cmap.h]))[0], cfg.b, atol=1e-11)


def test_sheet_profile_locked_outside_unit_interval(cfg):
    z = np.array([-3.0, -1.0, 1.0, 2.5])
    assert np.allclose(sheet_profile(cfg, z, 0.5, 1.0), [0.5, 0.5, 1.0, 1.0])
    mid = sheet_profile(cfg, np.linspace(-1, 1, 50), 0.5, 1.0)
    assert np.all(np.diff(mid) >= 0)


def test_viscous_initial_mollifies_only_near_front(cfg):
    cmap = MassCoordinateMap(cfg)
    eps = 1e-2
    x = np.linspace(0, 4, 801)
    data = build_viscous_initial(cfg, eps, x, cmap)
    far = np.abs(x - cmap.h) >= math.sqrt(eps)
    side = np.where(x < cmap.h, -1, 1)
    assert np.allclose(data.v[far], cfg.v0(data.r[far], side[far]))
    with pytest.raises(DomainError):
        build_viscous_initial(cfg, 0.0, x, cmap)


def test_default_data_are_compatible(cfg):
    assert check_compatibility(cfg) == []


def test_incompatible_wall_is_reported(cfg):
    bad = cfg.with_updates(boundary_v={"preset": "constant", "offset": 0.2})
    names = [v.name for v in check_compatibility(bad)]
    assert "v0(a) != vB(0)" in names


def test_missing_key_rejected():
    d = default_config_dict()
    del d["gamma"]
    with pytest.raises(ConfigError, match="missing required key 'gamma'"):
        config_from_dict(d)


@pytest.mark.parametrize("key,value,message", [
    ("b", 0.5, "front inside wall"),
    ("gamma", 1.0, "gamma"),
    ("mu", -1.0, "mu"),
    ("T", 0.0, "final time"),
])
def test_invalid_values_are_line_anchored(tmp_path, key, value, message):
    d = default_config_dict()
    d[key] = value
    text = json.dumps(d, indent=2)
    path = tmp_path / "s.json"
    path.write_text(text)
    expected_line = next(i for i, ln in enumerate(text.splitlines(), 1) if f'"{key}"' in ln)
    with pytest.raises(ConfigError, match=f"line {expected_line}: .*{message}"):
        load_config(path)


def test_unknown_presets_rejected():
    for key, val in (("initial", {"preset": "nope"}), ("boundary_v", {"preset": "nope"}),
                     ("phi1", {"preset": "nope"})):
        d = default_config_dict()
        d[key] = val
        with pytest.raises(ConfigError):
            config_from_dict(d)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "a": 1.0,\n  "b": \n}')
    with pytest.raises(ConfigError, match="line 4"):
        load_config(p)


def test_with_updates_changes_digest(cfg):
    other = cfg.with_updates(T=0.25)
    assert other.T == 0.25 and cfg.T == 0.5
    assert other.digest() != cfg.digest()
    assert cfg.with_updates().digest() == cfg.digest()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0.1, 2.0))
def test_swirl_density_balances_centrifugal_force(vm, gamma_excess):
    d = default_config_dict()
    d["gamma"] = 1.0 + gamma_excess
    d["initial"] = {"preset": "steady_swirl", "V_minus": vm, "V_plus": vm, "rho_b": 1.0}
    d["boundary_v"] = {"preset": "constant"}
    try:
        cfg = config_from_dict(d)
    except ConfigError:
        assume(False)
    r = np.linspace(cfg.a, cfg.b - 1e-3, 400)
    rho = cfg.rho0(r, -1)
    dp = np.gradient(cfg.pressure(rho), r)
    # p_r = rho v^2 / r for a steady swirl
    assert np.allclose(dp[2:-2], (rho * vm**2 / r)[2:-2], rtol=1e-3)


def test_nonphysical_swirl_rejected():
    d = default_config_dict()
    d["gamma"] = 1.1
    d["initial"] = {"preset": "steady_swirl", "V_minus": 5.0, "V_plus": 5.0}
    with pytest.raises(ConfigError, match="density must stay positive"):
        config_from_dict(d)


def test_swirl_vacuum_rejected_for_integer_exponent():
    # gamma = 1.5 squares the base, so a negative base must not pass as a density
    d = default_config_dict()
    d["gamma"] = 1.5
    d["initial"] = {"preset": "steady_swirl", "V_minus": 2.0, "V_plus": 2.0}
    with pytest.raises(ConfigError, match="density must stay positive"):
        config_from_dict(d)
