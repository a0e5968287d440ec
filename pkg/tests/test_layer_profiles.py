import math

import numpy as np
import pytest
from scipy.special import erf, erfc

from vortexlab import ConfigError
from vortexlab.layer_profiles import (LayerField, OuterTrace, compute_tau_B1, decay_series,
                                      solve_boundary_layer_v0, solve_boundary_layer_v1,
                                      solve_heat, solve_vortex_layer_v0, solve_vortex_layer_v1,
                                      weighted_norm)
from vortexlab.numerics import derivative
from vortexlab.scenario import sheet_profile


def const(value):
    return lambda t: value + 0.0 * np.asarray(t, dtype=float)


def test_wall_layer_matches_erfc(cfg):
    tr = OuterTrace.constant("wall", cfg.T, tau=1.0, v=0.0, u_x=0.0)
    fld = solve_boundary_layer_v0(tr, const(1.0), cfg, check=False)
    k = cfg.a**2 * cfg.mu / 1.0
    for j in (fld.t.size // 2, fld.t.size - 1):
        exact = erfc(fld.coord / (2 * math.sqrt(k * fld.t[j])))
        assert np.max(np.abs(fld.values[j] - exact)) < 1e-4


def test_vortex_layer_matches_heat_kernel(cfg):
    tr = OuterTrace.constant("front", cfg.T, tau=1.0, phi=2.0, u=0.0, u_t=0.0,
                             v_minus=0.5, v_plus=1.0)
    fld = solve_vortex_layer_v0(tr, cfg)
    k = cfg.mu * 4.0
    y = np.linspace(-1, 1, 4001)
    dg = np.gradient(sheet_profile(cfg, y, 0.5, 1.0), y)
    z = fld.coord
    kernel = 0.5 * erfc((y[None, :] - z[:, None]) / (2 * math.sqrt(k * cfg.T)))
    exact = 0.5 + np.trapezoid(dg[None, :] * kernel, y, axis=1)
    assert np.max(np.abs(fld.values[-1] - exact)) < 1e-4


def test_heat_solver_second_order():
    # u = exp(-t) sin(pi s) on [0, 1] with k = 1/pi^2 and zero ends
    errs = []
    for n in (40, 80):
        s = np.linspace(0, 1, n + 1)
        t = np.linspace(0, 1, n + 1)
        u = solve_heat(s, t, lambda _: 1 / np.pi**2, initial=np.sin(np.pi * s))
        errs.append(np.max(np.abs(u[-1] - np.exp(-1) * np.sin(np.pi * s))))
    assert errs[0] / errs[1] > 3.5


def test_incompatible_wall_data_rejected(cfg):
    tr = OuterTrace.constant("wall", cfg.T, tau=1.0, v=0.5)
    with pytest.raises(ConfigError):
        solve_boundary_layer_v0(tr, const(0.7), cfg)


def test_constant_wall_gives_zero_layer(cfg):
    tr = OuterTrace.constant("wall", cfg.T, tau=1.0, v=0.5)
    fld = solve_boundary_layer_v0(tr, const(0.5), cfg)
    assert np.max(np.abs(fld.values)) == 0.0


def test_zero_jump_vortex_layer_equals_trace(cfg):
    tr = OuterTrace.constant("front", cfg.T, tau=1.0, phi=2.0, u=0.0, v_minus=0.7, v_plus=0.7)
    fld = solve_vortex_layer_v0(tr, cfg)
    assert np.max(np.abs(fld.values - 0.7)) < 1e-13
    assert np.max(np.abs(fld.layer())) < 1e-13


def test_tau_B1_integrates_its_balance(profiles, cfg):
    L = profiles.layers
    fld = compute_tau_B1(L.v_B0, L.wall, cfg)
    assert np.max(np.abs(fld.values[:, -1])) == 0.0
    d = derivative(fld.coord, fld.values)
    rhs = fld.diagnostics["rhs"]
    # trapezoid quadrature: the mismatch is bounded by the dxi^2 truncation scale
    dxi = fld.coord[1] - fld.coord[0]
    curv = derivative(fld.coord, derivative(fld.coord, rhs))
    assert np.max(np.abs(d - rhs)[:, 2:-2]) <= dxi**2 * np.max(np.abs(curv))


def _boundary_mms(cfg, cells, steps, T=0.5, L=6.0):
    xi = np.linspace(0, L, cells + 1)
    t = np.linspace(0, T, steps + 1)
    exact = np.sin(2 * t)[:, None] * np.exp(-xi[None, :] ** 2)
    k = cfg.a**2 * cfg.mu / 1.0
    dt_exact = 2 * np.cos(2 * t)[:, None] * np.exp(-xi[None, :] ** 2)
    d2 = (4 * xi[None, :] ** 2 - 2) * exact
    forcing = dt_exact - k * d2
    tr = OuterTrace.constant("wall", T, tau=1.0, v=0.0)
    base = LayerField.zeros("boundary", "v_B0", xi, t)
    fld = solve_boundary_layer_v1(base, base, tr, cfg, forcing=forcing,
                                  datum=lambda s: np.sin(2 * s))
    return np.max(np.abs(fld.values - exact))


def test_boundary_v1_manufactured_solution_second_order(cfg):
    e1 = _boundary_mms(cfg, 200, 100)
    e2 = _boundary_mms(cfg, 400, 200)
    assert e2 < 1e-3 and e1 / e2 > 3.5


def _vortex_mms(cfg, cells, steps, c_minus=0.2, c_plus=0.9, T=0.5, L=8.0, u=0.1):
    zeta = np.linspace(-L, L, cells + 1)
    t = np.linspace(0, T, steps + 1)
    phi, tau = 2.0, 1.0
    k = cfg.mu * phi**2 / tau
    decay = np.exp(-(u / phi) * t)

    def exact(tt, z):
        return np.exp(-(u / phi) * tt) * (c_minus + 0.5 * (c_plus - c_minus)
                                          * (1 + erf(z / (2 * np.sqrt(k * (tt + 0.2))))))

    tr = OuterTrace.constant("front", T, tau=tau, phi=phi, u=u, u_t=0.0,
                             v_minus=0.0, v_plus=0.0, v1_minus=c_minus, v1_plus=c_plus)
    base = LayerField.zeros("vortex", "v_s0", zeta, t)
    fld = solve_vortex_layer_v1(base, base, tr, cfg, forcing=np.zeros((t.size, zeta.size)),
                                edges=(lambda s: exact(s, -L), lambda s: exact(s, L)),
                                initial=exact(0.0, zeta))
    err = np.max(np.abs(fld.values - exact(t[:, None], zeta[None, :])))
    return err, fld, decay


def test_vortex_v1_manufactured_solution_and_jump(cfg):
    e1, _, _ = _vortex_mms(cfg, 200, 100)
    e2, fld, _ = _vortex_mms(cfg, 400, 200)
    assert e2 < 1e-3 and e1 / e2 > 3.5
    (_, left), (_, right) = fld.layer_sides()
    # the layer part jumps by minus the outer jump c+ - c-
    assert np.allclose(right[:, 0] - left[:, -1], -(0.9 - 0.2))


def test_layers_decay_under_domain_doubling(profiles, cfg):
    L = profiles.layers
    short = solve_vortex_layer_v0(L.front, cfg, length=20, cells=1000)
    long = solve_vortex_layer_v0(L.front, cfg, length=40, cells=2000)
    inner = np.abs(long.coord) <= 20 + 1e-12
    assert np.max(np.abs(long.values[:, inner] - short.values)) < 1e-6
    bs = solve_boundary_layer_v0(L.wall, cfg.wall, cfg, length=20, cells=1000)
    bl = solve_boundary_layer_v0(L.wall, cfg.wall, cfg, length=40, cells=2000)
    assert np.max(np.abs(bl.values[:, :1001] - bs.values)) < 1e-6
    assert np.max(np.abs(bl.values[:, 1001:])) < 1e-6


def test_weighted_norm_of_gaussian():
    s = np.linspace(0, 20, 4001)
    f = np.exp(-s * s)
    base = math.sqrt(math.pi / 8)
    assert np.isclose(weighted_norm(f, 0, 0, coord=s), math.sqrt(base), rtol=1e-6)
    assert np.isclose(weighted_norm(f, 1, 0, coord=s), math.sqrt(1.25 * base), rtol=1e-6)
    assert np.isclose(weighted_norm(f, 0, 1, coord=s), math.sqrt(base), rtol=1e-5)


def test_decay_series_matches_weighted_norm(profiles):
    fld = profiles.layers.v_s0
    series = decay_series(fld, powers=(0, 2))
    assert np.isclose(series[1, -1], weighted_norm(fld, 2, 0))
    assert np.all(np.isfinite(series))
