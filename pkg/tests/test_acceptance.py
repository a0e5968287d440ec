"""Acceptance criteria 1-7, each reporting PASS/FAIL against its pinned tolerance."""
import math
import time

import numpy as np
from scipy.special import erfc

from vortexlab.euler_front import (eigensystem, geometric_defect, solve_diagonal_ibvp,
                                   solve_vortex_sheet_euler, steady_swirl_density, transport_matrix)
from vortexlab.layer_profiles import OuterTrace, solve_boundary_layer_v0, solve_vortex_layer_v0
from vortexlab.scenario import sheet_profile
from vortexlab.viscous_solver import ViscousProblem, initial_state, step

from test_euler_front import pulses, transport_exact, unit_speeds
from test_layer_profiles import _boundary_mms, _vortex_mms
from test_viscous_solver import _grid_for


def verdict(capsys, n, label, value, need, ok):
    with capsys.disabled():
        print(f"\n[criterion {n}] {label}: {value} (need {need}) -> {'PASS' if ok else 'FAIL'}")
    return bool(ok)


def test_criterion_1_characteristic_solver(capsys):
    t0 = time.perf_counter()
    sol = solve_diagonal_ibvp(unit_speeds, pulses, 1, 2, 3, 1.0, 500, 500, 1000)
    seconds = time.perf_counter() - t0
    err = max(np.max(np.abs(sol.w[s][n] - transport_exact(sol.t[n], sol.r[s])))
              for s in (0, 1) for n in range(0, sol.t.size, 50))
    ok = [verdict(capsys, 1, "diagonal IBVP sup error", f"{err:.3e}", "<= 1e-6", err <= 1e-6),
          verdict(capsys, 1, "runtime [s]", f"{seconds:.2f}", "< 10", seconds < 10)]
    assert all(ok)


def _swirl_error(cfg, sol):
    err = 0.0
    for s, side, V in ((0, -1, 0.5), (1, 1, 1.0)):
        U = sol.U[s][-1]
        rho = steady_swirl_density(cfg, sol.rt[s], side)
        err = max(err, np.max(np.abs(U[0] - rho)), np.max(np.abs(U[1])), np.max(np.abs(U[2] - V)))
    return err


def test_criterion_2_vortex_sheet_preservation(capsys, cfg):
    errs = {}
    jumps = 0.0
    for cells in (100, 200, 400):
        sol = solve_vortex_sheet_euler(cfg, cells=cells)
        errs[cells] = _swirl_error(cfg, sol)
        if cells == 400:
            du, dp, _ = sol.jumps()
            jumps = max(np.max(np.abs(du)), np.max(np.abs(dp)))
    order = math.log2(errs[200] / errs[400])
    ok = [verdict(capsys, 2, "steady swirl sup error at T (400 cells)", f"{errs[400]:.3e}", "<= 1e-3",
                  errs[400] <= 1e-3),
          verdict(capsys, 2, "max |[u]|, |[p]| at the front", f"{jumps:.3e}", "<= 1e-8", jumps <= 1e-8),
          verdict(capsys, 2, "refinement order (200 -> 400)", f"{order:.2f}", ">= 1.6", order >= 1.6)]
    assert all(ok)


def test_criterion_3_layer_oracles(capsys, cfg):
    wall = OuterTrace.constant("wall", cfg.T, tau=1.0, v=0.0, u_x=0.0)
    fld = solve_boundary_layer_v0(wall, lambda t: 1.0 + 0 * np.asarray(t), cfg, check=False)
    k = cfg.a**2 * cfg.mu
    # both oracles are measured on [T/4, T], past the impulsive start
    sel = fld.t >= cfg.T / 4 - 1e-12
    err_b = max(np.max(np.abs(fld.values[j] - erfc(fld.coord / (2 * math.sqrt(k * fld.t[j])))))
                for j in np.flatnonzero(sel))
    front = OuterTrace.constant("front", cfg.T, tau=1.0, phi=2.0, u=0.0, u_t=0.0,
                                v_minus=0.5, v_plus=1.0)
    vs = solve_vortex_layer_v0(front, cfg)
    kv = cfg.mu * 4.0
    y = np.linspace(-1, 1, 4001)
    dg = np.gradient(sheet_profile(cfg, y, 0.5, 1.0), y)
    err_v = 0.0
    for j in (vs.t.size // 4, vs.t.size // 2, vs.t.size - 1):
        t = vs.t[j]
        kern = 0.5 * erfc((y[None, :] - vs.coord[:, None]) / (2 * math.sqrt(kv * t)))
        exact = 0.5 + np.trapezoid(dg[None, :] * kern, y, axis=1)
        err_v = max(err_v, np.max(np.abs(vs.values[j] - exact)))
    ok = [verdict(capsys, 3, "wall layer vs V erfc on [T/4, T]", f"{err_b:.3e}", "<= 1e-4", err_b <= 1e-4),
          verdict(capsys, 3, "vortex layer vs heat-kernel convolution at T/4, T/2, T", f"{err_v:.3e}", "<= 1e-4",
                  err_v <= 1e-4)]
    assert all(ok)


def test_criterion_4_leading_order_convergence(capsys, sweep):
    fit = sweep.table["sup_err"]
    eps = [r["eps"] for r in sweep.results]
    ok = [verdict(capsys, 4, "eps sweep", eps, "{1e-2, 3e-3, 1e-3, 3e-4, 1e-4}",
                  eps == [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]),
          verdict(capsys, 4, "sup-norm error slope", f"{fit['slope']:.3f}", "in [0.35, 0.65]",
                  0.35 <= fit["slope"] <= 0.65),
          verdict(capsys, 4, "sweep runtime [s]", f"{sweep.seconds:.1f}", "<= 1800", sweep.seconds <= 1800)]
    assert all(ok)


def test_criterion_5_layer_structure(capsys, sweep):
    tab = sweep.table
    ok = []
    for name in ("wall_width", "front_width"):
        s = tab[name]["slope"]
        ok.append(verdict(capsys, 5, f"{name} slope", f"{s:.3f}", "0.5 +- 0.15", abs(s - 0.5) <= 0.15))
    for name in ("wall_strip_u", "wall_strip_tau", "front_strip_u", "front_strip_tau"):
        s = tab[name]["slope"]
        ok.append(verdict(capsys, 5, f"{name} slope", f"{s:.3f}", ">= 0.35", s >= 0.35))
    # v keeps an O(1) mismatch inside the strips
    v_min = min(min(r["report"]["strips"]["wall"]["v"], r["report"]["strips"]["front"]["v"])
                for r in sweep.results)
    ok.append(verdict(capsys, 5, "min v mismatch in strips", f"{v_min:.3f}", ">= 0.1", v_min >= 0.1))
    assert all(ok)


def test_criterion_6_residual_decay(capsys, sweep, refined_sweep):
    s = sweep.table["residual_M1"]["slope"]
    base = np.array(sweep.table["residual_M1"]["values"])
    fine = np.array(refined_sweep.table["residual_M1"]["values"])
    change = float(np.max(np.abs(fine / base - 1)))
    ok = [verdict(capsys, 6, "M=1 residual L2(0,T;L2) slope", f"{s:.3f}", "0.5 +- 0.2", abs(s - 0.5) <= 0.2),
          verdict(capsys, 6, "max relative change under grid doubling", f"{change:.3f}", "< 0.10",
                  change < 0.10)]
    assert all(ok)


def test_criterion_7_invariant_suite(capsys, cfg, profiles, sweep):
    ok = []
    rng = np.random.default_rng(7)
    worst_r, worst_d = 0.0, 0.0
    for _ in range(200):
        rho, u, v = rng.uniform(0.2, 5), rng.uniform(-2, 2), rng.uniform(0, 3)
        geom = (rng.uniform(-1, 1), rng.uniform(0.3, 3))
        gam = rng.uniform(1.1, 3)
        es = eigensystem((rho, u, v), geom, gam)
        worst_r = max(worst_r, np.max(np.abs(es.R @ es.Rinv - np.eye(3))))
        D = es.Rinv @ transport_matrix((rho, u, v), geom, gam) @ es.R
        worst_d = max(worst_d, np.max(np.abs(D - np.diag(es.lambdas))) / (1 + np.max(np.abs(D))))
    ok.append(verdict(capsys, 7, "max |R R^-1 - I|", f"{worst_r:.2e}", "<= 1e-12", worst_r <= 1e-12))
    ok.append(verdict(capsys, 7, "diagonalisation defect", f"{worst_d:.2e}", "<= 1e-12", worst_d <= 1e-12))

    sym = [r["symmetrizer"] for r in sweep.results]
    asym = max(max(d["SA_rel_asymmetry"], d["SB_rel_asymmetry"]) for d in sym)
    c0 = min(d["c0"] for d in sym)
    ok.append(verdict(capsys, 7, "symmetrizer SA/SB relative asymmetry on U^a", f"{asym:.2e}", "<= 1e-12",
                      asym <= 1e-12))
    ok.append(verdict(capsys, 7, "symmetrizer c0 on U^a", f"{c0:.3f}", "> 0", c0 > 0))

    geo_outer = geometric_defect(profiles.outer)
    ok.append(verdict(capsys, 7, "outer d_x(r^2)/2 - tau", f"{geo_outer:.2e}", "<= 1e-6", geo_outer <= 1e-6))
    eps = 1e-2
    cmap, grid = _grid_for(cfg, eps)
    state = initial_state(cfg, eps, grid, cmap)
    prob = ViscousProblem(cfg, eps, grid, far=(float(state.u[-1]), float(state.v[-1])))
    prob.enforce(state)
    dt = prob.stable_dt(state)
    geo, wall = 0.0, 0.0
    for _ in range(100):
        state = step(state, dt, eps, prob)
        geo = max(geo, state.geometric_defect(grid))
        wall = max(wall, abs(state.u[0]), abs(state.v[0] - float(cfg.wall(state.t))))
    bound = grid.dx.max() ** 2 + dt**2
    ok.append(verdict(capsys, 7, "viscous d_x(r^2)/2 - tau over 100 steps", f"{geo:.2e}",
                      f"<= dx^2 + dt^2 = {bound:.2e}", geo <= bound))
    sweep_wall = max(r["viscous"]["wall_error"] for r in sweep.results)
    ok.append(verdict(capsys, 7, "wall condition error", f"{max(wall, sweep_wall):.1e}", "== 0",
                      wall == 0.0 and sweep_wall == 0.0))

    L = profiles.layers
    short = solve_vortex_layer_v0(L.front, cfg, length=20, cells=1000)
    long = solve_vortex_layer_v0(L.front, cfg, length=40, cells=2000)
    inner = np.abs(long.coord) <= 20 + 1e-12
    dv = float(np.max(np.abs(long.values[:, inner] - short.values)))
    bs = solve_boundary_layer_v0(L.wall, cfg.wall, cfg, length=20, cells=1000)
    bl = solve_boundary_layer_v0(L.wall, cfg.wall, cfg, length=40, cells=2000)
    db = float(np.max(np.abs(bl.values[:, :1001] - bs.values)))
    ok.append(verdict(capsys, 7, "layer change under domain doubling", f"{max(dv, db):.2e}", "<= 1e-6",
                      max(dv, db) <= 1e-6))

    rb = _boundary_mms(cfg, 200, 100) / _boundary_mms(cfg, 400, 200)
    rv = _vortex_mms(cfg, 200, 100)[0] / _vortex_mms(cfg, 400, 200)[0]
    ok.append(verdict(capsys, 7, "manufactured wall layer error ratio (h -> h/2)", f"{rb:.2f}",
                      ">= 3.5 (second order)", rb >= 3.5))
    ok.append(verdict(capsys, 7, "manufactured vortex layer error ratio (h -> h/2)", f"{rv:.2f}",
                      ">= 3.5 (second order)", rv >= 3.5))
    assert all(ok)
