"""Command-line driver: ``vortexlab {euler,layers,viscous,verify}``.

Exit status: 0 ok, 2 configuration error, 3 resolution error, 4 solver
failure.  Every run writes ``manifest.json`` into its own directory below
the output root (``--out``, overridden by ``$VORTEX_OUT``), also on failure.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import RunManifest, read_json, write_csv, write_json
from .errors import ConfigError, VortexLabError
from .scenario import config_summary, default_config, load_config

SUBCOMMANDS = ("euler", "layers", "viscous", "verify")


def _parser():
    p = argparse.ArgumentParser(prog="vortexlab", description="Vortex-sheet vanishing-viscosity toolkit")
    p.add_argument("--version", action="version", version=f"vortexlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="scenario JSON (default scenario if omitted)")
        s.add_argument("--out", type=Path, default=Path("runs"), help="output root directory")
        if name in ("viscous", "verify"):
            s.add_argument("--eps", type=float, action="append",
                           help="viscosity parameter; repeat for several values")
        if name == "verify":
            s.add_argument("--jobs", type=int, default=1, help="concurrent per-eps runs")
            s.add_argument("--resume", action="store_true", help="reuse cached per-eps results")
    return p


def _out_root(args):
    env = os.environ.get("VORTEX_OUT")
    return Path(env) if env else args.out


def _slice_indices(times, count):
    targets = np.linspace(times[0], times[-1], count + 1)
    return sorted({int(np.argmin(np.abs(times - t))) for t in targets})


# ---------------------------------------------------------------- euler

def cmd_euler(cfg, man: RunManifest):
    from .euler_front import geometric_defect, solve_vortex_sheet_euler, to_lagrangian

    sol = solve_vortex_sheet_euler(cfg)
    outer = to_lagrangian(sol)
    du, dp, dv = sol.jumps()
    d = man.run_dir
    man.add_output(write_csv(d / "front.csv", ["t", "phi", "phi_prime", "jump_u", "jump_p", "jump_v"],
                             [sol.t, sol.front.phi, sol.front.phi_prime, du, dp, dv]))
    idx = _slice_indices(sol.t, cfg.grid.output_slices)
    cols = {k: [] for k in ("t", "side", "r", "rho", "u", "v")}
    for n in idx:
        for s, sign in ((0, -1), (1, 1)):
            r = sol.physical_radius(n, s)
            cols["t"].append(np.full(r.size, sol.t[n]))
            cols["side"].append(np.full(r.size, sign))
            cols["r"].append(r)
            for k, c in (("rho", 0), ("u", 1), ("v", 2)):
                cols[k].append(sol.U[s][n, c])
    man.add_output(write_csv(d / "euler_slices.csv", list(cols),
                             [np.concatenate(v) for v in cols.values()]))
    _lagrangian_csv(outer, idx, d / "outer_slices.csv", man)
    man.invariants.update({"max_jump_u": float(np.max(np.abs(du))), "max_jump_p": float(np.max(np.abs(dp))),
                           "geometric_defect": geometric_defect(outer),
                           "max_cfl": sol.diagnostics.get("max_cfl"),
                           "phi_range": [float(sol.front.phi.min()), float(sol.front.phi.max())]})
    man.parameters.update({"cells": sol.diagnostics.get("cells"), "steps": sol.diagnostics.get("steps")})
    return sol, outer


def _lagrangian_csv(outer, idx, path, man):
    cols = {k: [] for k in ("t", "x", "tau", "u", "v", "r")}
    for n in idx:
        for s in (0, 1):
            cols["t"].append(np.full(outer.x[s].size, outer.t[n]))
            cols["x"].append(outer.x[s])
            for k, f in (("tau", outer.tau), ("u", outer.u), ("v", outer.v), ("r", outer.r)):
                cols[k].append(f[s][n])
    man.add_output(write_csv(path, list(cols), [np.concatenate(v) for v in cols.values()]))


# --------------------------------------------------------------- layers

def cmd_layers(cfg, man: RunManifest):
    from .asymptotics import build_profiles
    from .layer_profiles import decay_series

    prof = build_profiles(cfg)
    lay = prof.layers
    d = man.run_dir
    idx = _slice_indices(lay.v_B0.t, cfg.grid.output_slices)
    norms = {}
    for fld in (lay.v_B0, lay.v_s0, lay.tau_B1, lay.tau_s1, lay.v_B1, lay.v_s1):
        coord_name = "xi" if fld.kind == "boundary" else "zeta"
        t_col, s_col, v_col = [], [], []
        for j in idx:
            if fld.kind == "vortex":
                (zm, dm), (zp, dp) = fld.layer_sides()
                s_all = np.concatenate([zm, zp])
                v_all = np.concatenate([dm[j], dp[j]])
            else:
                s_all, v_all = fld.coord, fld.layer()[j]
            t_col.append(np.full(s_all.size, fld.t[j]))
            s_col.append(s_all)
            v_col.append(v_all)
        man.add_output(write_csv(d / f"{fld.name}.csv", ["t", coord_name, "value"],
                                 [np.concatenate(t_col), np.concatenate(s_col), np.concatenate(v_col)]))
        series = decay_series(fld)
        norms[fld.name] = {"t": fld.t[idx], **{f"n{n}": series[n][idx] for n in range(series.shape[0])}}
    traces = {"wall": {k: np.asarray(v) for k, v in lay.wall.series.items()},
              "front": {k: np.asarray(v) for k, v in lay.front.series.items()},
              "t": lay.wall.t, "implied_jump": lay.tau_s1.farfield["implied_jump"][idx],
              "weighted_norms": norms}
    man.add_output(write_json(d / "layers.json", traces))
    man.invariants.update({
        "weighted_norm_max": max(float(np.max(v[k])) for v in norms.values() for k in v if k != "t"),
        "weighted_norms_finite": all(np.all(np.isfinite(v[k])) for v in norms.values() for k in v),
        "v_B0_max": float(np.max(np.abs(lay.v_B0.layer()))),
        "v_s0_layer_max": float(np.max(np.abs(lay.v_s0.layer()))),
        "v_B0_edge": lay.v_B0.diagnostics["edge_max"],
        "vortex_farfield_mismatch": lay.v_s0.diagnostics["farfield_mismatch"],
        "implied_jump_max": lay.tau_s1.diagnostics["implied_jump_max"]})
    return prof


# -------------------------------------------------------------- viscous

def cmd_viscous(cfg, man: RunManifest, eps_values):
    from .viscous_solver import run_viscous

    results = {}
    for eps in eps_values:
        traj = run_viscous(cfg, eps)
        g = traj.grid
        cols = {k: [] for k in ("t", "x", "tau", "u", "v", "r")}
        for st in traj.states:
            cols["t"].append(np.full(g.x.size, st.t))
            cols["x"].append(g.x)
            cols["tau"].append(st.tau_nodes(g))
            cols["u"].append(st.u)
            cols["v"].append(st.v)
            cols["r"].append(st.r)
        name = f"trajectory_eps{eps:.3g}.csv"
        man.add_output(write_csv(man.run_dir / name, list(cols), [np.concatenate(v) for v in cols.values()]))
        diag = dict(traj.diagnostics)
        results[f"{eps:.3g}"] = {k: diag[k] for k in ("tau_min", "geometric_defect", "wall_error",
                                                      "far_deviation", "max_cfl", "cells", "steps", "dt")}
    man.invariants.update(results)
    man.parameters["eps"] = list(eps_values)


# --------------------------------------------------------------- verify

def _cache_key(cfg, eps):
    blob = f"{cfg.digest()}|{eps!r}|{__version__}".encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cmd_verify(cfg, man: RunManifest, eps_values, jobs=1, resume=False):
    from .asymptotics import build_profiles, convergence_study

    eps_list = sorted(eps_values or cfg.eps_list, reverse=True)
    if len(eps_list) < 3:
        raise ConfigError("need ≥ 3 ε values to fit")
    d = man.run_dir
    cache_dir = d / "per_eps"
    cached = {}
    if resume:
        for eps in eps_list:
            path = cache_dir / f"eps{eps:.3g}.json"
            if path.exists():
                blob = read_json(path)
                if blob.get("cache_key") == _cache_key(cfg, eps):
                    cached[eps] = blob["result"]
                    man.add_output(path)
    man.parameters.update({"eps": eps_list, "jobs": jobs, "resume": resume, "reused": sorted(cached)})

    def save(res):
        path = cache_dir / f"eps{res['eps']:.3g}.json"
        man.add_output(write_json(path, {"cache_key": _cache_key(cfg, res["eps"]), "result": res}))

    prof = build_profiles(cfg)
    _, results, table = convergence_study(cfg, eps_list, jobs=jobs, profiles=prof,
                                          cached=cached, on_result=save)
    names = list(table)
    man.add_output(write_csv(d / "rates.csv", ["quantity", "slope", "intercept", "r2", "slope_ci95_halfwidth"],
                             [np.array(names, dtype=object),
                              [table[n]["slope"] for n in names], [table[n]["intercept"] for n in names],
                              [table[n]["r2"] for n in names],
                              [table[n]["slope_ci95_halfwidth"] for n in names]]))
    for n in names:
        man.add_output(write_csv(d / "loglog" / f"{n}.dat", ["eps", n], [eps_list, table[n]["values"]]))
    per_eps = [{"eps": r["eps"], "sup_err": r["report"]["sup_err"], "E_T": r["report"]["E_T"],
                "residual_M1": r["report"]["residual_norms"]["M1"]["l2_time"],
                "wall_width": r["report"]["wall_width"], "front_width": r["report"]["front_width"]}
               for r in results]
    summary = {"rates": table, "per_eps": per_eps,
               "order_one_note": ("order-one composite uses the first outer correction with jump "
                                  f"datum '{cfg.phi1.name}'; with 'zero' this is a deliberate approximation"),
               "profiles": prof.diagnostics}
    man.add_output(write_json(d / "summary.json", summary))
    man.invariants.update({"sup_err_slope": table["sup_err"]["slope"],
                           "residual_M1_slope": table["residual_M1"]["slope"],
                           "tau_min": min(r["viscous"]["tau_min"] for r in results)})
    man.notes.append(summary["order_one_note"])
    return table


# ----------------------------------------------------------------- main

def main(argv=None):
    args = _parser().parse_args(argv)
    root = _out_root(args)
    cfg = None
    digest = "invalid"
    code, status, message = 0, "ok", ""
    try:
        cfg = load_config(args.config) if args.config else default_config()
        digest = cfg.digest()
    except VortexLabError as exc:
        code, status, message = exc.exit_code, "config_error", str(exc)
    eps_values = getattr(args, "eps", None) or []
    tag = args.command + "-" + digest
    if args.command == "viscous" and eps_values:
        tag += "-eps" + "_".join(f"{e:.3g}" for e in eps_values)
    man = RunManifest(args.command, digest, root / tag,
                      parameters={"config": str(args.config) if args.config else None})
    if cfg is not None:
        man.parameters["scenario"] = config_summary(cfg)
        try:
            if args.command == "euler":
                cmd_euler(cfg, man)
            elif args.command == "layers":
                cmd_layers(cfg, man)
            elif args.command == "viscous":
                cmd_viscous(cfg, man, eps_values or [1e-3])
            else:
                cmd_verify(cfg, man, eps_values, jobs=args.jobs, resume=args.resume)
        except VortexLabError as exc:
            code, status, message = exc.exit_code, type(exc).__name__, str(exc)
        except Exception as exc:  # unexpected failure still leaves a manifest
            code, status, message = 4, "internal_error", f"{type(exc).__name__}: {exc}"
            man.notes.append(traceback.format_exc())
    man.finish(status, code, message)
    if code:
        print(f"vortexlab {args.command}: error: {message}", file=sys.stderr)
    else:
        print(f"vortexlab {args.command}: ok -> {man.run_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
