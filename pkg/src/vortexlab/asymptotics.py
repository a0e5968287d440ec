"""Composite approximate solutions, residuals, error metrics and eps sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, VortexLabError
from .euler_front import solve_outer_correction, solve_vortex_sheet_euler, to_lagrangian
from .layer_profiles import (LayerSet, build_layers, compute_tau_s1, front_trace,
                             solve_vortex_layer_v0)
from .numerics import interp_in_time, loglog_fit, trapezoid_weights
from .scenario import ScenarioConfig
from .viscous_solver import MassGrid, ViscousProblem, ViscousState, run_viscous


# ------------------------------------------------------------ profiles

@dataclass
class Profiles:
    """Every eps-independent ingredient of the composite solution."""

    cfg: ScenarioConfig
    euler: object
    outer: object
    corr: object
    layers: LayerSet
    jump: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self):
        return float(self.outer.t[-1])

    @property
    def h(self):
        return float(self.outer.h)


def implied_jump(outer, cfg, **layer_kw):
    """Front jump of tau^{I,1} that makes the order-one vortex layer decay.

    The far-field value of the tau^{s,1} layer part at zeta = -L equals
    J0(t) - phi1(t), where J0 is its value for phi1 = 0; returns J0 on the
    layer time grid.
    """
    ft = front_trace(outer)
    vs0 = solve_vortex_layer_v0(ft, cfg, **layer_kw)
    ts1 = compute_tau_s1(vs0, ft, cfg)
    return vs0.t, ts1.farfield["implied_jump"]


def build_profiles(cfg: ScenarioConfig, euler_cells=None, lagrangian_cells=None, **layer_kw):
    """Euler front, Lagrangian outer profile, first correction and all layers."""
    sol = solve_vortex_sheet_euler(cfg, cells=euler_cells)
    outer = to_lagrangian(sol, cells=lagrangian_cells)
    if cfg.phi1.name == "implied":
        jt, jv = implied_jump(outer, cfg, **layer_kw)
        jump = lambda t: np.array([interp_in_time(jt, jv, float(s)) for s in np.ravel(t)]).reshape(np.shape(t))
    else:
        jump = cfg.phi1
    corr = solve_outer_correction(outer, jump=jump)
    layers = build_layers(outer, corr, cfg, **layer_kw)
    diag = {"euler": sol.diagnostics, "lagrangian": outer.diagnostics, "correction": corr.diagnostics,
            "implied_jump_max": layers.tau_s1.diagnostics["implied_jump_max"],
            "phi1": cfg.phi1.name}
    return Profiles(cfg, sol, outer, corr, layers, np.asarray(corr.jump), diag)


# ----------------------------------------------------------- composite

@dataclass
class CompositeSolution:
    """Order-M composite U^a on the mass coordinate for one eps."""

    profiles: Profiles
    eps: float
    order: int = 0
    hold_edges: bool = True

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ConfigError("composite order must be 0 or 1")
        if self.eps <= 0:
            raise DomainError("eps must be positive")

    def evaluate(self, t, x, side=None):
        """(tau, u, v, r) of the composite at time t and mass points x."""
        return compose(self.profiles, self.eps, self.order, t, x, side, self.hold_edges)

    def on_grid(self, t, grid: MassGrid):
        """Composite sampled on a staggered viscous grid."""
        nodes = self.evaluate(t, grid.x)
        cells = self.evaluate(t, grid.xc)
        return ViscousState(t, cells[0], nodes[1], nodes[2], nodes[3])

    def front_jumps(self, t, delta=None):
        """Jumps of U^a and d_x U^a at x = h from one-sided evaluations."""
        h = self.profiles.h
        d = delta or 1e-3 * math.sqrt(self.eps)
        xs_m = h - d * np.arange(3)
        xs_p = h + d * np.arange(3)
        m = self.evaluate(t, xs_m, side=-1)
        p = self.evaluate(t, xs_p, side=1)
        jump = p[:, 0] - m[:, 0]
        dm = (3 * m[:, 0] - 4 * m[:, 1] + m[:, 2]) / (2 * d)
        dp = (-3 * p[:, 0] + 4 * p[:, 1] - p[:, 2]) / (2 * d)
        return jump[:3], (dp - dm)[:3]


def compose(profiles: Profiles, eps, M, t, x, side=None, hold_edges=True):
    """Sum outer and layer profiles at one time; returns an array (4, n).

    Layer profiles are read on their stretched coordinates; beyond the
    truncation length they keep their edge value (``hold_edges``) or are
    dropped.
    """
    T = profiles.T
    if t < -1e-12 or t > T + 1e-12:
        raise DomainError(f"t={t} outside the stored range [0, {T}]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = profiles.h
    sd = np.where(x < h, -1, 1) if side is None else np.broadcast_to(np.asarray(side), x.shape)
    lay = profiles.layers
    se = math.sqrt(eps)
    xi = x / se
    zeta = (x - h) / se
    out = profiles.outer.at(t, x, sd)

    def layer(fld, s, sidearg=None):
        vals = fld.evaluate(t, s, side=sidearg)
        if not hold_edges:
            vals = np.where(np.abs(s) > fld.length, 0.0, vals)
        return vals

    out[2] = out[2] + layer(lay.v_B0, xi) + layer(lay.v_s0, zeta, sd)
    if M >= 1:
        c = profiles.corr.at(t, x, sd) if not profiles.corr.is_zero() else np.zeros_like(out)
        out[0] = out[0] + se * (c[0] + layer(lay.tau_B1, xi) + layer(lay.tau_s1, zeta, sd))
        out[1] = out[1] + se * c[1]
        out[2] = out[2] + se * (c[2] + layer(lay.v_B1, xi) + layer(lay.v_s1, zeta, sd))
        out[3] = out[3] + se * c[3]
    return out


# ------------------------------------------------------------ residual

def _l2(values, weights):
    return float(np.sqrt(np.sum(weights * values * values)))


@dataclass
class ResidualReport:
    eps: float
    order: int
    times: np.ndarray
    norms: np.ndarray           # ||R(t)||_{L2} per time
    l2_time: float              # ||R||_{L2(0,T;L2)}
    grad_tau: float             # eps ||d_x R_tau||_{L2(0,T;L2)}
    by_component: dict

    def as_dict(self):
        return {"eps": self.eps, "order": self.order, "l2_time": self.l2_time,
                "eps_grad_tau": self.grad_tau, "by_component": self.by_component}


def residual(composite: CompositeSolution, grid: MassGrid, n_times=20, dt=2.5e-4, cfg=None):
    """Apply the viscous solver's discrete operator to the composite.

    R = d_t U^a - F(U^a) with F the spatial operator of the viscous scheme
    and d_t a central difference of width 2 dt, at the midpoints of n_times
    uniform time intervals.  Rows carrying boundary data are excluded.
    """
    prof = composite.profiles
    cfg = cfg or prof.cfg
    eps = composite.eps
    se = math.sqrt(eps)
    for centre in (0.0, prof.h):
        near = np.abs(grid.xc - centre) <= se
        if np.max(grid.dx[near]) > se / 8.0 * (1 + 1e-9):
            raise VortexLabError("residual: grid does not resolve sqrt(eps) near the layers")
    T = prof.T
    times = (np.arange(n_times) + 0.5) * T / n_times
    dt = min(dt, 0.25 * T / n_times)
    problem = ViscousProblem(cfg, eps, grid)
    w_c = grid.dx
    w_n = trapezoid_weights(grid.x)[1:-1]
    norms, comps, grads = [], {"tau": [], "u": [], "v": []}, []
    for t in times:
        s = composite.on_grid(t, grid)
        sp = composite.on_grid(t + dt, grid)
        sm = composite.on_grid(t - dt, grid)
        F = problem.operator(s, t)
        r_tau = (sp.tau - sm.tau) / (2 * dt) - F[0]
        r_u = ((sp.u - sm.u) / (2 * dt) - F[1])[1:-1]
        r_v = ((sp.v - sm.v) / (2 * dt) - F[2])[1:-1]
        parts = (_l2(r_tau, w_c), _l2(r_u, w_n), _l2(r_v, w_n))
        for k, p in zip(("tau", "u", "v"), parts):
            comps[k].append(p)
        norms.append(math.sqrt(sum(p * p for p in parts)))
        d_rtau = np.diff(r_tau) / grid.dual
        grads.append(eps * _l2(d_rtau, grid.dual))
    norms = np.array(norms)
    dtw = T / n_times
    l2t = float(np.sqrt(np.sum(norms**2) * dtw))
    g2 = float(np.sqrt(np.sum(np.array(grads) ** 2) * dtw))
    by = {k: float(np.sqrt(np.sum(np.array(v) ** 2) * dtw)) for k, v in comps.items()}
    return ResidualReport(eps, composite.order, times, norms, l2t, g2, by)


# ------------------------------------------------------- error metrics

@dataclass
class ErrorReport:
    eps: float
    times: np.ndarray
    energy: np.ndarray          # E(t) = ||U||^2 + eps^2 ||d_x U||^2, U = U^eps - U^a
    sup_err: float              # sup |U^eps - order-0 composite| at T
    sup_err_profile: dict
    wall_width: float
    front_width: float
    strips: dict
    residual_norms: dict = field(default_factory=dict)

    def as_dict(self):
        return {"eps": self.eps, "E_T": float(self.energy[-1]), "E": self.energy.tolist(),
                "times": self.times.tolist(), "sup_err": self.sup_err,
                "wall_width": self.wall_width, "front_width": self.front_width,
                "strips": self.strips, "sup_err_profile": self.sup_err_profile,
                "residual_norms": self.residual_norms}


def _state_of(obj, t, grid):
    if isinstance(obj, ViscousState):
        return obj
    return obj.on_grid(t, grid)


def energy(diff: ViscousState, grid: MassGrid, eps):
    wc = grid.dx
    wn = trapezoid_weights(grid.x)
    l2 = np.sum(wc * diff.tau**2) + np.sum(wn * (diff.u**2 + diff.v**2))
    dx2 = (np.sum(grid.dual * (np.diff(diff.tau) / grid.dual) ** 2)
           + np.sum(grid.dx * ((np.diff(diff.u) / grid.dx) ** 2 + (np.diff(diff.v) / grid.dx) ** 2)))
    return float(l2 + eps**2 * dx2)


def _first_below(dist, mismatch, level):
    """Smallest distance at which mismatch first drops below level."""
    order = np.argsort(dist)
    d, m = dist[order], mismatch[order]
    below = np.nonzero(m < level)[0]
    if below.size == 0:
        return float(d[-1])
    k = below[0]
    if k == 0:
        return float(d[0])
    # linear interpolation between the bracketing samples
    w = (m[k - 1] - level) / (m[k - 1] - m[k])
    return float(d[k - 1] + w * (d[k] - d[k - 1]))


def layer_widths(state: ViscousState, grid: MassGrid, outer_state: ViscousState):
    """Wall and front v-layer widths in x and the mismatch levels used."""
    mis = np.abs(state.v - outer_state.v)
    x, h, ih = grid.x, grid.h, grid.h_index
    wall_level = 0.5 * mis[0]
    wall = _first_below(x[:ih], mis[:ih], wall_level) if wall_level > 0 else 0.0
    # front: half of the sheet strength on each side, averaged
    left = np.abs(state.v[:ih + 1] - outer_state.v[:ih + 1])
    right = np.abs(state.v[ih:] - outer_state.v[ih:])
    jump = abs(outer_state.v[ih + 1] - outer_state.v[ih - 1])
    level = 0.25 * jump
    if level > 0:
        wl = _first_below(h - x[:ih + 1], left, level)
        wr = _first_below(x[ih:] - h, right, level)
        front = 0.5 * (wl + wr)
    else:
        front = 0.0
    return wall, front


def error_metrics(traj, composite, eps=None, order0=None, strip_factor=4.0):
    """Compare a viscous trajectory with a composite on the viscous grid.

    ``composite`` is anything with ``on_grid(t, grid)`` (a CompositeSolution
    or another trajectory).  ``order0`` is the leading-order composite used
    for the sup-norm error, widths and strips (defaults to ``composite``).
    """
    eps = traj.eps if eps is None else eps
    grid = traj.grid
    order0 = order0 if order0 is not None else composite
    prof = getattr(composite, "profiles", None)
    if prof is not None:
        if grid.x[-1] > prof.outer.x_max * (1 + 1e-9) or abs(grid.h - prof.h) > 1e-9:
            raise VortexLabError("error_metrics: viscous grid does not match the outer profile domain")
    E = []
    for t, st in zip(traj.times, traj.states):
        ref = _state_of(composite, t, grid)
        diff = ViscousState(t, st.tau - ref.tau, st.u - ref.u, st.v - ref.v, st.r - ref.r)
        E.append(energy(diff, grid, eps))
    T = traj.times[-1]
    st = traj.states[-1]
    ref0 = _state_of(order0, T, grid)
    err = {"tau": np.abs(st.tau - ref0.tau), "u": np.abs(st.u - ref0.u), "v": np.abs(st.v - ref0.v)}
    sup = max(float(np.max(e)) for e in err.values())
    # where the error sits: location of each component's maximum
    where = {k: float((grid.xc if k == "tau" else grid.x)[int(np.argmax(e))]) for k, e in err.items()}
    where.update({f"{k}_max": float(np.max(e)) for k, e in err.items()})
    if prof is not None:
        outer = ViscousState(T, *_outer_on_grid(prof, T, grid))
        wall_w, front_w = layer_widths(st, grid, outer)
        se = math.sqrt(eps)
        half = strip_factor * se
        strips = {}
        for name, centre in (("wall", 0.0), ("front", grid.h)):
            mn = np.abs(grid.x - centre) <= half
            mc = np.abs(grid.xc - centre) <= half
            strips[name] = {"u": float(np.max(np.abs(st.u - outer.u)[mn])),
                            "tau": float(np.max(np.abs(st.tau - outer.tau)[mc])),
                            "v": float(np.max(np.abs(st.v - outer.v)[mn]))}
    else:
        wall_w = front_w = 0.0
        strips = {}
    return ErrorReport(float(eps), traj.times.copy(), np.array(E), sup, where, wall_w, front_w, strips)


def _outer_on_grid(prof: Profiles, t, grid: MassGrid):
    nodes = prof.outer.at(t, grid.x)
    cells = prof.outer.at(t, grid.xc)
    return cells[0], nodes[1], nodes[2], nodes[3]


# ------------------------------------------------------ symmetrizer

def symmetrizer_diagnostics(state: ViscousState, grid: MassGrid, cfg: ScenarioConfig):
    """Check S = r^{-1} diag(tau^{-(g+1)}, 1, 1) against A and B on the grid."""
    tau = state.tau_nodes(grid)
    r = state.r
    g = cfg.gamma
    if np.any(tau <= 0) or np.any(r <= 0):
        raise VortexLabError("symmetrizer needs positive tau and r")
    kap = tau ** (-(g + 1))
    n = r.size
    S = np.zeros((n, 3, 3))
    S[:, 0, 0] = kap / r
    S[:, 1, 1] = S[:, 2, 2] = 1.0 / r
    A = np.zeros((n, 3, 3))
    A[:, 0, 1] = -r
    A[:, 1, 0] = -r * kap
    B = np.zeros((n, 3, 3))
    B[:, 1, 1] = r**2 / tau * (cfg.lam + 2 * cfg.mu)
    B[:, 2, 2] = r**2 / tau * cfg.mu
    SA = S @ A
    SB = S @ B
    asym_a = float(np.max(np.abs(SA - np.swapaxes(SA, 1, 2))))
    asym_b = float(np.max(np.abs(SB - np.swapaxes(SB, 1, 2))))
    block = SB[:, 1:, 1:]
    c0 = float(np.min(np.linalg.eigvalsh(block)))
    s_min = float(np.min(np.linalg.eigvalsh(S)))
    scale_a = max(float(np.max(np.abs(SA))), 1e-300)
    scale_b = max(float(np.max(np.abs(SB))), 1e-300)
    return {"SA_asymmetry": asym_a, "SB_asymmetry": asym_b,
            "SA_rel_asymmetry": asym_a / scale_a, "SB_rel_asymmetry": asym_b / scale_b, "c0": c0,
            "S_min_eig": s_min, "tau_min": float(tau.min()), "r_min": float(r.min()),
            "positive": bool(c0 > 0 and s_min > 0)}


# ---------------------------------------------------- convergence study

def _study_one(args):
    profiles, eps, kw = args
    cfg = profiles.cfg
    traj = run_viscous(cfg, eps, **kw.get("viscous", {}))
    c0 = CompositeSolution(profiles, eps, 0)
    c1 = CompositeSolution(profiles, eps, 1)
    rep = error_metrics(traj, c1, order0=c0)
    r1 = residual(c1, traj.grid, **kw.get("residual", {}))
    r0 = residual(c0, traj.grid, **kw.get("residual", {}))
    rep.residual_norms = {"M1": r1.as_dict(), "M0": r0.as_dict()}
    sym = symmetrizer_diagnostics(c1.on_grid(traj.times[-1], traj.grid), traj.grid, cfg)
    return {"eps": float(eps), "report": rep.as_dict(), "viscous": traj.diagnostics,
            "symmetrizer": sym,
            "front_jumps_M1": [v.tolist() for v in c1.front_jumps(traj.times[-1])]}


RATE_QUANTITIES = {
    "sup_err": lambda r: r["report"]["sup_err"],
    "E_T": lambda r: r["report"]["E_T"],
    "residual_M1": lambda r: r["report"]["residual_norms"]["M1"]["l2_time"],
    "residual_M0": lambda r: r["report"]["residual_norms"]["M0"]["l2_time"],
    "wall_width": lambda r: r["report"]["wall_width"],
    "front_width": lambda r: r["report"]["front_width"],
    "wall_strip_u": lambda r: r["report"]["strips"]["wall"]["u"],
    "wall_strip_tau": lambda r: r["report"]["strips"]["wall"]["tau"],
    "front_strip_u": lambda r: r["report"]["strips"]["front"]["u"],
    "front_strip_tau": lambda r: r["report"]["strips"]["front"]["tau"],
}


def rate_table(results):
    eps = [r["eps"] for r in results]
    table = {}
    for name, get in RATE_QUANTITIES.items():
        ys = [get(r) for r in results]
        if all(y > 0 for y in ys):
            fit = loglog_fit(eps, ys).as_dict()
        else:
            fit = {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"),
                   "slope_ci95_halfwidth": float("nan")}
        fit["values"] = ys
        table[name] = fit
    return table


def convergence_study(cfg: ScenarioConfig, eps_list=None, jobs=1, profiles=None,
                      cached=None, on_result=None, **kw):
    """Run the viscous problem for every eps and fit log-log rates.

    ``cached`` maps eps to earlier per-eps results that are reused;
    ``on_result`` is called with each fresh result (for incremental saving).
    Returns (profiles, results, table).
    """
    eps_list = sorted(cfg.eps_list if eps_list is None else eps_list, reverse=True)
    if len(eps_list) < 3:
        raise ConfigError("need ≥ 3 ε values to fit")
    profiles = profiles or build_profiles(cfg)
    cached = cached or {}
    todo = [e for e in eps_list if e not in cached]
    fresh = {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for e, res in zip(todo, pool.map(_study_one, [(profiles, e, kw) for e in todo])):
                fresh[e] = res
                if on_result:
                    on_result(res)
    else:
        for e in todo:
            fresh[e] = _study_one((profiles, e, kw))
            if on_result:
                on_result(fresh[e])
    results = [cached.get(e) or fresh[e] for e in eps_list]
    return profiles, results, rate_table(results)
