"""Viscous radially symmetric flow in Lagrangian mass coordinates.

Staggered layout on a graded mass grid: the specific volume lives in cells,
velocities and the radius at nodes.  With the cell-averaged tau the
discrete identity (r_{i+1}^2 - r_i^2)/2 = tau_c dx_c holds exactly at t = 0
and is preserved to time-integration accuracy.  A step is a Strang split:
half a Crank-Nicolson step of the (u, v) diffusion, a third-order SSP
Runge-Kutta step of everything else, another half diffusion step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ResolutionError, SolverError
from .numerics import first_difference, graded_grid, layered_spacing, max_neighbour_ratio, solve_tridiagonal
from .scenario import MassCoordinateMap, ScenarioConfig, build_viscous_initial


# ------------------------------------------------------------ coefficients

@dataclass
class CoefficientSet:
    """Pointwise coefficients of the viscous Lagrangian system.

    ``A`` and ``B`` have shape (n, 3, 3).  The quadratic forms take their
    arguments as (3, n) arrays.
    """

    tau: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    gamma: float
    mu: float
    lam: float
    A: np.ndarray
    B: np.ndarray

    @property
    def c2(self):
        return self.r**2 * self.tau ** (-(self.gamma + 1.0))

    def q1(self, first, second):
        return np.stack([-first[0] * second[1], -first[2] * second[2], first[1] * second[2]]) / self.r

    def q2(self, d_first, d_second):
        w = (self.r / self.tau) ** 2 * d_first[0]
        return np.stack([0 * w, (self.lam + 2 * self.mu) * w * d_second[1], self.mu * w * d_second[2]])

    def q3(self, first, second):
        w = first[0] / self.r**2
        return np.stack([0 * w, (self.lam + 2 * self.mu) * w * second[1], self.mu * w * second[2]])

    def visc(self, d_state):
        return 2.0 * np.stack([0 * d_state[0], (self.lam + 2 * self.mu) * d_state[1], self.mu * d_state[2]])


def assemble_coefficients(U, r, gamma, mu, lam):
    """Coefficient matrices at states U = (tau, u, v) with radii r."""
    tau, u, v = (np.atleast_1d(np.asarray(c, dtype=float)) for c in U)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(tau <= 0):
        raise SolverError("vacuum: tau <= 0")
    if np.any(r <= 0):
        raise SolverError("collapse: r <= 0")
    n = tau.size
    A = np.zeros((n, 3, 3))
    A[:, 0, 1] = -r
    A[:, 1, 0] = -r * tau ** (-(gamma + 1.0))
    B = np.zeros((n, 3, 3))
    scale = r**2 / tau
    B[:, 1, 1] = scale * (lam + 2 * mu)
    B[:, 2, 2] = scale * mu
    return CoefficientSet(tau, u, v, r, gamma, mu, lam, A, B)


# ------------------------------------------------------------------- grid

@dataclass
class MassGrid:
    x: np.ndarray            # nodes, x[0] = 0, x[-1] = X_max, h is a node
    h_index: int

    @property
    def xc(self):
        return 0.5 * (self.x[1:] + self.x[:-1])

    @property
    def dx(self):
        return np.diff(self.x)

    @property
    def dual(self):
        """Distance between neighbouring cell centres, at interior nodes."""
        return np.diff(self.xc)

    @property
    def h(self):
        return float(self.x[self.h_index])

    @property
    def cells(self):
        return self.x.size - 1


def build_mass_grid(cfg: ScenarioConfig, eps, h, x_max):
    """Graded grid refined near x = 0 and x = h; raises ResolutionError if
    fewer than 8 cells per sqrt(eps) can be afforded there."""
    g = cfg.grid
    se = math.sqrt(eps)
    fine = g.dx_fine or se / g.cells_per_sqrt_eps
    fine = max(fine, g.dx_min)
    coarse = max(min(g.dx_outer, se / g.outer_cells_per_sqrt_eps), fine)
    need = se / 8.0
    if fine > need * (1 + 1e-12):
        required = int(math.ceil(x_max / need))
        raise ResolutionError(
            f"eps={eps:.3g} needs spacing <= sqrt(eps)/8 = {need:.3g} near x=0 and x=h "
            f"(up to {required} uniform cells); the grid floor dx_min={g.dx_min:.3g} forbids it")
    zw = g.zone_halfwidth * se
    spacing = layered_spacing(fine, coarse, [(0.0, zw), (h - zw, h + zw)], g.ratio - 1.0)
    left = graded_grid(0.0, h, spacing, g.ratio)
    right = graded_grid(h, x_max, spacing, g.ratio)
    x = np.concatenate([left, right[1:]])
    grid = MassGrid(x, left.size - 1)
    if grid.cells > g.max_cells:
        raise ResolutionError(f"eps={eps:.3g} needs {grid.cells} cells, more than max_cells={g.max_cells}")
    for centre in (0.0, h):
        near = np.abs(0.5 * (x[1:] + x[:-1]) - centre) <= se
        if np.max(np.diff(x)[near]) > need * (1 + 1e-9):
            raise ResolutionError(f"eps={eps:.3g}: fewer than 8 cells per sqrt(eps) near x={centre:.4g}")
    return grid


# ------------------------------------------------------------------ state

@dataclass
class ViscousState:
    t: float
    tau: np.ndarray          # cells
    u: np.ndarray            # nodes
    v: np.ndarray            # nodes
    r: np.ndarray            # nodes

    def copy(self):
        return ViscousState(self.t, self.tau.copy(), self.u.copy(), self.v.copy(), self.r.copy())

    def tau_nodes(self, grid: MassGrid):
        """Specific volume at nodes (linear in x between cell centres)."""
        xc = grid.xc
        out = np.interp(grid.x, xc, self.tau)
        # one-sided linear extrapolation at the ends
        out[0] = self.tau[0] + (self.tau[0] - self.tau[1]) * (xc[0] - grid.x[0]) / (xc[1] - xc[0])
        out[-1] = self.tau[-1] + (self.tau[-1] - self.tau[-2]) * (grid.x[-1] - xc[-1]) / (xc[-1] - xc[-2])
        return out

    def geometric_defect(self, grid: MassGrid):
        return float(np.max(np.abs(0.5 * np.diff(self.r**2) / grid.dx - self.tau)))


class ViscousProblem:
    """Discrete operators of the viscous system on one grid for one eps."""

    def __init__(self, cfg: ScenarioConfig, eps, grid: MassGrid, wall=None, far=None):
        if eps <= 0:
            raise ConfigError("eps must be positive")
        self.cfg, self.eps, self.grid = cfg, float(eps), grid
        self.wall = wall if wall is not None else cfg.wall
        self.far = far                      # (u, v) at the far node
        self.k_u = cfg.lam + 2 * cfg.mu
        self.k_v = cfg.mu

    # explicit part ----------------------------------------------------
    def explicit_rhs(self, state: ViscousState, t):
        """Time derivatives of everything except the diffusion of (u, v)."""
        g = self.grid
        gam, eps = self.cfg.gamma, self.eps
        tau, u, v, r = state.tau, state.u, state.v, state.r
        if np.any(tau <= 0):
            raise SolverError(f"positivity lost: min tau = {tau.min():.3e} at t={t:.4g}")
        d_tau = np.diff(r * u) / g.dx
        p = tau ** (-gam) / gam
        rn = r[1:-1]
        tn = 0.5 * (tau[1:] + tau[:-1])
        ux = first_difference(g.x, u)
        vx = first_difference(g.x, v)
        d_u = np.zeros_like(u)
        d_v = np.zeros_like(v)
        d_u[1:-1] = (-rn * np.diff(p) / g.dual + v[1:-1] ** 2 / rn
                     + eps * self.k_u * (2 * ux - tn * u[1:-1] / rn**2))
        d_v[1:-1] = -u[1:-1] * v[1:-1] / rn + eps * self.k_v * (2 * vx - tn * v[1:-1] / rn**2)
        d_v[0] = self._wall_rate(t)
        return d_tau, d_u, d_v, u.copy()

    def _wall_rate(self, t, h=1e-6):
        return float((self.wall(t + h) - self.wall(t - h)) / (2 * h))

    # diffusion ---------------------------------------------------------
    def diffusion_weights(self, state: ViscousState):
        """Off-diagonal weights of the conservative operator r^2 d_x(w_x / tau)."""
        g = self.grid
        face = 1.0 / (g.dx * state.tau)                 # per cell
        rn2 = state.r[1:-1] ** 2 / g.dual
        return rn2 * face[:-1], rn2 * face[1:]          # left, right neighbours

    def diffusion_apply(self, state, w, coeff):
        lo, hi = self.diffusion_weights(state)
        out = np.zeros_like(w)
        out[1:-1] = self.eps * coeff * (lo * (w[:-2] - w[1:-1]) + hi * (w[2:] - w[1:-1]))
        return out

    def diffuse(self, state: ViscousState, dt):
        """Crank-Nicolson step of u_t = eps k r^2 (u_x/tau)_x for u and v."""
        lo, hi = self.diffusion_weights(state)
        n = state.u.size
        out = []
        for w, coeff in ((state.u, self.k_u), (state.v, self.k_v)):
            a_lo = 0.5 * dt * self.eps * coeff * lo
            a_hi = 0.5 * dt * self.eps * coeff * hi
            lower = np.zeros(n)
            upper = np.zeros(n)
            diag = np.ones(n)
            rhs = w.copy()
            lower[1:-1] = -a_lo
            upper[1:-1] = -a_hi
            diag[1:-1] = 1 + a_lo + a_hi
            rhs[1:-1] = w[1:-1] + a_lo * (w[:-2] - w[1:-1]) + a_hi * (w[2:] - w[1:-1])
            out.append(solve_tridiagonal(lower, diag, upper, rhs))
        return ViscousState(state.t, state.tau, out[0], out[1], state.r)

    # full operator -------------------------------------------------------
    def operator(self, state: ViscousState, t=None):
        """Spatial part F of U_t = F(U): returns (d_tau, d_u, d_v), interior rows valid."""
        t = state.t if t is None else t
        d_tau, d_u, d_v, _ = self.explicit_rhs(state, t)
        d_u = d_u + self.diffusion_apply(state, state.u, self.k_u)
        d_v = d_v + self.diffusion_apply(state, state.v, self.k_v)
        return d_tau, d_u, d_v

    def stable_dt(self, state: ViscousState, cfl=None):
        cfl = self.cfg.grid.viscous_cfl if cfl is None else cfl
        c = state.r[1:-1] * (0.5 * (state.tau[1:] + state.tau[:-1])) ** (-0.5 * (self.cfg.gamma + 1))
        return float(cfl * np.min(self.grid.dual / c))

    def cfl_number(self, state, dt):
        c = state.r[1:-1] * (0.5 * (state.tau[1:] + state.tau[:-1])) ** (-0.5 * (self.cfg.gamma + 1))
        return float(np.max(c * dt / self.grid.dual))

    def enforce(self, state: ViscousState):
        state.u[0] = 0.0
        state.v[0] = float(self.wall(state.t))
        state.r[0] = self.cfg.a
        if self.far is not None:
            state.u[-1], state.v[-1] = self.far
        return state


def _axpy(state, rates, dt, t):
    d_tau, d_u, d_v, d_r = rates
    return ViscousState(t, state.tau + dt * d_tau, state.u + dt * d_u,
                        state.v + dt * d_v, state.r + dt * d_r)


def _combine(a, wa, b, wb):
    return ViscousState(b.t, wa * a.tau + wb * b.tau, wa * a.u + wb * b.u,
                        wa * a.v + wb * b.v, wa * a.r + wb * b.r)


def step(state: ViscousState, dt, eps, problem: ViscousProblem, max_cfl=1.0):
    """One Strang-split step of size dt."""
    if abs(problem.eps - eps) > 1e-15 * eps:
        raise ConfigError("step: eps does not match the problem")
    cfl = problem.cfl_number(state, dt)
    if cfl > max_cfl:
        raise SolverError(f"CFL violation: {cfl:.3f} > {max_cfl}")
    t0 = state.t
    s = problem.diffuse(state, 0.5 * dt)
    # SSP-RK3 on the explicit part
    k = problem.explicit_rhs(s, t0)
    s1 = _axpy(s, k, dt, t0 + dt)
    k = problem.explicit_rhs(s1, t0 + dt)
    s2 = _combine(s, 0.75, _axpy(s1, k, dt, t0 + 0.5 * dt), 0.25)
    k = problem.explicit_rhs(s2, t0 + 0.5 * dt)
    s3 = _combine(s, 1.0 / 3.0, _axpy(s2, k, dt, t0 + dt), 2.0 / 3.0)
    s3.t = t0 + dt
    out = problem.diffuse(s3, 0.5 * dt)
    out.t = t0 + dt
    problem.enforce(out)
    if not np.all(np.isfinite(out.u)) or not np.all(np.isfinite(out.tau)):
        raise SolverError(f"non-finite state at t={out.t:.4g}")
    if np.any(out.tau <= 0):
        raise SolverError(f"positivity lost at t={out.t:.4g}")
    return out


# ----------------------------------------------------------------- driver

@dataclass
class ViscousTrajectory:
    cfg: ScenarioConfig
    eps: float
    grid: MassGrid
    times: np.ndarray
    states: list
    diagnostics: dict = field(default_factory=dict)

    def state_at(self, t):
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not a stored output time")
        return self.states[j]

    def on_grid(self, t, grid: MassGrid):
        """Stored state at t; the grid must be the trajectory's own."""
        if grid is not self.grid and (grid.x.shape != self.grid.x.shape
                                      or np.max(np.abs(grid.x - self.grid.x)) > 1e-12):
            raise ConfigError("trajectory compared on a different grid")
        return self.state_at(t)

    @property
    def final(self):
        return self.states[-1]


def initial_state(cfg: ScenarioConfig, eps, grid: MassGrid, cmap: MassCoordinateMap):
    """Mollified initial data; tau is the Gauss cell average of tau0(r0(x)) and
    the nodal radii follow from (r_{i+1}^2 - r_i^2)/2 = tau_c dx_c."""
    init = build_viscous_initial(cfg, eps, grid.x, cmap)
    xg, wg = np.polynomial.legendre.leggauss(4)
    pts = grid.xc[:, None] + 0.5 * grid.dx[:, None] * xg[None, :]
    side = np.where(pts < grid.h, -1, 1)
    tau = 0.5 * (cfg.tau0(cmap.r0_of_x(pts), side) @ wg)
    r = np.sqrt(cfg.a**2 + 2.0 * np.concatenate([[0.0], np.cumsum(tau * grid.dx)]))
    u = init.u.copy()
    u[0] = 0.0
    v = init.v.copy()
    v[0] = float(cfg.wall(0.0))
    return ViscousState(0.0, tau, u, v, r)


def run_viscous(cfg: ScenarioConfig, eps, grid: MassGrid | None = None, cmap=None,
                slices=None, n_steps=None, T=None, progress=None):
    """Integrate the viscous problem on [0, T]; return states at output times."""
    cmap = cmap or MassCoordinateMap(cfg)
    x_max = float(cmap.eta(np.array(cfg.grid.r_max)))
    grid = grid or build_mass_grid(cfg, eps, cmap.h, x_max)
    T = cfg.T if T is None else T
    state = initial_state(cfg, eps, grid, cmap)
    far = (float(state.u[-1]), float(state.v[-1]))
    prob = ViscousProblem(cfg, eps, grid, far=far)
    prob.enforce(state)
    if n_steps is None:
        n_steps = int(math.ceil(T / prob.stable_dt(state)))
    dt = T / n_steps
    slices = cfg.grid.output_slices if slices is None else slices
    out_steps = sorted({int(round(k * n_steps / slices)) for k in range(slices + 1)})
    times, states = [0.0], [state.copy()]
    tau_min = float(state.tau.min())
    geo = state.geometric_defect(grid)
    wall_err = 0.0
    far_dev = 0.0
    far0 = (state.tau[-1], state.u[-1], state.v[-1])
    wall_flux = []
    max_cfl = 0.0
    for n in range(1, n_steps + 1):
        max_cfl = max(max_cfl, prob.cfl_number(state, dt))
        state = step(state, dt, eps, prob)
        state.t = n * dt
        prob.enforce(state)
        tau_min = min(tau_min, float(state.tau.min()))
        wall_err = max(wall_err, abs(state.u[0]), abs(state.v[0] - float(cfg.wall(state.t))))
        far_dev = max(far_dev, abs(state.tau[-1] - far0[0]), abs(state.u[-1] - far0[1]))
        if n in out_steps:
            times.append(state.t)
            states.append(state.copy())
            geo = max(geo, state.geometric_defect(grid))
            tn = state.tau[0]
            wall_flux.append(float(eps * cfg.mu * cfg.a**2 / tn * (state.v[1] - state.v[0]) / grid.dx[0]))
        if progress is not None:
            progress(n, n_steps)
    diag = {"eps": float(eps), "cells": grid.cells, "steps": n_steps, "dt": dt,
            "dx_min": float(grid.dx.min()), "dx_max": float(grid.dx.max()),
            "grid_ratio": max_neighbour_ratio(grid.x), "max_cfl": max_cfl,
            "tau_min": tau_min, "geometric_defect": geo, "wall_error": wall_err,
            "far_deviation": far_dev, "wall_flux": wall_flux}
    return ViscousTrajectory(cfg, float(eps), grid, np.array(times), states, diag)
