"""Inviscid vortex-sheet flow by front straightening and characteristics.

The free front r = phi(t) is mapped to the fixed radius b by the affine
change of variables ``Phi(t, rt) = a + (phi(t) - a)(rt - a)/(b - a)``.  In
the straightened variable the Euler system reads

    U_t + B(U, phi) U_rt + C(U, phi) = 0,    U = (rho, u, v),

with eigenvalues ``(u - Phi_t -+ c)/Phi_r`` and ``(u - Phi_t)/Phi_r``.  Each
time slab is solved by tracing the three characteristic families back to
the previous level, interpolating only within one smooth side, and using
the wall reflection and front transmission conditions where a family enters
through a boundary.  The nonlinear coefficients and the front position are
iterated to a fixed point on every slab.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, SolverError, TraceError
from .numerics import ShapeCubic, derivative, interp_in_time, hermite_eval
from .scenario import ScenarioConfig, MassCoordinateMap

MINUS, PLUS = 0, 1


# ------------------------------------------------------------------ front

@dataclass
class FrontState:
    t: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray

    @property
    def b(self):
        return float(self.phi[0])

    def at(self, t):
        """Front position and speed at time(s) ``t`` (cubic Hermite in time)."""
        t = np.asarray(t, dtype=float)
        if self.t.size == 1:
            return self.phi[0] + 0 * t, self.phi_prime[0] + 0 * t
        pos = hermite_eval(self.t, self.phi, self.phi_prime, t)
        speed = np.interp(t, self.t, self.phi_prime)
        return pos, speed

    def acceleration(self):
        if self.t.size < 3:
            return np.zeros_like(self.t)
        return np.gradient(self.phi_prime, self.t, edge_order=2)

    @classmethod
    def static(cls, b, t=(0.0,)):
        t = np.asarray(t, dtype=float)
        return cls(t, np.full_like(t, b), np.zeros_like(t))


def straighten(front, t, r_tilde, a):
    """Affine map to the fixed front: returns (Phi, Phi_t, Phi_r).

    ``front`` is a FrontState with phi(0) = b, or a tuple
    ``(phi, phi_prime, b)`` of values at time ``t``.
    """
    if isinstance(front, FrontState):
        phi, dphi = front.at(t)
        b = front.b
    else:
        phi, dphi, b = front
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= a):
        raise SolverError("front collided with the wall (geometry collapse)")
    r_tilde = np.asarray(r_tilde, dtype=float)
    s = (r_tilde - a) / (b - a)
    Phi = a + (phi - a) * s
    Phi_t = dphi * s
    Phi_r = (phi - a) / (b - a) + 0.0 * r_tilde
    return Phi, Phi_t, Phi_r


# ------------------------------------------------------------ eigensystem

@dataclass
class EigenSystem:
    lambdas: np.ndarray
    R: np.ndarray
    Rinv: np.ndarray
    c: np.ndarray


def sound_speed(rho, gamma):
    return np.power(rho, 0.5 * (gamma - 1.0))


def transport_matrix(U, geom, gamma):
    """Coefficient matrix B(U, phi) of the straightened system, shape (..., 3, 3)."""
    rho, u, _v = (np.asarray(q, dtype=float) for q in U)
    Phi_t, Phi_r = geom
    c2 = np.power(rho, gamma - 1.0)
    rel = u - Phi_t
    shape = np.broadcast(rho, rel, Phi_r).shape
    B = np.zeros(shape + (3, 3))
    B[..., 0, 0] = rel
    B[..., 0, 1] = rho
    B[..., 1, 0] = c2 / rho
    B[..., 1, 1] = rel
    B[..., 2, 2] = rel
    return B / np.asarray(Phi_r)[..., None, None]


def source_term(U, Phi):
    rho, u, v = U
    return np.stack([rho * u, -v * v, u * v]) / Phi


def eigensystem(U, geom, gamma):
    rho, u, _v = (np.asarray(q, dtype=float) for q in U)
    if np.any(rho <= 0):
        raise SolverError("vacuum or negative density: characteristic speeds degenerate")
    Phi_t, Phi_r = geom
    c = sound_speed(rho, gamma)
    mid = (u - Phi_t) / Phi_r
    lam = np.stack([mid - c / Phi_r, mid + 0 * c, mid + c / Phi_r])
    shape = np.broadcast(rho, c).shape
    R = np.zeros(shape + (3, 3))
    R[..., 0, 0] = rho
    R[..., 1, 0] = -c
    R[..., 2, 1] = 1.0
    R[..., 0, 2] = rho
    R[..., 1, 2] = c
    Rinv = np.zeros(shape + (3, 3))
    k = 1.0 / (2.0 * rho * c)
    Rinv[..., 0, 0] = c * k
    Rinv[..., 0, 1] = -rho * k
    Rinv[..., 1, 2] = 1.0
    Rinv[..., 2, 0] = c * k
    Rinv[..., 2, 1] = rho * k
    return EigenSystem(lam, R, Rinv, c)


def left_vectors(rho, c):
    """Rows 1 and 3 of R^{-1} restricted to (rho, u): ((l1_rho, l1_u), (l3_rho, l3_u))."""
    return (0.5 / rho, -0.5 / c), (0.5 / rho, 0.5 / c)


# ------------------------------------------------------------ characteristics

@dataclass
class TraceResult:
    position: np.ndarray
    crossed: np.ndarray
    tau: np.ndarray
    boundary: np.ndarray


def trace_characteristic(speed, t, r, s, bounds=None, substeps=1):
    """Follow dgamma/ds' = speed(s', gamma) from (t, r) to time ``s``.

    Uses the trapezoid rule on each substep (fixed-point iterated).  When
    ``bounds = (lo, hi)`` is given, paths that leave the interval report the
    crossing time ``tau`` and which bound they hit (0 lower, 1 upper); their
    position is frozen at the bound.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float)).copy()
    n = r.size
    crossed = np.zeros(n, dtype=bool)
    tau = np.full(n, np.nan)
    which = np.full(n, -1)
    ts = np.linspace(t, s, substeps + 1)
    for t0, t1 in zip(ts[:-1], ts[1:]):
        dt = t1 - t0
        live = ~crossed
        if not np.any(live):
            break
        r0 = r[live]
        v0 = np.asarray(speed(t0, r0), dtype=float) + 0 * r0
        r1 = r0 + dt * v0
        for _ in range(4):
            r1 = r0 + 0.5 * dt * (v0 + np.asarray(speed(t1, r1), dtype=float))
        if bounds is not None:
            lo, hi = bounds
            out_lo = r1 < lo - 1e-13
            out_hi = r1 > hi + 1e-13
            out = out_lo | out_hi
            if np.any(out):
                edge = np.where(out_lo, lo, hi)[out]
                frac = (edge - r0[out]) / (r1[out] - r0[out])
                idx = np.flatnonzero(live)[out]
                crossed[idx] = True
                tau[idx] = t0 + frac * dt
                which[idx] = np.where(out_lo[out], 0, 1)
                r1[out] = edge
        r[live] = r1
    return TraceResult(r, crossed, tau, which)


# ------------------------------------------------------ diagonal IBVP solver

@dataclass
class DiagonalSolution:
    t: np.ndarray
    r: tuple
    w: tuple
    picard_iterations: list
    origin: dict = field(default_factory=dict)

    def at_level(self, n):
        return self.w[MINUS][n], self.w[PLUS][n]


INITIAL, LOWER, UPPER = 0, 1, 2


def _lagrange(xs, ys, p):
    """Row-wise Lagrange interpolation: xs, ys of shape (m, q), p of shape (m,)."""
    q = xs.shape[1]
    out = np.zeros(p.shape)
    for j in range(q):
        basis = np.ones(p.shape)
        for l in range(q):
            if l != j:
                basis *= (p - xs[:, l]) / (xs[:, j] - xs[:, l])
        out += basis * ys[:, j]
    return out


@dataclass
class _OriginMap:
    """Where the family-k characteristic through each node started.

    kind: INITIAL (coord = r at t = 0), LOWER or UPPER (coord = crossing time);
    src: source integral accumulated along the path since the origin.
    ``dividers`` maps an inflow edge to the current position of the
    characteristic leaving that corner at t = 0, with its own source integral.
    """

    kind: np.ndarray
    coord: np.ndarray
    src: np.ndarray
    dividers: dict


def _corner_coord(kind, edge_r):
    return edge_r if kind == INITIAL else 0.0


def _sample_origin(r, omap, p, edges):
    """Interpolate the origin map at foot points ``p`` (all inside [r0, rn])."""
    n = r.size
    j = np.clip(np.searchsorted(r, p, side="right") - 1, 0, n - 2)
    start = np.clip(j - 1, 0, n - 4)
    idx = start[:, None] + np.arange(4)[None, :]
    kinds = omap.kind[idx]
    clean = np.all(kinds == kinds[:, :1], axis=1)
    for d, _ in omap.dividers.values():
        clean &= ~((r[idx[:, 0]] < d) & (d < r[idx[:, -1]]))
    kind = kinds[:, 0].copy()
    coord = np.empty(p.size)
    src = np.empty(p.size)
    if np.any(clean):
        sel = np.flatnonzero(clean)
        xs = r[idx[sel]]
        coord[sel] = _lagrange(xs, omap.coord[idx[sel]], p[sel])
        src[sel] = _lagrange(xs, omap.src[idx[sel]], p[sel])
    for i in np.flatnonzero(~clean):
        pi = p[i]
        lo_w, hi_w = max(j[i] - 2, 0), min(j[i] + 4, n)
        window = np.arange(lo_w, hi_w)
        near = None
        for edge, (d, dsrc) in omap.dividers.items():
            if near is None or abs(d - pi) < abs(near[1] - pi):
                near = (edge, d, dsrc)
        if near is not None:
            edge, d, dsrc = near
            boundary_side = (pi < d) if edge == LOWER else (pi > d)
            same_side = (r[window] < d) if (pi < d) else (r[window] > d)
            if boundary_side:
                kk = edge
            else:
                cand = window[same_side & (omap.kind[window] != edge)]
                kk = int(omap.kind[cand[np.argmax(np.abs(r[cand] - d))]]) if cand.size else INITIAL
            pts = window[same_side & (omap.kind[window] == kk)]
            xs = np.concatenate([[d], r[pts]])
            cs = np.concatenate([[_corner_coord(kk, edges[edge])], omap.coord[pts]])
            ss = np.concatenate([[dsrc], omap.src[pts]])
        else:
            kk = int(omap.kind[np.argmin(np.abs(r[window] - pi)) + lo_w])
            pts = window[omap.kind[window] == kk]
            xs, cs, ss = r[pts], omap.coord[pts], omap.src[pts]
        order = np.argsort(np.abs(xs - pi))[:4]
        xs, cs, ss = xs[order], cs[order], ss[order]
        kind[i] = kk
        coord[i] = _lagrange(xs[None], cs[None], np.array([pi]))[0]
        src[i] = _lagrange(xs[None], ss[None], np.array([pi]))[0]
    return kind, coord, src


def solve_diagonal_ibvp(speeds, w0, a, b, r_far, T, n_minus, n_plus, n_steps,
                        m=None, f=None, wall_data=None, far_data=None,
                        tol=1e-10, max_iter=50):
    """Solve w_t + diag(lambda) w_r = m w + f on [a, b] and [b, r_far].

    Couplings: ``w3 = w1 (+ wall_data)`` at r = a (reflection), continuity of
    w1 and w3 at r = b (transmission), prescribed incoming values at r_far
    (``far_data(k, t)``, zero by default; k counts families from 0).

    ``speeds(t, r, side)`` returns the three speeds, shape (3, n); family 2
    must not cross a or b.  ``m(t, r, side)`` returns (3, 3, n) and ``f`` the
    forcing (3, n); both may be None.  ``w0(r, side)`` gives the initial data.

    Every node value is the datum at the origin of its characteristic (the
    initial line or a boundary crossing) plus the source integrated along the
    path.  The origin map is advanced one slab at a time; the corner
    characteristics separating the regions are tracked so the map is never
    interpolated across them.  The m w coupling is resolved on each slab by
    Picard iteration; with m = 0 the iteration only resolves the boundary
    couplings and terminates after a few passes.
    """
    rs = (np.linspace(a, b, n_minus + 1), np.linspace(b, r_far, n_plus + 1))
    edges = ({LOWER: a, UPPER: b}, {LOWER: b, UPPER: r_far})
    times = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    sides = (-1, 1)
    sourced = m is not None or f is not None
    w_init = [np.asarray(w0(rs[s], sides[s]), dtype=float).reshape(3, -1) for s in (0, 1)]
    hist = [[w_init[0]], [w_init[1]]]

    def rhs(t, r, s, w):
        out = np.zeros((3, np.size(r)))
        if m is not None:
            mm = np.asarray(m(t, r, sides[s]), dtype=float).reshape(3, 3, -1)
            out += np.einsum("ijn,jn->in", mm * np.ones((1, 1, np.size(r))), w)
        if f is not None:
            out += np.asarray(f(t, r, sides[s]), dtype=float).reshape(3, -1)
        return out

    maps = {}
    for s in (0, 1):
        for k in range(3):
            div = {}
            for edge, sign in ((LOWER, 1.0), (UPPER, -1.0)):
                lam = float(np.asarray(speeds(0.0, np.array([edges[s][edge]]), sides[s]))[k, 0])
                if sign * lam > 1e-14:
                    div[edge] = (edges[s][edge], 0.0)
            maps[(s, k)] = _OriginMap(np.full(rs[s].size, INITIAL), rs[s].copy(),
                                      np.zeros(rs[s].size), div)

    edge_hist = {(s, e): np.zeros((n_steps + 1, 3)) for s in (0, 1) for e in (LOWER, UPPER)}
    for s in (0, 1):
        edge_hist[(s, LOWER)][0] = w_init[s][:, 0]
        edge_hist[(s, UPPER)][0] = w_init[s][:, -1]

    def edge_series(s, edge, level_vals, tau):
        """All three families at an edge node, interpolated in time to ``tau``.

        Uses the stored edge history up to the current level plus the
        current iterate for the level being computed.
        """
        level = len(hist[s])
        series = edge_hist[(s, edge)]
        series[level] = level_vals[s][:, 0 if edge == LOWER else -1]
        count = level + 1
        q = min(4, count)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        start = np.clip(np.searchsorted(times[:count], tau) - q // 2, 0, count - q)
        idx = start[:, None] + np.arange(q)[None, :]
        tt = times[idx]
        out = np.zeros((3, tau.size))
        for j in range(q):
            basis = np.ones(tau.size)
            for l in range(q):
                if l != j:
                    basis *= (tau - tt[:, l]) / (tt[:, j] - tt[:, l])
            out += basis * series[idx[:, j]].T
        return out

    def boundary_datum(s, k, edge, tau, level_vals):
        if s == MINUS and edge == LOWER:
            if k != 2:
                raise TraceError(f"family {k + 1} entered through the wall")
            val = edge_series(MINUS, LOWER, level_vals, tau)[0]
            if wall_data is not None:
                val = val + np.asarray(wall_data(tau), dtype=float)
            return val
        if s == PLUS and edge == UPPER:
            if far_data is None:
                return np.zeros(np.size(tau))
            return np.asarray(far_data(k, tau), dtype=float) + 0 * tau
        if k == 1:
            raise TraceError("family 2 crossed the front")
        other = PLUS if s == MINUS else MINUS
        return edge_series(other, UPPER if other == MINUS else LOWER, level_vals, tau)[k]

    iters = []
    for n in range(n_steps):
        t0, t1 = times[n], times[n + 1]
        prev = [hist[0][-1], hist[1][-1]]
        if sourced:
            ip_prev = [[ShapeCubic(rs[s], prev[s][c]) for c in range(3)] for s in (0, 1)]
        plan = {}
        for s in (0, 1):
            r = rs[s]
            lo, hi = r[0], r[-1]
            lam_q = np.asarray(speeds(t1, r, sides[s]), dtype=float)
            for k in range(3):
                omap = maps[(s, k)]
                lq = lam_q[k]
                foot = r - dt * lq
                for _ in range(4):
                    foot = r - 0.5 * dt * (np.asarray(speeds(t0, foot, sides[s]))[k] + lq)
                below = foot < lo - 1e-14
                above = foot > hi + 1e-14
                inside = ~(below | above)
                kind = np.empty(r.size, dtype=int)
                coord = np.empty(r.size)
                base = np.zeros(r.size)
                half = np.full(r.size, 0.5 * dt)
                fi = np.clip(foot[inside], lo, hi)
                kind[inside], coord[inside], base[inside] = _sample_origin(r, omap, fi, edges[s])
                if sourced and np.any(inside):
                    wp = np.stack([ip_prev[s][c](fi) for c in range(3)])
                    base[inside] += 0.5 * dt * rhs(t0, fi, s, wp)[k]
                out = ~inside
                edge_r = np.where(below, lo, hi)[out]
                frac = (r[out] - edge_r) / (r[out] - foot[out])
                tau = t1 - frac * dt
                kind[out] = np.where(below[out], LOWER, UPPER)
                coord[out] = tau
                half[out] = 0.5 * (t1 - tau)
                plan[(s, k)] = (kind, coord, base, half, edge_r)
        guess = [p.copy() for p in prev]
        for it in range(max_iter):
            gq = [rhs(t1, rs[s], s, guess[s]) for s in (0, 1)] if sourced else None
            new = [np.empty_like(guess[s]) for s in (0, 1)]
            for s in (0, 1):
                for k in range(3):
                    kind, coord, base, half, edge_r = plan[(s, k)]
                    val = base.copy()
                    init = kind == INITIAL
                    if np.any(init):
                        val[init] += np.asarray(w0(coord[init], sides[s]), dtype=float).reshape(3, -1)[k]
                    for edge in (LOWER, UPPER):
                        sel = kind == edge
                        if not np.any(sel):
                            continue
                        val[sel] += boundary_datum(s, k, edge, coord[sel], guess)
                    if sourced:
                        val += half * gq[s][k]
                        fresh = half != 0.5 * dt
                        if np.any(fresh):
                            ids = np.flatnonzero(fresh)
                            for edge in (LOWER, UPPER):
                                e_ids = ids[kind[ids] == edge]
                                if e_ids.size:
                                    tau = coord[e_ids]
                                    wb = edge_series(s, edge, guess, tau)
                                    er = np.full(tau.size, edges[s][edge])
                                    val[e_ids] += half[e_ids] * np.array(
                                        [rhs(tq, er[:1], s, wb[:, q:q + 1])[k, 0] for q, tq in enumerate(tau)])
                    new[s][k] = val
            diff = max(np.max(np.abs(new[s] - guess[s])) for s in (0, 1))
            guess = new
            if diff < tol:
                break
        else:
            raise ConvergenceError(f"Picard iteration stalled at step {n} (diff {diff:.2e})")
        iters.append(it + 1)
        gq = [rhs(t1, rs[s], s, guess[s]) for s in (0, 1)] if sourced else None
        for s in (0, 1):
            lo, hi = rs[s][0], rs[s][-1]
            for k in range(3):
                kind, coord, base, half, _ = plan[(s, k)]
                omap = maps[(s, k)]
                src = base + (half * gq[s][k] if sourced else 0.0)
                divs = {}
                for edge, (d, dsrc) in omap.dividers.items():
                    l0 = float(np.asarray(speeds(t0, np.array([d]), sides[s]))[k, 0])
                    d1 = d + dt * l0
                    for _ in range(4):
                        d1 = d + 0.5 * dt * (l0 + float(np.asarray(speeds(t1, np.array([d1]), sides[s]))[k, 0]))
                    if sourced:
                        w_d0 = np.array([[ip_prev[s][c](np.array([d]))[0]] for c in range(3)])
                        w_d1 = np.array([[ShapeCubic(rs[s], guess[s][c])(np.array([d1]))[0]] for c in range(3)])
                        dsrc = dsrc + 0.5 * dt * (rhs(t0, np.array([d]), s, w_d0)[k, 0]
                                                  + rhs(t1, np.array([d1]), s, w_d1)[k, 0])
                    if lo < d1 < hi:
                        divs[edge] = (d1, dsrc)
                maps[(s, k)] = _OriginMap(kind, coord, src, divs)
        hist[0].append(guess[0])
        hist[1].append(guess[1])
    w = (np.array(hist[0]), np.array(hist[1]))
    origin = {key: (mp.kind.copy(), mp.coord.copy()) for key, mp in maps.items()}
    return DiagonalSolution(times, rs, w, iters, origin)


# ------------------------------------------------------- nonlinear Euler

@dataclass
class EulerSolution:
    cfg: ScenarioConfig
    t: np.ndarray
    rt: tuple
    U: tuple
    front: FrontState
    diagnostics: dict = field(default_factory=dict)

    def physical_radius(self, n, side):
        Phi, _, _ = straighten((self.front.phi[n], self.front.phi_prime[n], self.cfg.b),
                               self.t[n], self.rt[side], self.cfg.a)
        return Phi

    def jumps(self):
        g = self.cfg.gamma
        rm, rp = self.U[MINUS][:, 0, -1], self.U[PLUS][:, 0, 0]
        du = self.U[PLUS][:, 1, 0] - self.U[MINUS][:, 1, -1]
        dp = (rp**g - rm**g) / g
        dv = self.U[PLUS][:, 2, 0] - self.U[MINUS][:, 2, -1]
        return du, dp, dv


def _background(cfg, r, side):
    return np.stack([cfg.rho0(r, side), cfg.u0(r, side), cfg.v0(r, side)])


def solve_vortex_sheet_euler(cfg: ScenarioConfig, cells=None, cfl=None, n_steps=None,
                             tol=1e-8, max_sweeps=30, max_front_speed=10.0):
    """Piecewise smooth Euler flow with a vortex sheet, on [0, T].

    Returns an EulerSolution on the straightened grid.  ``cells`` is the
    total number of cells over [a, r_max], split between the two sides in
    proportion to their length.
    """
    a, b, g = cfg.a, cfg.b, cfg.gamma
    R = cfg.grid.r_max
    cells = cells or cfg.grid.euler_cells
    cfl = cfl or cfg.grid.euler_cfl
    nm = max(4, int(round(cells * (b - a) / (R - a))))
    npl = max(4, cells - nm)
    rt = (np.linspace(a, b, nm + 1), np.linspace(b, R, npl + 1))
    sides = (-1, 1)
    U = [_background(cfg, rt[s], sides[s]) for s in (0, 1)]
    dr = min(rt[0][1] - rt[0][0], rt[1][1] - rt[1][0])
    if n_steps is None:
        smax = max(np.max(np.abs(U[s][1]) + sound_speed(U[s][0], g)) for s in (0, 1))
        n_steps = int(np.ceil(cfg.T * smax / (cfl * dr)))
    dt = cfg.T / n_steps
    times = np.linspace(0.0, cfg.T, n_steps + 1)
    hist = [[U[0].copy()], [U[1].copy()]]
    phis, dphis = [b], [float(U[0][1, -1])]
    sweeps, last_diff, cfl_max = [], [], 0.0

    def geom(phi, dphi, s):
        return straighten((phi, dphi, b), None, rt[s], a)

    for n in range(n_steps):
        t0, t1 = times[n], times[n + 1]
        phi0, dphi0 = phis[-1], dphis[-1]
        g0 = [geom(phi0, dphi0, s) for s in (0, 1)]
        lam0 = [eigensystem(U[s], g0[s][1:], g).lambdas for s in (0, 1)]
        cfl_max = max(cfl_max, max(np.max(np.abs(lam0[s])) * dt / (rt[s][1] - rt[s][0]) for s in (0, 1)))
        if cfl_max > 0.95:
            raise SolverError(f"CFL condition violated at t={t0:.4g} (CFL={cfl_max:.3f})")
        ip_U = [[ShapeCubic(rt[s], U[s][c]) for c in range(3)] for s in (0, 1)]
        ip_lam = [[ShapeCubic(rt[s], lam0[s][k]) for k in range(3)] for s in (0, 1)]
        UQ = [U[s].copy() for s in (0, 1)]
        phiQ, dphiQ = phi0 + dt * dphi0, dphi0
        for sweep in range(max_sweeps):
            gQ = [geom(phiQ, dphiQ, s) for s in (0, 1)]
            lamQ = [eigensystem(UQ[s], gQ[s][1:], g).lambdas for s in (0, 1)]
            new = [np.empty_like(UQ[s]) for s in (0, 1)]
            rel = {}
            for s in (0, 1):
                lo_s, hi_s = rt[s][0], rt[s][-1]
                cQ = sound_speed(UQ[s][0], g)
                CQ = source_term(UQ[s], gQ[s][0])
                l1Q, l3Q = left_vectors(UQ[s][0], cQ)
                for k in range(3):
                    foot = rt[s] - dt * lamQ[s][k]
                    for _ in range(3):
                        foot = rt[s] - 0.5 * dt * (ip_lam[s][k](foot, extrapolate=True) + lamQ[s][k])
                    foot = np.clip(foot, lo_s, hi_s)
                    UP = np.stack([ip_U[s][c](foot) for c in range(3)])
                    PhiP = a + (phi0 - a) * (foot - a) / (b - a)
                    CP = source_term(UP, PhiP)
                    if k == 1:
                        rel[(s, k)] = UP[2] - 0.5 * dt * (CP[2] + CQ[2])
                        continue
                    cP = sound_speed(UP[0], g)
                    lP = left_vectors(UP[0], cP)[0 if k == 0 else 1]
                    lQ = l1Q if k == 0 else l3Q
                    lr = 0.5 * (lP[0] + lQ[0])
                    lu = 0.5 * (lP[1] + lQ[1])
                    rhs = (lr * UP[0] + lu * UP[1]
                           - 0.5 * dt * (lP[0] * CP[0] + lP[1] * CP[1] + lQ[0] * CQ[0] + lQ[1] * CQ[1]))
                    rel[(s, k)] = (lr, lu, rhs)
            for s in (0, 1):
                (a1, b1, r1), (a3, b3, r3) = rel[(s, 0)], rel[(s, 2)]
                det = a1 * b3 - a3 * b1
                new[s][0] = (r1 * b3 - r3 * b1) / det
                new[s][1] = (a1 * r3 - a3 * r1) / det
                new[s][2] = rel[(s, 1)]
            # wall: u = 0 with the outgoing family 1
            a1, b1, r1 = (q[0] for q in rel[(MINUS, 0)])
            new[MINUS][0, 0] = r1 / a1
            new[MINUS][1, 0] = 0.0
            # front: family 3 arrives from the inner side, family 1 from the outer side
            a3, b3, r3 = (q[-1] for q in rel[(MINUS, 2)])
            a1, b1, r1 = (q[0] for q in rel[(PLUS, 0)])
            det = a1 * b3 - a3 * b1
            rho_f = (r1 * b3 - r3 * b1) / det
            u_f = (a1 * r3 - a3 * r1) / det
            new[MINUS][0, -1] = new[PLUS][0, 0] = rho_f
            new[MINUS][1, -1] = new[PLUS][1, 0] = u_f
            # far field: undisturbed background at the current physical radius
            r_far = a + (phiQ - a) * (R - a) / (b - a)
            new[PLUS][:, -1] = _background(cfg, np.array([r_far]), 1)[:, 0]
            phi_new = phi0 + 0.5 * dt * (dphi0 + u_f)
            diff = max(np.max(np.abs(new[s] - UQ[s])) for s in (0, 1))
            diff = max(diff, abs(phi_new - phiQ), abs(u_f - dphiQ))
            UQ, phiQ, dphiQ = new, phi_new, u_f
            if not np.isfinite(diff):
                raise SolverError(f"Euler iteration produced non-finite values at t={t1:.4g}")
            if diff < tol:
                break
        else:
            if diff > 1e3 * tol:
                raise ConvergenceError(f"outer iteration did not converge at t={t1:.4g} (diff {diff:.2e})")
        sweeps.append(sweep + 1)
        last_diff.append(diff)
        if min(np.min(UQ[s][0]) for s in (0, 1)) <= 0:
            raise SolverError(f"density lost positivity at t={t1:.4g}")
        if phiQ <= a:
            raise SolverError(f"front collided with the wall at t={t1:.4g}")
        if abs(dphiQ) > max_front_speed:
            raise SolverError(f"front speed {dphiQ:.3g} exceeds the configured bound")
        U = UQ
        phis.append(phiQ)
        dphis.append(dphiQ)
        hist[0].append(U[0].copy())
        hist[1].append(U[1].copy())
    front = FrontState(times, np.array(phis), np.array(dphis))
    sol = EulerSolution(cfg, times, rt, (np.array(hist[0]), np.array(hist[1])), front)
    du, dp, dv = sol.jumps()
    sol.diagnostics = {
        "steps": n_steps, "dt": dt, "cells": (nm, npl), "max_cfl": cfl_max,
        "max_sweeps": int(max(sweeps) if sweeps else 0),
        "max_sweep_diff": float(max(last_diff) if last_diff else 0.0),
        "max_jump_u": float(np.max(np.abs(du))), "max_jump_p": float(np.max(np.abs(dp))),
        "jump_v_final": float(dv[-1]), "jump_v_initial": float(dv[0]),
    }
    return sol


def steady_swirl_density(cfg: ScenarioConfig, r, side):
    """Closed-form density of the steady swirl: d p/dr = rho v^2 / r, [p] = 0."""
    p = cfg.initial.params
    rho_b = float(p.get("rho_b", 1.0))
    V = np.where(np.asarray(side) < 0, float(p.get("V_minus", 0.5)), float(p.get("V_plus", 1.0)))
    g = cfg.gamma
    return np.power(rho_b ** (g - 1) + (g - 1) * V * V * np.log(np.asarray(r) / cfg.b), 1 / (g - 1))


# -------------------------------------------------- Lagrangian resampling

@dataclass
class LagrangianOuter:
    """Outer profile U^{I,0}(t, x) and r^{I,0}(t, x) on fixed mass grids per side."""

    cfg: ScenarioConfig
    t: np.ndarray
    x: tuple
    tau: tuple
    u: tuple
    v: tuple
    r: tuple
    h: float
    front: FrontState
    diagnostics: dict = field(default_factory=dict)

    @property
    def x_max(self):
        return float(self.x[PLUS][-1])

    def _fields(self):
        return (self.tau, self.u, self.v, self.r)

    def level(self, t):
        """Fields interpolated in time: list over sides of arrays (4, n_s)."""
        out = []
        for s in (0, 1):
            stack = np.stack([f[s] for f in self._fields()], axis=1)
            out.append(interp_in_time(self.t, stack, t))
        return out

    def at(self, t, x, side=None):
        """(tau, u, v, r) at time t and mass points x; side -1/+1 decides at x = h."""
        x = np.asarray(x, dtype=float)
        lev = self.level(t)
        if side is None:
            sd = np.where(x < self.h, -1, 1)
        else:
            sd = np.broadcast_to(np.asarray(side), x.shape)
        out = np.empty((4,) + x.shape)
        for s, sign in ((0, -1), (1, 1)):
            mask = sd == sign
            if not np.any(mask):
                continue
            for c in range(4):
                ip = ShapeCubic(self.x[s], lev[s][c])
                out[c][mask] = ip(x[mask])
        return out

    def x_derivatives(self, t):
        """d/dx of (tau, u, v, r) at time t on each side's grid."""
        lev = self.level(t)
        return [derivative(self.x[s], lev[s]) for s in (0, 1)]

    def wall_trace(self):
        t = self.t
        du = np.array([derivative(self.x[0][:6], self.u[0][n, :6])[0] for n in range(t.size)])
        return {"t": t, "tau": self.tau[0][:, 0].copy(), "v": self.v[0][:, 0].copy(),
                "u_x": du}

    def front_trace(self):
        t = self.t
        dv_m = np.array([derivative(self.x[0][-6:], self.v[0][n, -6:])[-1] for n in range(t.size)])
        dv_p = np.array([derivative(self.x[1][:6], self.v[1][n, :6])[0] for n in range(t.size)])
        du_m = np.array([derivative(self.x[0][-6:], self.u[0][n, -6:])[-1] for n in range(t.size)])
        du_p = np.array([derivative(self.x[1][:6], self.u[1][n, :6])[0] for n in range(t.size)])
        return {"t": t, "tau": self.tau[0][:, -1].copy(), "u": self.front.phi_prime.copy(),
                "u_t": self.front.acceleration(), "phi": self.front.phi.copy(),
                "v_minus": self.v[0][:, -1].copy(), "v_plus": self.v[1][:, 0].copy(),
                "v_x_minus": dv_m, "v_x_plus": dv_p, "u_x_minus": du_m, "u_x_plus": du_p}


def to_lagrangian(sol: EulerSolution, cmap: MassCoordinateMap | None = None, cells=None):
    """Resample the Euler solution on fixed mass grids by following particles.

    Particle paths ``dr/dt = u`` start at r0(x) and are integrated with the
    trapezoid rule over the Euler time levels.  The front particle x = h
    follows phi(t) exactly and the wall particle stays at r = a.
    """
    cfg = sol.cfg
    a, b = cfg.a, cfg.b
    cmap = cmap or MassCoordinateMap(cfg)
    h = cmap.h
    cells = cells or cfg.grid.lagrangian_cells
    x_far = float(cmap.eta(np.array(cfg.grid.r_max)))
    nm = max(4, int(round(cells * h / x_far)))
    npl = max(4, cells - nm)
    xs = (np.linspace(0.0, h, nm + 1), np.linspace(h, x_far, npl + 1))
    r_init = [cmap.r0_of_x(xs[s]) for s in (0, 1)]
    r_init[0][0], r_init[0][-1], r_init[1][0] = a, b, b
    r_init[1][-1] = cfg.grid.r_max
    nt = sol.t.size
    fields = {k: ([], []) for k in ("tau", "u", "v", "r")}
    outside = 0

    def sample(n, s, r):
        nonlocal outside
        phi = sol.front.phi[n]
        rt = a + (r - a) * (b - a) / (phi - a)
        lo, hi = sol.rt[s][0], sol.rt[s][-1]
        beyond = rt > hi + 1e-12
        rt = np.clip(rt, lo, hi)
        vals = np.stack([ShapeCubic(sol.rt[s], sol.U[s][n, c])(rt) for c in range(3)])
        if np.any(beyond):
            outside += int(np.sum(beyond))
            vals[:, beyond] = _background(cfg, r[beyond], 1 if s else -1)
        return vals

    pos = [r_init[0].copy(), r_init[1].copy()]
    vals = [sample(0, s, pos[s]) for s in (0, 1)]
    for s in (0, 1):
        for k, arr in (("tau", 1 / vals[s][0]), ("u", vals[s][1]), ("v", vals[s][2]), ("r", pos[s])):
            fields[k][s].append(arr.copy())
    for n in range(nt - 1):
        dt = sol.t[n + 1] - sol.t[n]
        for s in (0, 1):
            u_old = vals[s][1]
            new = pos[s] + dt * u_old
            for _ in range(4):
                u_new = sample(n + 1, s, new)[1]
                new = pos[s] + 0.5 * dt * (u_old + u_new)
            new[0] = a if s == 0 else sol.front.phi[n + 1]
            if s == 0:
                new[-1] = sol.front.phi[n + 1]
            pos[s] = new
            vals[s] = sample(n + 1, s, new)
            for k, arr in (("tau", 1 / vals[s][0]), ("u", vals[s][1]), ("v", vals[s][2]), ("r", pos[s])):
                fields[k][s].append(arr.copy())
    arr = {k: (np.array(v[0]), np.array(v[1])) for k, v in fields.items()}
    out = LagrangianOuter(cfg, sol.t.copy(), xs, arr["tau"], arr["u"], arr["v"], arr["r"], h,
                          sol.front)
    out.diagnostics = {"outside_samples": outside,
                       "geometric_defect": geometric_defect(out),
                       "front_image_error": float(np.max(np.abs(out.r[0][:, -1] - sol.front.phi)))}
    return out


def geometric_defect(outer: LagrangianOuter):
    """max |d/dx (r^2)/2 - tau| over all stored levels and both sides."""
    worst = 0.0
    for s in (0, 1):
        half_sq = 0.5 * outer.r[s] ** 2
        d = derivative(outer.x[s], half_sq)
        worst = max(worst, float(np.max(np.abs(d - outer.tau[s]))))
    return worst


# ------------------------------------------------- first outer correction

@dataclass
class OuterCorrection:
    """U^{I,1} = (tau, u, v) and r^{I,1} on the outer profile's grids."""

    t: np.ndarray
    x: tuple
    tau: tuple
    u: tuple
    v: tuple
    r: tuple
    h: float
    jump: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def _fields(self):
        return (self.tau, self.u, self.v, self.r)

    def level(self, t):
        out = []
        for s in (0, 1):
            stack = np.stack([f[s] for f in self._fields()], axis=1)
            out.append(interp_in_time(self.t, stack, t))
        return out

    def at(self, t, x, side=None):
        x = np.asarray(x, dtype=float)
        lev = self.level(t)
        sd = np.where(x < self.h, -1, 1) if side is None else np.broadcast_to(np.asarray(side), x.shape)
        out = np.empty((4,) + x.shape)
        for s, sign in ((0, -1), (1, 1)):
            mask = sd == sign
            if np.any(mask):
                for c in range(4):
                    out[c][mask] = ShapeCubic(self.x[s], lev[s][c])(x[mask])
        return out

    def is_zero(self):
        return all(np.all(f[s] == 0) for f in self._fields() for s in (0, 1))

    @classmethod
    def zeros_like(cls, outer: LagrangianOuter):
        z = tuple(np.zeros_like(outer.tau[s]) for s in (0, 1))
        return cls(outer.t, outer.x, z, z, z, z, outer.h, np.zeros_like(outer.t))


def linearized_sources(gamma, base, dbase, pert):
    """Right-hand sides of the linearised inviscid Lagrangian system.

    ``base`` = (tau, u, v, r) of the outer profile, ``dbase`` = (tau_x, u_x),
    ``pert`` = (tau1, u1, v1, r1).  Returns (S_tau, S_u, S_v, S_r) such that
    W_t + A W_x = (S_tau, S_u) for W = (tau1, u1), and v1_t = S_v, r1_t = S_r.
    """
    tau, u, v, r = base
    tau_x, u_x = dbase
    t1, u1, v1, r1 = pert
    kap = tau ** (-(gamma + 1))
    s_tau = r1 * u_x + (t1 * u + tau * u1) / r - tau * u * r1 / r**2
    s_u = (r1 * kap - (gamma + 1) * r * tau ** (-(gamma + 2)) * t1) * tau_x \
        + 2 * v * v1 / r - v * v * r1 / r**2
    s_v = -(u1 * v + u * v1) / r + u * v * r1 / r**2
    return s_tau, s_u, s_v, u1


def solve_outer_correction(outer: LagrangianOuter, jump=None, tol=1e-10, max_iter=50):
    """First outer correction: linearised Euler about the outer profile.

    Zero initial data, u1(t, 0) = 0, continuity of u1 at the front and
    tau1(h-) = tau1(h+) + jump(t).  Solved on the outer profile's grid and
    time levels with characteristic relations along x -+ c_L t, c_L = r
    tau^{-(gamma+1)/2}, and Picard iteration for the lower-order coupling.
    """
    cfg = outer.cfg
    g = cfg.gamma
    jump = jump if jump is not None else cfg.phi1
    jv = np.asarray(jump(outer.t), dtype=float) + 0 * outer.t
    if np.all(jv == 0):
        corr = OuterCorrection.zeros_like(outer)
        corr.diagnostics = {"picard_max": 0, "trivial": True}
        return corr
    xs = outer.x
    nt = outer.t.size
    base = [np.stack([outer.tau[s], outer.u[s], outer.v[s], outer.r[s]], axis=1) for s in (0, 1)]
    dbase = [np.stack([derivative(xs[s], outer.tau[s]), derivative(xs[s], outer.u[s])], axis=1)
             for s in (0, 1)]
    cur = [np.zeros((4, xs[s].size)) for s in (0, 1)]
    hist = [[cur[0].copy()], [cur[1].copy()]]
    picard = []

    def speed(n, s):
        tau, r = base[s][n, 0], base[s][n, 3]
        return r * tau ** (-0.5 * (g + 1))

    for n in range(nt - 1):
        dt = outer.t[n + 1] - outer.t[n]
        t1 = outer.t[n + 1]
        ip_w = [[ShapeCubic(xs[s], cur[s][c]) for c in range(4)] for s in (0, 1)]
        ip_b = [[ShapeCubic(xs[s], base[s][n, c]) for c in range(4)] for s in (0, 1)]
        ip_d = [[ShapeCubic(xs[s], dbase[s][n, c]) for c in range(2)] for s in (0, 1)]
        ip_c = [ShapeCubic(xs[s], speed(n, s)) for s in (0, 1)]
        feet = {}
        for s in (0, 1):
            cq = speed(n + 1, s)
            for k, sign in ((0, -1.0), (2, 1.0)):
                foot = xs[s] - dt * sign * cq
                for _ in range(3):
                    foot = xs[s] - 0.5 * dt * sign * (ip_c[s](foot, extrapolate=True) + cq)
                foot = np.clip(foot, xs[s][0], xs[s][-1])
                bP = np.stack([ip_b[s][c](foot) for c in range(4)])
                dP = np.stack([ip_d[s][c](foot) for c in range(2)])
                wP = np.stack([ip_w[s][c](foot) for c in range(4)])
                feet[(s, k)] = (bP, dP, wP)
        guess = [c.copy() for c in cur]
        for it in range(max_iter):
            new = [np.zeros_like(guess[s]) for s in (0, 1)]
            rel = {}
            for s in (0, 1):
                bQ, dQ = base[s][n + 1], dbase[s][n + 1]
                SQ = linearized_sources(g, bQ, dQ, guess[s])
                sqk = np.sqrt(bQ[0] ** (-(g + 1)))
                for k, sgn in ((0, 1.0), (2, -1.0)):
                    bP, dP, wP = feet[(s, k)]
                    SP = linearized_sources(g, bP, dP, wP)
                    spk = np.sqrt(bP[0] ** (-(g + 1)))
                    lt = 0.5 * sgn * (spk + sqk)
                    rhs = lt * wP[0] + wP[1] + 0.5 * dt * (sgn * spk * SP[0] + SP[1] + sgn * sqk * SQ[0] + SQ[1])
                    rel[(s, k)] = (lt, rhs)
                S0 = linearized_sources(g, base[s][n], dbase[s][n], cur[s])
                new[s][2] = cur[s][2] + 0.5 * dt * (S0[2] + SQ[2])
                (l1, r1), (l3, r3) = rel[(s, 0)], rel[(s, 2)]
                # l1 tau + u = r1, l3 tau + u = r3
                new[s][0] = (r1 - r3) / (l1 - l3)
                new[s][1] = r1 - l1 * new[s][0]
            # wall
            l1, r1 = (q[0] for q in rel[(MINUS, 0)])
            new[MINUS][1, 0] = 0.0
            new[MINUS][0, 0] = r1 / l1
            # front: tau(h-) = tau(h+) + jump, common u
            l3, r3 = (q[-1] for q in rel[(MINUS, 2)])
            l1, r1 = (q[0] for q in rel[(PLUS, 0)])
            j = jv[n + 1]
            tau_p = (r1 - r3 + l3 * j) / (l1 - l3)
            u_f = r1 - l1 * tau_p
            new[PLUS][0, 0], new[MINUS][0, -1] = tau_p, tau_p + j
            new[PLUS][1, 0] = new[MINUS][1, -1] = u_f
            new[PLUS][:3, -1] = 0.0
            for s in (0, 1):
                new[s][3] = cur[s][3] + 0.5 * dt * (cur[s][1] + new[s][1])
            diff = max(np.max(np.abs(new[s] - guess[s])) for s in (0, 1))
            guess = new
            if diff < tol:
                break
        else:
            raise ConvergenceError(f"outer-correction Picard iteration stalled at t={t1:.4g}")
        picard.append(it + 1)
        cur = guess
        hist[0].append(cur[0].copy())
        hist[1].append(cur[1].copy())
    H = [np.array(hist[s]) for s in (0, 1)]
    parts = [tuple(H[s][:, c] for s in (0, 1)) for c in range(4)]
    corr = OuterCorrection(outer.t, xs, parts[0], parts[1], parts[2], parts[3], outer.h, jv)
    corr.diagnostics = {"picard_max": int(max(picard) if picard else 0), "trivial": False}
    return corr


def correction_residual(outer: LagrangianOuter, corr: OuterCorrection):
    """Finite-difference residual of the linearised system on interior nodes.

    Central differences in t and x; returns the max-norm over interior
    space-time points of (tau, u, v, r) equation residuals.
    """
    g = outer.cfg.gamma
    worst = 0.0
    t = outer.t
    for s in (0, 1):
        x = outer.x[s]
        W = np.stack([corr.tau[s], corr.u[s], corr.v[s], corr.r[s]], axis=1)
        Bs = np.stack([outer.tau[s], outer.u[s], outer.v[s], outer.r[s]], axis=1)
        for n in range(1, t.size - 1):
            dWdt = (W[n + 1] - W[n - 1]) / (t[n + 1] - t[n - 1])
            dW = derivative(x, W[n], points=3)
            dB = derivative(x, Bs[n][:2], points=3)
            S = linearized_sources(g, Bs[n], dB, W[n])
            tau, r = Bs[n][0], Bs[n][3]
            kap = tau ** (-(g + 1))
            res_tau = dWdt[0] - r * dW[1] - S[0]
            res_u = dWdt[1] - r * kap * dW[0] - S[1]
            res_v = dWdt[2] - S[2]
            res_r = dWdt[3] - S[3]
            inner = slice(2, -2)
            worst = max(worst, float(np.max(np.abs(np.stack([res_tau, res_u, res_v, res_r])[:, inner]))))
    return worst
