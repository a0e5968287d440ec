"""Boundary-layer and vortex-layer profiles at orders 0 and 1.

Profiles live on stretched coordinates: xi = x/sqrt(eps) on [0, L] at the
wall and zeta = (x - h)/sqrt(eps) on [-L, L] at the front.  Vortex-layer
quantities are solved in the composed variable (layer part plus the Taylor
polynomial of the outer flow at x = h), which is continuous with continuous
flux at zeta = 0.  All parabolic problems share one implicit solver
(second-order backward differences, backward Euler on the first step).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SolverError
from .numerics import (ShapeCubic, derivative, interp_in_time, solve_tridiagonal,
                       cumulative_trapezoid_from_right, trapezoid_weights)
from .scenario import ScenarioConfig, sheet_profile

# Sign of the cross-diffusion term  mu (r/tau)^2 d_zeta v d_zeta tau  in the
# order-one vortex-layer source.  Linearising the Lagrangian viscous operator
# gives a minus sign, matching the wall-layer source.
CROSS_TERM_SIGN = -1.0


# -------------------------------------------------------------- containers

@dataclass
class OuterTrace:
    """Time series of outer-flow quantities restricted to x = 0 or x = h."""

    kind: str
    t: np.ndarray
    series: dict

    def __call__(self, name, t):
        data = self.series.get(name)
        if data is None:
            return 0.0 * np.asarray(t, dtype=float)
        data = np.asarray(data, dtype=float)
        if data.ndim == 0 or data.size == 1:
            return float(np.ravel(data)[0]) + 0.0 * np.asarray(t, dtype=float)
        if np.ndim(t) == 0:
            return float(interp_in_time(self.t, data, float(t)))
        return np.array([interp_in_time(self.t, data, float(s)) for s in np.ravel(t)]).reshape(np.shape(t))

    def sample(self, name, times):
        """Values at many times at once (4-point Lagrange per time)."""
        return np.asarray(self(name, np.asarray(times, dtype=float)), dtype=float)

    @classmethod
    def constant(cls, kind, T, **values):
        t = np.array([0.0, T])
        return cls(kind, t, {k: np.full(2, float(v)) for k, v in values.items()})


def wall_trace(outer, corr=None):
    """Outer traces at the wall; derivative traces from the wall identities."""
    cfg = outer.cfg
    g, a = cfg.gamma, cfg.a
    w = outer.wall_trace()
    tau, v = w["tau"], w["v"]
    series = {
        "tau": tau, "v": v, "u_x": w["u_x"],
        "tau_x": -tau ** (g + 1) * v * v / a**2,
        "r_x": tau / a,
        "tau0": np.full_like(tau, tau[0]),
    }
    if corr is not None and not corr.is_zero():
        series["tau1"] = corr.tau[0][:, 0].copy()
        series["v1"] = corr.v[0][:, 0].copy()
    return OuterTrace("wall", outer.t.copy(), series)


def front_trace(outer, corr=None):
    """Outer traces at the front x = h from both sides."""
    cfg = outer.cfg
    g = cfg.gamma
    f = outer.front_trace()
    tau, phi, acc = f["tau"], f["phi"], f["u_t"]
    series = {
        "tau": tau, "u": f["u"], "u_t": acc, "phi": phi,
        "v_minus": f["v_minus"], "v_plus": f["v_plus"],
        "v_x_minus": f["v_x_minus"], "v_x_plus": f["v_x_plus"],
        "u_x_minus": f["u_x_minus"], "u_x_plus": f["u_x_plus"],
        "tau_x_minus": tau ** (g + 1) * (phi * acc - f["v_minus"] ** 2) / phi**2,
        "tau_x_plus": tau ** (g + 1) * (phi * acc - f["v_plus"] ** 2) / phi**2,
        "r_x": tau / phi,
    }
    if corr is not None and not corr.is_zero():
        series["tau1_minus"] = corr.tau[0][:, -1].copy()
        series["tau1_plus"] = corr.tau[1][:, 0].copy()
        series["v1_minus"] = corr.v[0][:, -1].copy()
        series["v1_plus"] = corr.v[1][:, 0].copy()
        series["u1"] = corr.u[1][:, 0].copy()
        series["r1"] = corr.r[1][:, 0].copy()
    return OuterTrace("front", outer.t.copy(), series)


@dataclass
class LayerField:
    """A profile on a stretched coordinate, stored at every layer time level.

    ``values`` holds what the solver integrates (the composed variable for
    vortex-layer quantities); ``taylor`` holds the outer Taylor part so that
    ``values - taylor`` is the decaying layer part.  For vortex kind the grid
    contains zeta = 0 and the layer part is two-sided there.
    """

    kind: str
    name: str
    coord: np.ndarray
    t: np.ndarray
    values: np.ndarray
    taylor: np.ndarray | None = None
    farfield: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    taylor_left0: np.ndarray | None = None   # left limit of the Taylor part at zeta = 0

    @property
    def stretch(self):
        return "xi = x/sqrt(eps)" if self.kind == "boundary" else "zeta = (x - h)/sqrt(eps)"

    @property
    def length(self):
        return float(self.coord[-1])

    def layer(self):
        return self.values if self.taylor is None else self.values - self.taylor

    def _center(self):
        return int(np.argmin(np.abs(self.coord)))

    def layer_sides(self):
        """Layer part split at zeta = 0 into closed halves with one-sided limits."""
        data = self.layer()
        (zm, left), (zp, right) = self.one_sided(data)
        if self.taylor_left0 is not None:
            left = left.copy()
            left[..., -1] = self.values[..., self._center()] - self.taylor_left0
        return (zm, left), (zp, right)

    def evaluate(self, t, s, side=None, part="layer"):
        """Profile at time t and stretched points s; edge values held beyond L.

        For vortex kind, ``side`` (-1/+1) selects the one-sided branch at
        s = 0; by default it follows the sign of s.
        """
        s = np.asarray(s, dtype=float)
        if self.kind == "boundary":
            data = self.layer() if part == "layer" else self.values
            prof = interp_in_time(self.t, data, t)
            return ShapeCubic(self.coord, prof)(np.clip(s, self.coord[0], self.coord[-1]))
        if part == "layer":
            (zm, dm), (zp, dp) = self.layer_sides()
        else:
            (zm, dm), (zp, dp) = self.one_sided(self.values)
        sd = np.where(s < 0, -1, 1) if side is None else np.broadcast_to(np.asarray(side), s.shape)
        out = np.empty(s.shape)
        lo = sd < 0
        if np.any(lo):
            out[lo] = ShapeCubic(zm, interp_in_time(self.t, dm, t))(np.clip(s[lo], zm[0], 0.0))
        if np.any(~lo):
            out[~lo] = ShapeCubic(zp, interp_in_time(self.t, dp, t))(np.clip(s[~lo], 0.0, zp[-1]))
        return out

    def one_sided(self, data):
        """Split a (nt, n) array at zeta = 0 into its two closed halves."""
        c = self._center()
        return (self.coord[:c + 1], data[..., :c + 1]), (self.coord[c:], data[..., c:])

    @classmethod
    def zeros(cls, kind, name, coord, t):
        return cls(kind, name, coord, t, np.zeros((t.size, coord.size)))


# ---------------------------------------------------------- implicit solver

def solve_heat(grid, times, diffusivity, reaction=None, source=None,
               left=None, right=None, initial=None):
    """Solve u_t = k(t) u_ss - c(t, s) u + f(t, s) with Dirichlet ends.

    ``diffusivity(t)`` must be positive; ``reaction`` and ``source`` are
    callables returning scalars or arrays on the grid, or precomputed arrays
    of shape (nt, n) indexed by time level.  Second-order backward
    differences in time (backward Euler for the first step), three-point
    differences in space.  Returns an array of shape (nt, n).
    """
    s = np.asarray(grid, dtype=float)
    n = s.size
    nt = len(times)
    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    w_lo = 2.0 / (hm * (hm + hp))
    w_mid = -2.0 / (hm * hp)
    w_hi = 2.0 / (hp * (hm + hp))

    def level(spec, j, t):
        if spec is None:
            return np.zeros(n)
        if callable(spec):
            return np.broadcast_to(np.asarray(spec(t), dtype=float), (n,)).astype(float)
        return np.asarray(spec[j], dtype=float)

    def edge(spec, t):
        return 0.0 if spec is None else float(spec(t))

    out = np.zeros((nt, n))
    out[0] = 0.0 if initial is None else np.asarray(initial, dtype=float)
    for j in range(1, nt):
        t = times[j]
        dt = times[j] - times[j - 1]
        k = float(diffusivity(t))
        if not k > 0:
            raise SolverError(f"non-positive layer diffusivity {k:.3g} at t={t:.4g}")
        c = level(reaction, j, t)
        f = level(source, j, t)
        if j == 1:
            a0, rhs_hist = 1.0 / dt, out[0] / dt
        else:
            a0 = 1.5 / dt
            rhs_hist = (2.0 * out[j - 1] - 0.5 * out[j - 2]) / dt
        lower = np.zeros(n)
        diag = np.ones(n)
        upper = np.zeros(n)
        rhs = np.empty(n)
        lower[1:-1] = -k * w_lo
        diag[1:-1] = a0 - k * w_mid + c[1:-1]
        upper[1:-1] = -k * w_hi
        rhs[1:-1] = rhs_hist[1:-1] + f[1:-1]
        rhs[0] = edge(left, t)
        rhs[-1] = edge(right, t)
        out[j] = solve_tridiagonal(lower, diag, upper, rhs)
    return out


def _second_derivative(grid, y):
    """Second derivative along the last axis; ends by one-sided 4-point rule."""
    d = derivative(grid, y, points=5)
    return derivative(grid, d, points=5)


def _layer_setup(cfg, kind, length=None, cells=None, steps=None, T=None):
    g = cfg.grid
    L = float(length or g.layer_length)
    n = int(cells or g.layer_cells)
    if kind == "vortex":
        n += n % 2
        coord = np.linspace(-L, L, n + 1)
    else:
        coord = np.linspace(0.0, L, n + 1)
    T = cfg.T if T is None else T
    times = np.linspace(0.0, T, int(steps or g.layer_steps) + 1)
    return coord, times


# ------------------------------------------------------------- order zero

def solve_boundary_layer_v0(trace: OuterTrace, wall, cfg: ScenarioConfig, length=None,
                            cells=None, steps=None, T=None, check=True, tol=1e-8):
    """Leading wall layer of the angular velocity.

    v_t = (a^2 mu / tau_bar(t)) v_xixi on [0, L], v(t, 0) = v0(t) - v_bar(t),
    v(t, L) = 0, zero initial data.
    """
    coord, times = _layer_setup(cfg, "boundary", length, cells, steps, T)
    a, mu = cfg.a, cfg.mu
    tau_bar = trace.sample("tau", times)
    if np.any(tau_bar <= 0):
        raise SolverError("non-positive specific volume at the wall")
    v_bar = trace.sample("v", times)
    datum = np.asarray(wall(times), dtype=float) + 0 * times - v_bar
    if check and abs(datum[0]) > tol:
        raise ConfigError(f"wall data incompatible with the outer flow: v0(0) - v(0,0) = {datum[0]:.3e}")
    k = dict(zip(times, a * a * mu / tau_bar))
    lookup = dict(zip(times, datum))
    vals = solve_heat(coord, times, lambda t: k[t], left=lambda t: lookup[t], right=None)
    fld = LayerField("boundary", "v_B0", coord, times, vals,
                     farfield={"xi0": datum, "xiL": vals[:, -1].copy()})
    fld.diagnostics = {"edge_max": float(np.max(np.abs(vals[:, -1]))),
                       "max_abs": float(np.max(np.abs(vals))),
                       "datum_max": float(np.max(np.abs(datum)))}
    return fld


def solve_vortex_layer_v0(trace: OuterTrace, cfg: ScenarioConfig, length=None, cells=None,
                          steps=None, T=None, profile=None, far_tol=1e-6):
    """Leading vortex layer, in the composed variable v0^{s,0}.

    Solves v_t - mu (phi^2/tau_bar) v_zetazeta + (u(t,h)/phi) v = 0 on the
    whole line through the homogenised unknown w = v - f1, where
    f1(t, zeta) = v(h-)(t) + (v(h+)(t) - v(h-)(t)) S(zeta) carries the far
    field exactly and S is the smoothing shape of the initial sheet.
    ``profile(zeta)`` overrides the initial data g0 (it must still match the
    traces for |zeta| > 1).
    """
    coord, times = _layer_setup(cfg, "vortex", length, cells, steps, T)
    mu = cfg.mu
    tau = trace.sample("tau", times)
    phi = trace.sample("phi", times)
    dphi = trace.sample("u", times)
    vm = trace.sample("v_minus", times)
    vp = trace.sample("v_plus", times)
    if np.any(tau <= 0):
        raise SolverError("non-positive specific volume at the front")
    shape = sheet_profile(cfg, coord, 0.0, 1.0)
    f1 = vm[:, None] + (vp - vm)[:, None] * shape[None, :]
    if profile is not None:
        g0 = np.asarray(profile(coord), dtype=float)
        if max(abs(g0[0] - vm[0]), abs(g0[-1] - vp[0])) > far_tol:
            raise SolverError("initial vortex-layer profile does not match the outer traces")
        f1[0] = g0
        # the initial deviation from the smoothing shape is carried by w
        w0 = g0 - (vm[0] + (vp[0] - vm[0]) * shape)
    else:
        w0 = np.zeros(coord.size)
    w0[0] = w0[-1] = 0.0
    # f1 is advected by the far-field ODE; its residual becomes a source
    f1_t = np.gradient(f1, times, axis=0, edge_order=2) if times.size > 2 else np.zeros_like(f1)
    ratio = dphi / phi
    resid = -(f1_t + ratio[:, None] * f1)
    k = mu * phi**2 / tau
    kmap = dict(zip(times, k))
    lap_f1 = np.zeros_like(f1)
    lap_f1[:, 1:-1] = _uniform_laplacian(coord, f1)
    src = k[:, None] * lap_f1 + resid
    w = solve_heat(coord, times, lambda t: kmap[t], reaction=np.repeat(ratio[:, None], coord.size, 1),
                   source=src, initial=w0)
    vals = w + f1
    if profile is not None:
        vals[0] = f1[0]
    taylor = np.where(coord[None, :] < 0, vm[:, None], vp[:, None])
    mismatch = max(float(np.max(np.abs(vals[:, 0] - vm))), float(np.max(np.abs(vals[:, -1] - vp))))
    if mismatch > far_tol:
        raise SolverError(f"vortex-layer far field departs from the outer traces by {mismatch:.2e}")
    fld = LayerField("vortex", "v_s0", coord, times, vals, taylor,
                     farfield={"minus": vm, "plus": vp}, taylor_left0=vm.copy())
    fld.diagnostics = {"farfield_mismatch": mismatch,
                       "aux_residual_max": float(np.max(np.abs(resid))),
                       "layer_jump_max": float(np.max(np.abs(vp - vm)))}
    return fld


def _uniform_laplacian(coord, y):
    hm = coord[1:-1] - coord[:-2]
    hp = coord[2:] - coord[1:-1]
    return 2.0 * ((y[..., 2:] - y[..., 1:-1]) / hp - (y[..., 1:-1] - y[..., :-2]) / hm) / (hp + hm)


# ------------------------------------------------------------ tau correctors

def compute_tau_B1(v_B0: LayerField, trace: OuterTrace, cfg: ScenarioConfig):
    """tau^{B,1} from d_xi tau = -(tau_bar^{g+1}/a^2)(v + 2 v_bar) v, zero at xi = L."""
    g, a = cfg.gamma, cfg.a
    times = v_B0.t
    tau = trace.sample("tau", times)[:, None]
    vbar = trace.sample("v", times)[:, None]
    v = v_B0.values
    rhs = -(tau ** (g + 1) / a**2) * (v + 2 * vbar) * v
    vals = -cumulative_trapezoid_from_right(rhs, v_B0.coord)
    fld = LayerField("boundary", "tau_B1", v_B0.coord, times, vals,
                     farfield={"xi0": vals[:, 0].copy(), "xiL": vals[:, -1].copy()})
    fld.diagnostics = {"rhs": rhs}
    return fld


def compute_tau_s1(v_s0: LayerField, trace: OuterTrace, cfg: ScenarioConfig):
    """Composed tau_0^{s,1} from the radial momentum balance across the layer.

    d_zeta tau_0 = (tau_bar^{g+1}/phi^2)(phi u_t(t, h) - v_0^2); the additive
    constant makes the layer part vanish at zeta = +L.  The far-field value
    of the layer part at zeta = -L is recorded as ``implied_jump``: it is the
    front jump of the outer correction that would make the layer part decay
    on both sides.
    """
    g = cfg.gamma
    coord, times = v_s0.coord, v_s0.t
    tau = trace.sample("tau", times)[:, None]
    phi = trace.sample("phi", times)[:, None]
    acc = trace.sample("u_t", times)[:, None]
    v = v_s0.values
    rhs = tau ** (g + 1) / phi**2 * (phi * acc - v * v)
    tx_m = trace.sample("tau_x_minus", times)[:, None]
    tx_p = trace.sample("tau_x_plus", times)[:, None]
    t1_m = trace.sample("tau1_minus", times)[:, None]
    t1_p = trace.sample("tau1_plus", times)[:, None]
    L = coord[-1]
    anchor = t1_p + L * tx_p
    vals = anchor - cumulative_trapezoid_from_right(rhs, coord)
    neg = coord[None, :] < 0
    taylor = np.where(neg, t1_m + coord[None, :] * tx_m, t1_p + coord[None, :] * tx_p)
    fld = LayerField("vortex", "tau_s1", coord, times, vals, np.broadcast_to(taylor, vals.shape).copy(),
                     taylor_left0=t1_m[:, 0] + 0.0 * times)
    layer = fld.layer()
    fld.farfield = {"implied_jump": layer[:, 0].copy(), "plus_edge": layer[:, -1].copy()}
    fld.diagnostics = {"rhs": rhs,
                       "layer_jump_at_front": (t1_m - t1_p)[:, 0].copy(),
                       "implied_jump_max": float(np.max(np.abs(layer[:, 0])))}
    return fld


# ---------------------------------------------------------------- order one

def boundary_v1_source(v_B0: LayerField, tau_B1: LayerField, trace: OuterTrace, cfg: ScenarioConfig):
    """Source of the order-one wall-layer equation, shape (nt, n)."""
    a, mu = cfg.a, cfg.mu
    xi, times = v_B0.coord, v_B0.t
    tau = trace.sample("tau", times)[:, None]
    tau_x = trace.sample("tau_x", times)[:, None]
    tau1 = trace.sample("tau1", times)[:, None]
    u_x = trace.sample("u_x", times)[:, None]
    tau_init = float(trace.sample("tau0", times[:1])[0]) if "tau0" in trace.series else float(tau[0, 0])
    v = v_B0.values
    dv = derivative(xi, v)
    d2v = _second_derivative(xi, v)
    tau0_B1 = tau_B1.values + tau1 + xi[None, :] * tau_x
    dtau0 = derivative(xi, tau0_B1)
    r0_B1 = xi[None, :] * tau_init / a
    return (-a * a * mu / tau**2 * dv * dtau0
            + mu * (2 * a * r0_B1 / tau - a * a * tau0_B1 / tau**2) * d2v
            + 2 * mu * dv
            - (xi[None, :] / a) * u_x * v)


def solve_boundary_layer_v1(v_B0: LayerField, tau_B1: LayerField, trace: OuterTrace,
                            cfg: ScenarioConfig, forcing=None, datum=None):
    """Order-one wall layer: v_t - (a^2 mu/tau_bar) v_xixi = f1, v(t,0) = -v1_bar(t).

    ``forcing`` (array (nt, n)) and ``datum`` (callable) override the source
    and the wall value, e.g. for manufactured solutions.
    """
    a, mu = cfg.a, cfg.mu
    xi, times = v_B0.coord, v_B0.t
    tau = trace.sample("tau", times)
    src = boundary_v1_source(v_B0, tau_B1, trace, cfg) if forcing is None else np.asarray(forcing)
    if datum is None:
        v1 = -trace.sample("v1", times)
        lookup = dict(zip(times, v1))
        datum = lambda t: lookup[t]
    k = dict(zip(times, a * a * mu / tau))
    vals = solve_heat(xi, times, lambda t: k[t], source=src, left=datum)
    fld = LayerField("boundary", "v_B1", xi, times, vals,
                     farfield={"xi0": vals[:, 0].copy(), "xiL": vals[:, -1].copy()})
    fld.diagnostics = {"source_max": float(np.max(np.abs(src)))}
    return fld


def vortex_v1_source(v_s0: LayerField, tau_s1: LayerField, trace: OuterTrace, cfg: ScenarioConfig):
    """Right-hand side of the composed order-one vortex-layer equation.

    Combines the viscous source f3 with the lower-order coupling terms
    -(1/phi) v0 u0^{s,1} + (r0^{s,1}/phi^2) v0 u0^{s,0}, shape (nt, n).
    """
    mu = cfg.mu
    zeta, times = v_s0.coord, v_s0.t
    tau = trace.sample("tau", times)[:, None]
    phi = trace.sample("phi", times)[:, None]
    dphi = trace.sample("u", times)[:, None]
    u1 = trace.sample("u1", times)[:, None]
    r1 = trace.sample("r1", times)[:, None]
    ux = np.where(zeta[None, :] < 0, trace.sample("u_x_minus", times)[:, None],
                  trace.sample("u_x_plus", times)[:, None])
    v0 = v_s0.values
    dv = _two_sided(derivative, v_s0, v0)
    d2v = _two_sided(_second_derivative, v_s0, v0)
    t1 = tau_s1.values
    dt1 = _two_sided(derivative, v_s0, t1)
    r0_s1 = zeta[None, :] * tau / phi + r1
    u0_s1 = u1 + zeta[None, :] * ux
    ratio = (phi / tau) ** 2
    f3 = (mu * (2 * phi * r0_s1 / tau - ratio * t1) * d2v
          + CROSS_TERM_SIGN * mu * ratio * dv * dt1
          + 2 * mu * dv)
    return f3 - v0 * u0_s1 / phi + r0_s1 * v0 * dphi / phi**2


def _two_sided(op, fld, data):
    """Apply a derivative operator separately on zeta <= 0 and zeta >= 0."""
    (zm, dm), (zp, dp) = fld.one_sided(data)
    left, right = op(zm, dm), op(zp, dp)
    out = np.empty_like(data)
    c = fld._center()
    out[..., :c] = left[..., :c]
    out[..., c + 1:] = right[..., 1:]
    out[..., c] = 0.5 * (left[..., -1] + right[..., 0])
    return out


def solve_vortex_layer_v1(v_s0: LayerField, tau_s1: LayerField, trace: OuterTrace,
                          cfg: ScenarioConfig, forcing=None, edges=None, initial=None):
    """Order-one vortex layer in the composed variable v0^{s,1}.

    Far-field data are the outer Taylor values v1(h+-) + zeta v_x(h+-) at
    zeta = +-L and the initial data are zeta v_x(0, h+-); the composed
    variable is continuous at zeta = 0, which encodes the jump condition
    [v^{s,1}] = -[v^{I,1}].  ``forcing``, ``edges = (left, right)`` and
    ``initial`` override the assembled problem (manufactured solutions).
    """
    mu = cfg.mu
    zeta, times = v_s0.coord, v_s0.t
    tau = trace.sample("tau", times)
    phi = trace.sample("phi", times)
    dphi = trace.sample("u", times)
    vx_m = trace.sample("v_x_minus", times)
    vx_p = trace.sample("v_x_plus", times)
    v1_m = trace.sample("v1_minus", times)
    v1_p = trace.sample("v1_plus", times)
    L = zeta[-1]
    src = vortex_v1_source(v_s0, tau_s1, trace, cfg) if forcing is None else np.asarray(forcing)
    if edges is None:
        lmap = dict(zip(times, v1_m - L * vx_m))
        rmap = dict(zip(times, v1_p + L * vx_p))
        edges = (lambda t: lmap[t], lambda t: rmap[t])
    if initial is None:
        initial = np.where(zeta < 0, zeta * vx_m[0], zeta * vx_p[0])
    k = dict(zip(times, mu * phi**2 / tau))
    ratio = np.repeat((dphi / phi)[:, None], zeta.size, 1)
    vals = solve_heat(zeta, times, lambda t: k[t], reaction=ratio, source=src,
                      left=edges[0], right=edges[1], initial=initial)
    taylor = np.where(zeta[None, :] < 0, v1_m[:, None] + zeta[None, :] * vx_m[:, None],
                      v1_p[:, None] + zeta[None, :] * vx_p[:, None])
    fld = LayerField("vortex", "v_s1", zeta, times, vals, taylor,
                     farfield={"minus": vals[:, 0].copy(), "plus": vals[:, -1].copy()},
                     taylor_left0=v1_m.copy())
    fld.diagnostics = {"source_max": float(np.max(np.abs(src)))}
    return fld


# -------------------------------------------------------------- diagnostics

def weighted_norm(fld, n=0, l=0, level=-1, coord=None):
    """Discrete || <s>^n d^l f ||_{L2} of a layer profile at one time level.

    ``fld`` is a LayerField (its layer part is used) or an array of values
    on ``coord``.  Vortex-kind fields are differentiated on each side of the
    front separately.
    """
    if l > 2:
        raise ValueError("derivative order must be at most 2")
    if isinstance(fld, LayerField):
        if fld.kind == "vortex":
            pieces = [(c, d[level]) for c, d in fld.layer_sides()]
        else:
            pieces = [(fld.coord, fld.layer()[level])]
    else:
        s = np.asarray(coord, dtype=float)
        pieces = [(s, np.asarray(fld, dtype=float))]
    total = 0.0
    for x, y in pieces:
        d = y
        for _ in range(l):
            d = derivative(x, d)
        weight = (1.0 + x * x) ** n
        total += float(np.sum(trapezoid_weights(x) * weight * d * d))
    return float(np.sqrt(total))


def decay_series(fld: LayerField, powers=(0, 1, 2, 3, 4)):
    """Weighted L2 norms <s>^n |f| at every time level, shape (len(powers), nt)."""
    pieces = fld.layer_sides() if fld.kind == "vortex" else [(fld.coord, fld.layer())]
    out = np.zeros((len(powers), fld.t.size))
    for x, y in pieces:
        w = trapezoid_weights(x)
        sq = (y * y) @ np.array([w * (1.0 + x * x) ** n for n in powers]).T
        out += sq.T
    return np.sqrt(out)


@dataclass
class LayerSet:
    """All layer profiles of orders 0 and 1 for one scenario."""

    v_B0: LayerField
    v_s0: LayerField
    tau_B1: LayerField
    tau_s1: LayerField
    v_B1: LayerField
    v_s1: LayerField
    wall: OuterTrace
    front: OuterTrace


def build_layers(outer, corr, cfg: ScenarioConfig, length=None, cells=None, steps=None):
    """Solve every layer problem in dependency order."""
    wt = wall_trace(outer, corr)
    ft = front_trace(outer, corr)
    vB0 = solve_boundary_layer_v0(wt, cfg.wall, cfg, length, cells, steps)
    vs0 = solve_vortex_layer_v0(ft, cfg, length, cells, steps)
    tB1 = compute_tau_B1(vB0, wt, cfg)
    ts1 = compute_tau_s1(vs0, ft, cfg)
    vB1 = solve_boundary_layer_v1(vB0, tB1, wt, cfg)
    vs1 = solve_vortex_layer_v1(vs0, ts1, ft, cfg)
    return LayerSet(vB0, vs0, tB1, ts1, vB1, vs1, wt, ft)
