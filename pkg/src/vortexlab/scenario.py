"""Scenario description, initial and boundary data, and the mass-coordinate map.

A scenario is a plain JSON document::

    {"a": 1.0, "b": 2.0, "gamma": 2.0, "mu": 1.0, "lambda": 0.0, "T": 0.5,
     "eps_list": [1e-2, 1e-3, 1e-4],
     "grid": {...},
     "initial": {"preset": "steady_swirl", "V_minus": 0.5, "V_plus": 1.0},
     "boundary_v": {"preset": "ramp", "delta": 0.5, "t_ramp": 0.1}}

Fields are one-sided smooth functions of the radius with a jump in the
angular velocity only, at r = b.  ``side`` is -1 for the inner region
(a <= r < b) and +1 for the outer one.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError
from .numerics import gauss_legendre_cumulative

DEFAULT_EPS = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
REQUIRED_KEYS = ("a", "b", "gamma", "mu", "lambda", "T")


@dataclass
class GridConfig:
    r_max: float = 3.0
    euler_cells: int = 400
    euler_cfl: float = 0.5
    lagrangian_cells: int = 800
    layer_length: float = 20.0
    layer_cells: int = 1000
    layer_steps: int = 1000
    cells_per_sqrt_eps: float = 16.0
    dx_fine: float | None = None
    dx_min: float = 2.5e-4
    dx_outer: float = 0.004
    outer_cells_per_sqrt_eps: float = 4.0
    ratio: float = 1.08
    zone_halfwidth: float = 12.0
    max_cells: int = 40000
    viscous_cfl: float = 0.4
    output_slices: int = 5
    quad_order: int = 4
    quad_intervals: int = 400


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * s))


def smooth_transition(y):
    """C-infinity step: 0 for y <= 0, 1 for y >= 1, monotone in between."""
    y = np.asarray(y, dtype=float)
    yc = np.clip(y, 1e-300, 1 - 1e-16)
    a = np.where(y > 0, np.exp(-1.0 / yc), 0.0)
    b = np.where(y < 1, np.exp(-1.0 / np.clip(1 - y, 1e-300, None)), 0.0)
    return np.where(y <= 0, 0.0, np.where(y >= 1, 1.0, a / (a + b)))


def bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


# ------------------------------------------------------------------ presets

def _swirl_density(r, V, rho_b, b, gamma):
    base = rho_b ** (gamma - 1.0) + (gamma - 1.0) * V * V * np.log(r / b)
    # a non-positive base means vacuum; integer exponents would hide the sign
    base = np.where(base > 0, base, np.nan)
    return np.power(base, 1.0 / (gamma - 1.0))


@dataclass
class InitialData:
    """One-sided initial fields rho0, u0, v0 as vectorised callables."""

    name: str
    params: dict
    a: float
    b: float
    gamma: float

    def _p(self, key, default):
        return float(self.params.get(key, default))

    def rho0(self, r, side=None):
        r = np.asarray(r, dtype=float)
        if self.name == "rest":
            return np.full_like(r, self._p("rho", 1.0))
        side = _side_of(r, self.b, side)
        rho_b = self._p("rho_b", 1.0)
        vm, vp = self._p("V_minus", 0.5), self._p("V_plus", 1.0)
        V = np.where(side < 0, vm, vp)
        return _swirl_density(r, V, rho_b, self.b, self.gamma)

    def tau0(self, r, side=None):
        return 1.0 / self.rho0(r, side)

    def u0(self, r, side=None):
        r = np.asarray(r, dtype=float)
        if self.name == "swirl_pulse":
            amp = self._p("amplitude", 0.05)
            rc = self._p("center", 0.5 * (self.a + self.b))
            w = self._p("width", 0.25 * (self.b - self.a))
            return amp * bump((r - rc) / w)
        if self.name == "rest":
            return np.full_like(r, self._p("u", 0.0))
        return np.full_like(r, self._p("u", 0.0))

    def v0(self, r, side=None):
        r = np.asarray(r, dtype=float)
        side = _side_of(r, self.b, side)
        if self.name == "rest":
            vm = self._p("V_minus", 0.0)
            vp = self._p("V_plus", vm)
        else:
            vm, vp = self._p("V_minus", 0.5), self._p("V_plus", 1.0)
        return np.where(side < 0, vm, vp) + 0.0 * r

    def state(self, r, side=None):
        return self.rho0(r, side), self.u0(r, side), self.v0(r, side)


def _side_of(r, b, side):
    if side is None:
        return np.where(np.asarray(r) < b, -1, 1)
    return np.broadcast_to(np.asarray(side), np.shape(r))


@dataclass
class WallData:
    """Prescribed angular velocity at the wall, v0(t)."""

    name: str
    params: dict
    v_wall0: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        base = float(p.get("value", self.v_wall0)) + float(p.get("offset", 0.0))
        if self.name == "constant":
            return base + 0.0 * t
        if self.name == "ramp":
            return base + float(p.get("delta", 0.5)) * smoothstep(t / float(p.get("t_ramp", 0.1)))
        if self.name == "oscillate":
            return base + float(p.get("delta", 0.2)) * np.sin(float(p.get("omega", 2 * np.pi)) * t)
        raise ConfigError(f"unknown boundary_v preset '{self.name}'")


@dataclass
class JumpData:
    """Jump datum of the first outer correction at the front (default zero)."""

    name: str = "zero"
    params: dict = field(default_factory=dict)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "zero":
            return 0.0 * t
        if self.name == "implied":
            raise ConfigError("the implied jump is computed from the layer profiles, not evaluated directly")
        amp = float(self.params.get("amplitude", 1e-2))
        if self.name == "ramp":
            return amp * smoothstep(t / float(self.params.get("t_ramp", 0.25)))
        if self.name == "sine":
            return amp * np.sin(float(self.params.get("omega", 2 * np.pi)) * t) ** 2
        raise ConfigError(f"unknown phi1 preset '{self.name}'")


INITIAL_PRESETS = ("steady_swirl", "swirl_pulse", "rest")
WALL_PRESETS = ("constant", "ramp", "oscillate")
# "implied" is resolved by the profile pipeline from the order-zero vortex layer
JUMP_PRESETS = ("zero", "ramp", "sine", "implied")


# ------------------------------------------------------------- the config

@dataclass
class ScenarioConfig:
    a: float
    b: float
    gamma: float
    mu: float
    lam: float
    T: float
    eps_list: list
    grid: GridConfig
    initial: InitialData
    wall: WallData
    phi1: JumpData
    smoothing: str = "smooth"
    raw: dict = field(default_factory=dict)

    # convenience wrappers
    def rho0(self, r, side=None):
        return self.initial.rho0(r, side)

    def tau0(self, r, side=None):
        return self.initial.tau0(r, side)

    def u0(self, r, side=None):
        return self.initial.u0(r, side)

    def v0(self, r, side=None):
        return self.initial.v0(r, side)

    def vB(self, t):
        return self.wall(t)

    def pressure(self, rho):
        return np.power(rho, self.gamma) / self.gamma

    def sound_speed(self, rho):
        return np.power(rho, 0.5 * (self.gamma - 1.0))

    def digest(self):
        blob = json.dumps(self.raw, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_updates(self, **changes):
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value
        return config_from_dict(raw)


def default_config_dict():
    return {
        "a": 1.0, "b": 2.0, "gamma": 2.0, "mu": 1.0, "lambda": 0.0, "T": 0.5,
        "eps_list": list(DEFAULT_EPS),
        "grid": {},
        "initial": {"preset": "steady_swirl", "V_minus": 0.5, "V_plus": 1.0, "rho_b": 1.0},
        "boundary_v": {"preset": "ramp", "delta": 0.5, "t_ramp": 0.1},
        "smoothing": "smooth",
        "phi1": {"preset": "zero"},
    }


def default_config():
    return config_from_dict(default_config_dict())


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if not m:
        return None
    return text.count("\n", 0, m.start()) + 1


def _fail(msg, text=None, key=None):
    line = _line_of(text, key) if key else None
    if line is not None:
        msg = f"line {line}: {msg}"
    raise ConfigError(msg)


def config_from_dict(d, text=None):
    if not isinstance(d, dict):
        raise ConfigError("scenario must be a JSON object")
    for key in REQUIRED_KEYS:
        if key not in d:
            raise ConfigError(f"missing required key '{key}'")
    vals = {}
    for key in REQUIRED_KEYS:
        try:
            vals[key] = float(d[key])
        except (TypeError, ValueError):
            _fail(f"key '{key}' must be a number", text, key)
        if not math.isfinite(vals[key]):
            _fail(f"key '{key}' must be finite", text, key)
    a, b = vals["a"], vals["b"]
    if a <= 0:
        _fail("inner radius 'a' must be positive", text, "a")
    if b <= a:
        _fail("front inside wall: need b > a", text, "b")
    if vals["gamma"] <= 1:
        _fail("'gamma' must exceed 1", text, "gamma")
    if vals["mu"] <= 0:
        _fail("'mu' must be positive", text, "mu")
    if vals["lambda"] + vals["mu"] <= 0:
        _fail("need lambda + mu > 0", text, "lambda")
    if vals["T"] <= 0:
        _fail("final time 'T' must be positive", text, "T")

    eps_list = d.get("eps_list", list(DEFAULT_EPS))
    try:
        eps_list = [float(e) for e in eps_list]
    except (TypeError, ValueError):
        _fail("'eps_list' must be a list of numbers", text, "eps_list")
    if any(e <= 0 or not math.isfinite(e) for e in eps_list):
        _fail("'eps_list' entries must be positive", text, "eps_list")

    gdict = d.get("grid", {}) or {}
    if not isinstance(gdict, dict):
        _fail("'grid' must be an object", text, "grid")
    known = GridConfig.__dataclass_fields__
    unknown = sorted(set(gdict) - set(known))
    if unknown:
        _fail(f"unknown grid key '{unknown[0]}'", text, unknown[0])
    grid = GridConfig(**gdict)
    if grid.r_max <= b:
        _fail("grid 'r_max' must lie beyond the front", text, "r_max")

    init = d.get("initial", {"preset": "steady_swirl"})
    if not isinstance(init, dict) or init.get("preset", "steady_swirl") not in INITIAL_PRESETS:
        _fail(f"unknown initial preset; choose one of {INITIAL_PRESETS}", text, "initial")
    init = dict(init)
    initial = InitialData(init.pop("preset", "steady_swirl"), init, a, b, vals["gamma"])
    with np.errstate(invalid="ignore"):
        rho_ends = initial.rho0(np.array([a, b - 1e-12]), -1)
    if not np.all(np.isfinite(rho_ends) & (rho_ends > 0)):
        _fail("initial density must stay positive on [a, b]", text, "initial")

    wall = d.get("boundary_v", {"preset": "constant"})
    if not isinstance(wall, dict) or wall.get("preset", "constant") not in WALL_PRESETS:
        _fail(f"unknown boundary_v preset; choose one of {WALL_PRESETS}", text, "boundary_v")
    wall = dict(wall)
    wname = wall.pop("preset", "constant")
    walldata = WallData(wname, wall, float(initial.v0(np.array(a), -1)))

    jump = dict(d.get("phi1", {"preset": "zero"}) or {"preset": "zero"})
    jname = jump.pop("preset", "zero")
    if jname not in JUMP_PRESETS:
        _fail("unknown phi1 preset", text, "phi1")

    smoothing = d.get("smoothing", "smooth")
    if smoothing not in ("smooth", "linear"):
        _fail("'smoothing' must be 'smooth' or 'linear'", text, "smoothing")
    raw = copy.deepcopy(d)
    return ScenarioConfig(a=a, b=b, gamma=vals["gamma"], mu=vals["mu"], lam=vals["lambda"],
                          T=vals["T"], eps_list=eps_list, grid=grid, initial=initial,
                          wall=walldata, phi1=JumpData(jname, jump), smoothing=smoothing,
                          raw=raw)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    return config_from_dict(d, text)


def config_to_json(cfg):
    return json.dumps(cfg.raw, indent=2, sort_keys=True)


# ------------------------------------------------------ mass coordinates

class MassCoordinateMap:
    """Map between the radius r and the mass coordinate x = int_a^r y rho0(y) dy.

    The cumulative integral is tabulated with composite Gauss-Legendre on a
    radial grid split at the front; ``r0_of_x`` inverts it by a safeguarded
    Newton iteration inside the bracketing grid interval.
    """

    def __init__(self, cfg: ScenarioConfig, r_end=None, order=None, intervals=None):
        self.cfg = cfg
        self.a, self.b = cfg.a, cfg.b
        self.order = order or cfg.grid.quad_order
        n = intervals or cfg.grid.quad_intervals
        r_end = r_end or 2.0 * cfg.grid.r_max
        nm = max(8, int(round(n * (cfg.b - cfg.a) / (r_end - cfg.a))))
        npl = max(8, n - nm)
        self.r_minus = np.linspace(cfg.a, cfg.b, nm + 1)
        self.r_plus = np.linspace(cfg.b, r_end, npl + 1)
        f_m = lambda y: y * cfg.rho0(y, -1)
        f_p = lambda y: y * cfg.rho0(y, 1)
        self.x_minus = gauss_legendre_cumulative(f_m, self.r_minus, self.order)
        self.h = float(self.x_minus[-1])
        self.x_plus = self.h + gauss_legendre_cumulative(f_p, self.r_plus, self.order)
        self.r_end = r_end
        self._fs = (f_m, f_p)

    def _partial(self, lo, hi, side):
        xg, wg = np.polynomial.legendre.leggauss(self.order)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[..., None] + half[..., None] * xg
        f = self._fs[0] if side < 0 else self._fs[1]
        return half * (f(pts) @ wg)

    def eta(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.a - 1e-14):
            raise DomainError("eta: radius below the wall")
        if np.any(r > self.r_end):
            raise DomainError("eta: radius beyond the tabulated range")
        r = np.maximum(r, self.a)
        out = np.empty_like(r)
        inner = r <= self.b
        for mask, nodes, cum, side in ((inner, self.r_minus, self.x_minus, -1),
                                       (~inner, self.r_plus, self.x_plus, 1)):
            if not np.any(mask):
                continue
            rr = r[mask]
            k = np.clip(np.searchsorted(nodes, rr, side="right") - 1, 0, nodes.size - 2)
            out[mask] = cum[k] + self._partial(nodes[k], rr, side)
        return out

    def r0_of_x(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-14):
            raise DomainError("r0_of_x: negative mass coordinate")
        if np.any(x > self.x_plus[-1]):
            raise DomainError("r0_of_x: mass coordinate beyond the tabulated range")
        x = np.maximum(x, 0.0)
        out = np.empty_like(x)
        inner = x <= self.h
        for mask, nodes, cum, side in ((inner, self.r_minus, self.x_minus, -1),
                                       (~inner, self.r_plus, self.x_plus, 1)):
            if not np.any(mask):
                continue
            xx = x[mask]
            k = np.clip(np.searchsorted(cum, xx, side="right") - 1, 0, nodes.size - 2)
            lo, hi = nodes[k].copy(), nodes[k + 1].copy()
            f = self._fs[0] if side < 0 else self._fs[1]
            r = lo + (hi - lo) * (xx - cum[k]) / (cum[k + 1] - cum[k])
            for _ in range(60):
                g = cum[k] + self._partial(nodes[k], r, side) - xx
                lo = np.where(g < 0, r, lo)
                hi = np.where(g >= 0, r, hi)
                step = g / f(r)
                rn = r - step
                bad = (rn <= lo) | (rn >= hi)
                rn = np.where(bad, 0.5 * (lo + hi), rn)
                done = np.abs(rn - r) <= tol * (1 + np.abs(r))
                r = rn
                if np.all(done):
                    break
            out[mask] = r
        return out

    def dr0_dx(self, x):
        r = self.r0_of_x(x)
        return self.cfg.tau0(r, np.where(np.asarray(x) < self.h, -1, 1)) / r

    def h_by_ode(self, rtol=1e-12):
        """Front mass coordinate from integrating dr0/dx = tau0(r0)/r0 up to r0 = b."""
        cfg = self.cfg

        def rhs(x, y):
            return [cfg.tau0(np.array(y[0]), -1) / y[0]]

        def hit(x, y):
            return y[0] - cfg.b
        hit.terminal = True
        hit.direction = 1
        guess = 4.0 * self.h + 1.0
        sol = solve_ivp(rhs, (0.0, guess), [cfg.a], events=hit, rtol=rtol, atol=1e-14,
                        method="DOP853")
        if not sol.t_events[0].size:
            raise DomainError("ODE integration never reached the front")
        return float(sol.t_events[0][0])


# ------------------------------------------------ viscous initial data

def sheet_profile(cfg: ScenarioConfig, zeta, v_minus, v_plus):
    """Smoothing profile g(0, zeta): locked to v(h-) / v(h+) for |zeta| >= 1."""
    zeta = np.asarray(zeta, dtype=float)
    if cfg.smoothing == "linear":
        s = np.clip(0.5 * (zeta + 1.0), 0.0, 1.0)
    else:
        s = smooth_transition(0.5 * (zeta + 1.0))
    return v_minus + (v_plus - v_minus) * s


@dataclass
class PiecewiseField:
    """Grid function (tau, u, v) on the mass coordinate with an interface."""

    x: np.ndarray
    tau: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    interface: float
    limits: dict = field(default_factory=dict)


def build_viscous_initial(cfg: ScenarioConfig, eps, x, cmap: MassCoordinateMap | None = None):
    """Initial data of the viscous problem on the mass nodes ``x``.

    tau and u equal the inviscid data; v is the sheet mollified over
    |x - h| <= sqrt(eps) by the smoothing profile.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    cmap = cmap or MassCoordinateMap(cfg)
    x = np.asarray(x, dtype=float)
    h = cmap.h
    side = np.where(x < h, -1, 1)
    r = cmap.r0_of_x(x)
    r = np.where(np.isclose(x, h, rtol=0, atol=1e-14), cfg.b, r)
    tau = cfg.tau0(r, side)
    u = cfg.u0(r, side)
    v = cfg.v0(r, side)
    vm = float(cfg.v0(np.array(cfg.b), -1))
    vp = float(cfg.v0(np.array(cfg.b), 1))
    zeta = (x - h) / math.sqrt(eps)
    inside = np.abs(zeta) < 1
    g = sheet_profile(cfg, zeta, vm, vp)
    shift = np.where(side < 0, vm, vp)
    v = np.where(inside, v - shift + g, v)
    return PiecewiseField(x=x, tau=tau, u=u, v=v, r=r, interface=h,
                          limits={"v_minus": vm, "v_plus": vp})


# --------------------------------------------------------- compatibility

@dataclass
class Violation:
    name: str
    value: float

    def __str__(self):
        return f"{self.name}: {self.value:.3e}"


def check_compatibility(cfg: ScenarioConfig, tol=1e-12):
    """Report violated compatibility and positivity conditions of the data."""
    a, b = cfg.a, cfg.b
    out = []
    ua = float(cfg.u0(np.array(a), -1))
    if abs(ua) > tol:
        out.append(Violation("u0(a) != 0", ua))
    dv = float(cfg.vB(0.0)) - float(cfg.v0(np.array(a), -1))
    if abs(dv) > tol:
        out.append(Violation("v0(a) != vB(0)", dv))
    du = float(cfg.u0(np.array(b), 1) - cfg.u0(np.array(b), -1))
    if abs(du) > tol:
        out.append(Violation("[u0] != 0 at b", du))
    dtau = float(cfg.tau0(np.array(b), 1) - cfg.tau0(np.array(b), -1))
    if abs(dtau) > tol:
        out.append(Violation("[tau0] != 0 at b", dtau))
    rr = np.concatenate([np.linspace(a, b, 200), np.linspace(b, cfg.grid.r_max, 200)])
    side = np.concatenate([-np.ones(200), np.ones(200)])
    tau = cfg.tau0(rr, side)
    if not np.all(np.isfinite(tau)) or np.min(tau) <= 0:
        out.append(Violation("tau0 not positive", float(np.nanmin(tau))))
    return out


def config_summary(cfg: ScenarioConfig):
    return {"a": cfg.a, "b": cfg.b, "gamma": cfg.gamma, "mu": cfg.mu, "lambda": cfg.lam,
            "T": cfg.T, "initial": cfg.initial.name, "boundary_v": cfg.wall.name,
            "grid": asdict(cfg.grid)}
