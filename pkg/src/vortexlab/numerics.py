"""Small numerical building blocks shared by the solvers.

Quadrature, shape-preserving cubic interpolation, nonuniform finite
differences, graded grids, banded solves and log-log rate fits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy import stats


# ---------------------------------------------------------------- quadrature

def gauss_legendre_cumulative(f, nodes, order=4):
    """Cumulative integral of ``f`` from ``nodes[0]`` to every node.

    Composite Gauss-Legendre of the given order on each grid interval.
    ``f`` must accept a numpy array.
    """
    nodes = np.asarray(nodes, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(order)
    left, right = nodes[:-1], nodes[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = mid[:, None] + half[:, None] * xg[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    pieces = half * (vals @ wg)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def trapezoid_weights(x):
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def cumulative_trapezoid_from_right(y, x):
    """Integral of ``y`` from each node to the last node."""
    y = np.asarray(y, dtype=float)
    d = np.diff(x)
    seg = 0.5 * d * (y[..., 1:] + y[..., :-1])
    out = np.zeros_like(y)
    out[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
    return out


# -------------------------------------------------- finite-difference helpers

def _lagrange_derivative_weights(stencil, at):
    """Weights of d/dx of the interpolating polynomial through ``stencil``.

    ``stencil`` has shape (m, k) (m evaluation sites, k points each) and
    ``at`` has shape (m,).  Returns an (m, k) array.
    """
    m, k = stencil.shape
    w = np.zeros((m, k))
    for j in range(k):
        acc = np.zeros(m)
        for q in range(k):
            if q == j:
                continue
            term = 1.0 / (stencil[:, j] - stencil[:, q])
            for l in range(k):
                if l in (j, q):
                    continue
                term = term * (at - stencil[:, l]) / (stencil[:, j] - stencil[:, l])
            acc += term
        w[:, j] = acc
    return w


def derivative(x, y, points=5):
    """First derivative of samples ``y(x)`` on a (possibly nonuniform) grid.

    Uses the derivative of the local interpolating polynomial through
    ``points`` neighbouring nodes, shifted inward at the ends.  Works along
    the last axis of ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    k = min(points, n)
    if k < 2:
        return np.zeros_like(y)
    start = np.clip(np.arange(n) - k // 2, 0, n - k)
    idx = start[:, None] + np.arange(k)[None, :]
    w = _lagrange_derivative_weights(x[idx], x)
    return np.einsum("...ik,ik->...i", y[..., idx], w)


def second_difference(x, y):
    """Three-point second derivative on a nonuniform grid (interior nodes)."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    return 2.0 * ((y[..., 2:] - y[..., 1:-1]) / hp - (y[..., 1:-1] - y[..., :-2]) / hm) / (hp + hm)


def first_difference(x, y):
    """Three-point centred first derivative on a nonuniform grid (interior)."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    return (hm**2 * y[..., 2:] - hp**2 * y[..., :-2] + (hp**2 - hm**2) * y[..., 1:-1]) / (hp * hm * (hp + hm))


# ------------------------------------------------ shape-preserving cubic

def hermite_slopes(x, y):
    """Node slopes for a shape-preserving cubic Hermite interpolant.

    Starts from fourth-order slope estimates and applies Hyman's filter on
    monotone stretches, so the interpolant stays monotone wherever the data
    are, while smooth data keep fourth-order accuracy.  Local extrema keep
    their high-order slope.
    """
    d = derivative(x, y, points=5)
    if x.size < 3:
        return d
    delta = np.diff(y, axis=-1) / np.diff(x)
    dl = delta[..., :-1]
    dr = delta[..., 1:]
    mono = dl * dr > 0
    # nodes beside an extremum that falls between grid points keep their
    # high-order slope: limit only where the run is monotone two cells out
    sgn = np.sign(delta)
    wide = np.concatenate([sgn[..., :1], sgn, sgn[..., -1:]], axis=-1)
    mono &= (wide[..., :-3] == wide[..., 1:-2]) & (wide[..., 2:-1] == wide[..., 3:])
    bound = 3.0 * np.minimum(np.abs(dl), np.abs(dr))
    s = np.sign(dl)
    di = d[..., 1:-1]
    limited = np.where(s * di < 0, 0.0, s * np.minimum(np.abs(di), bound))
    d[..., 1:-1] = np.where(mono, limited, di)
    for end, dd in ((0, delta[..., 0]), (-1, delta[..., -1])):
        de = d[..., end]
        bad = de * dd < 0
        de = np.where(bad, 0.0, de)
        de = np.where(np.abs(de) > 3 * np.abs(dd), 3 * dd, de)
        d[..., end] = de
    return d


def hermite_eval(x, y, slopes, q, extrapolate=False):
    """Evaluate the cubic Hermite interpolant at the points ``q``.

    ``y`` and ``slopes`` may carry leading batch axes (shape (..., n)); then
    ``q`` must broadcast against them.  Outside [x0, xn] the result is the
    end value unless ``extrapolate`` is set, in which case the end cubic is
    continued.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if not extrapolate:
        q = np.clip(q, x[0], x[-1])
    k = np.clip(np.searchsorted(x, q, side="right") - 1, 0, x.size - 2)
    h = x[k + 1] - x[k]
    s = (q - x[k]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    if y.ndim == 1:
        return h00 * y[k] + h10 * h * slopes[k] + h01 * y[k + 1] + h11 * h * slopes[k + 1]
    yk = np.take_along_axis(y, k, axis=-1)
    yk1 = np.take_along_axis(y, k + 1, axis=-1)
    dk = np.take_along_axis(slopes, k, axis=-1)
    dk1 = np.take_along_axis(slopes, k + 1, axis=-1)
    return h00 * yk + h10 * h * dk + h01 * yk1 + h11 * h * dk1


class ShapeCubic:
    """Shape-preserving cubic interpolant of samples on one smooth side."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.slopes = hermite_slopes(self.x, self.y)

    def __call__(self, q, extrapolate=False):
        return hermite_eval(self.x, self.y, self.slopes, q, extrapolate)


def lagrange_time_weights(times, t, npts=4):
    """Indices and weights for local polynomial interpolation in time."""
    times = np.asarray(times, dtype=float)
    n = times.size
    k = min(npts, n)
    i = int(np.clip(np.searchsorted(times, t) - k // 2, 0, n - k))
    idx = np.arange(i, i + k)
    tt = times[idx]
    w = np.ones(k)
    for j in range(k):
        for m in range(k):
            if m != j:
                w[j] *= (t - tt[m]) / (tt[j] - tt[m])
    return idx, w


def interp_in_time(times, values, t, npts=4):
    """Interpolate ``values[n, ...]`` sampled at ``times`` to time ``t``."""
    idx, w = lagrange_time_weights(times, t, npts)
    return np.tensordot(w, np.asarray(values)[idx], axes=(0, 0))


# ----------------------------------------------------------- graded grids

def graded_grid(x0, x1, spacing, ratio=1.1):
    """Nodes on [x0, x1] following a target spacing function.

    ``spacing(x)`` returns the desired local cell size.  Cell sizes are
    limited so that neighbours differ by at most ``ratio``; the last node
    lands exactly on ``x1`` after a uniform rescale.
    """
    nodes = [x0]
    prev = float(spacing(x0))
    x = x0
    while x < x1:
        target = float(spacing(x))
        dx = min(target, prev * ratio)
        dx = max(dx, prev / ratio)
        x = x + dx
        nodes.append(x)
        prev = dx
    nodes = np.asarray(nodes)
    if nodes.size > 2 and (nodes[-1] - x1) > 0.5 * (nodes[-1] - nodes[-2]):
        nodes = nodes[:-1]
    if nodes.size < 2:
        nodes = np.array([x0, x1])
    scale = (x1 - x0) / (nodes[-1] - x0)
    return x0 + (nodes - x0) * scale


def layered_spacing(fine, coarse, zones, growth):
    """Spacing function: ``fine`` inside zones, growing linearly outside.

    ``zones`` is a list of (lo, hi) intervals.  Away from them the spacing
    grows with slope ``growth`` per unit distance until it reaches ``coarse``.
    """
    def spacing(x):
        dist = min(max(lo - x, x - hi, 0.0) for lo, hi in zones)
        return min(coarse, fine + growth * dist)
    return spacing


def max_neighbour_ratio(nodes):
    d = np.diff(nodes)
    r = d[1:] / d[:-1]
    return float(np.max(np.maximum(r, 1.0 / r))) if r.size else 1.0


# ------------------------------------------------------------ linear algebra

def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are unused."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


# -------------------------------------------------------------- rate fits

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    halfwidth: float

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "r2": self.r2, "slope_ci95_halfwidth": self.halfwidth}


def loglog_fit(xs, ys):
    """Least-squares fit of log(y) = slope*log(x) + intercept."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    res = stats.linregress(lx, ly)
    n = lx.size
    if n > 2:
        half = float(stats.t.ppf(0.975, n - 2) * res.stderr)
    else:
        half = float("nan")
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2), half)
