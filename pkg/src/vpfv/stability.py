"""Von Neumann analysis of the upwind stencil and CFL-constant machinery.

The semi-discrete symbol of the fourth-order five-point upwind flux
difference (per unit A/h) is

    P(xi) = 2 e^{-3j xi} - 15 e^{-2j xi} + 60 e^{-j xi} - 20 - 30 e^{j xi}
            + 3 e^{2j xi}

so a Fourier mode obeys du/dt = (A/h) P(xi)/60 u.  The CFL constant sigma is
the largest value such that sigma*P(xi)/60 stays inside the absolute
stability region of the time integrator for all xi.

In D dimensions the amplification locus is the two-parameter family
H(xi_1, xi_2) = w_1 P(xi_1) + w_2 P(xi_2) with w_a = A^a/(60 h_a); its outer
boundary (the true envelope) is where the family's Jacobian degenerates,
i.e. where P'(xi_1) and P'(xi_2) are parallel.  Collapsing xi_1 = xi_2 gives
the closed-form (sum of weights) * P curve, which encloses the true envelope
and yields the L1 time-step bound used in production.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


def rk4_stability(z):
    """Stability polynomial shared by all four-stage fourth-order RK schemes."""
    z = np.asarray(z)
    return 1.0 + z + z**2 / 2.0 + z**3 / 6.0 + z**4 / 24.0


def upwind_symbol(xi):
    """Symbol of the fourth-order upwind flux difference (not yet /60)."""
    xi = np.asarray(xi, dtype=np.float64)
    e = np.exp(1j * xi)
    return 2.0 / e**3 - 15.0 / e**2 + 60.0 / e - 20.0 - 30.0 * e + 3.0 * e**2


def upwind_symbol_derivative(xi):
    xi = np.asarray(xi, dtype=np.float64)
    e = np.exp(1j * xi)
    return (
        -6j / e**3 + 30j / e**2 - 60j / e - 30j * e + 6j * e**2
    )


def first_order_symbol(xi):
    """Symbol of first-order upwind, e^{-j xi} - 1 (cross-check row only)."""
    xi = np.asarray(xi, dtype=np.float64)
    return np.exp(-1j * xi) - 1.0


def cfl_constant(symbol, R=rk4_stability, divisor=1.0, samples=8192,
                 tol=1e-4, sigma_hi=16.0):
    """Largest sigma with max_xi |R(sigma * symbol(xi)/divisor)| <= 1.

    Bisection to ``tol`` over a dense sampling of xi in [0, 2pi).
    """
    xi = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    z = symbol(xi) / divisor

    def stable(sigma):
        return np.max(np.abs(R(sigma * z))) <= 1.0 + 1e-12

    lo = 0.0
    hi = 1.0
    while stable(hi):
        lo, hi = hi, 2.0 * hi
        if hi > sigma_hi:
            raise RuntimeError("no instability found below sigma_hi; check symbol")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class SymbolCurve:
    """A sampled closed parametric curve in the complex plane."""

    xi: np.ndarray
    z: np.ndarray
    label: str = ""

    def diameter(self):
        return float(
            np.hypot(np.ptp(self.z.real), np.ptp(self.z.imag))
        )


def approx_envelope(weights, samples=65536):
    """The L1-collapsed amplification curve (sum of weights) * P(xi)."""
    w = [float(x) for x in weights]
    if any(x < 0 for x in w):
        raise ValueError("weights must be non-negative")
    xi = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    return SymbolCurve(xi, sum(w) * upwind_symbol(xi), label="approx-envelope")


# ---------------------------------------------------------------------------
# true envelope: zero set of the tangency determinant on the (xi1, xi2) torus


def _cross(a, b):
    return a.real * b.imag - a.imag * b.real


def tangency_determinant(xi1, xi2):
    """Jacobian determinant of (xi1, xi2) -> H, up to the w1*w2 factor.

    Vanishes where P'(xi1) and P'(xi2) are parallel: on the torus diagonal
    (same tangent) and on a second wrapping curve near xi2 = xi1 + pi
    (anti-parallel tangents).  The image of the first is the outer boundary
    of the amplification region; the image of the second lies inside it.
    """
    return _cross(upwind_symbol_derivative(xi1), upwind_symbol_derivative(xi2))


def _marching_loops(G):
    """Chain marching-squares crossings of G into closed loops on the torus.

    ``G`` is sampled on an (n+1) x (n+1) lattice whose last row/column
    continue the first past the periodic wrap, so every cell sees smooth
    values.  Edge identifiers are canonicalized mod n:
    ('h', i, j) spans lattice nodes (i, j)-(i+1, j), ('v', i, j) spans
    (i, j)-(i, j+1).  Returns lists of edge ids, one per closed loop.
    """
    n = G.shape[0] - 1
    sgn = np.where(G >= 0.0, 1, -1)

    links = {}

    def add_link(a, b):
        links.setdefault(a, []).append(b)
        links.setdefault(b, []).append(a)

    for i in range(n):
        for j in range(n):
            s = (sgn[i, j], sgn[i + 1, j], sgn[i + 1, j + 1], sgn[i, j + 1])
            bot = ("h", i, j % n)
            rgt = ("v", (i + 1) % n, j)
            top = ("h", i, (j + 1) % n)
            lft = ("v", i, j)
            cr = []
            if s[0] != s[1]:
                cr.append(bot)
            if s[1] != s[2]:
                cr.append(rgt)
            if s[3] != s[2]:
                cr.append(top)
            if s[0] != s[3]:
                cr.append(lft)
            if len(cr) == 2:
                add_link(cr[0], cr[1])
            elif len(cr) == 4:
                # saddle: disambiguate with the cell-center sign
                center = G[i, j] + G[i + 1, j] + G[i + 1, j + 1] + G[i, j + 1]
                if (center >= 0) == (s[0] > 0):
                    add_link(bot, rgt)
                    add_link(top, lft)
                else:
                    add_link(bot, lft)
                    add_link(top, rgt)

    loops = []
    seen = set()
    for start in links:
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [e for e in links[cur] if e != prev]
            if not nxt:
                break  # open chain: crossing-count mismatch, drop it
            prev, cur = cur, nxt[0]
            if cur == start:
                loops.append(loop)
                break
            if cur in seen:
                break
            seen.add(cur)
            loop.append(cur)
    return loops


def _bracket_root(g, a, b, edge):
    """Brent solve on [a, b]; if the endpoint signs agree (borderline lattice
    sign), subdivide the edge to recover a bracket before giving up."""
    try:
        return brentq(g, a, b, xtol=1e-12)
    except ValueError:
        ts = np.linspace(a, b, 17)
        vs = np.array([g(t) for t in ts])
        flips = np.nonzero(np.sign(vs[:-1]) != np.sign(vs[1:]))[0]
        if flips.size == 0:
            raise RuntimeError(
                f"tangency root lost on torus edge {edge} after subdivision"
            ) from None
        k = flips[0]
        return brentq(g, ts[k], ts[k + 1], xtol=1e-12)


def _polish_edge_point(edge, h, offset, f):
    """Refine the zero of f along a lattice edge with Brent's method."""
    kind, i, j = edge
    if kind == "h":
        x2 = j * h + offset
        t0 = _bracket_root(lambda t: f(t, x2), i * h, (i + 1) * h, edge)
        return t0, x2
    x1 = i * h
    t0 = _bracket_root(lambda t: f(x1, t), j * h + offset, (j + 1) * h + offset, edge)
    return x1, t0


@dataclass
class EnvelopeBranches:
    """All closed tangency branches, mapped to amplification space."""

    accepted: SymbolCurve
    rejected: list = field(default_factory=list)


def true_envelope_2d(w1, w2, grid_n=512):
    """Outer boundary of {w1 P(xi1) + w2 P(xi2)} via the tangency condition.

    Scans the tangency determinant on a ``grid_n`` x ``grid_n`` torus lattice
    (the xi2 lattice is half-offset so the diagonal never lands on a node),
    chains the marching-squares crossings into closed loops, polishes each
    crossing along its lattice edge with Brent's method, maps the loops
    through H, and classifies by mutual enclosure: the branch whose polygon
    encloses the other is the true envelope.  Because the P curve is convex
    (its curvature never changes sign), the enclosing branch is the diagonal
    xi1 = xi2 and the envelope coincides with (w1+w2) P; the anti-parallel
    branch is the rejected inner curve.
    """
    if w1 <= 0 or w2 <= 0:
        raise ValueError("weights must be positive")
    h = 2.0 * np.pi / grid_n
    offset = 0.5 * h  # xi2 lattice half-offset: the diagonal avoids all nodes
    x1e = np.arange(grid_n + 1) * h
    x2e = x1e + offset
    G = tangency_determinant(x1e[:, None], x2e[None, :])
    loops = _marching_loops(G)

    curves = []
    for loop in loops:
        if len(loop) < 16:
            continue  # lattice-noise speck
        pts = [
            _polish_edge_point(e, h, offset, tangency_determinant) for e in loop
        ]
        xi1 = np.array([p[0] for p in pts])
        xi2 = np.array([p[1] for p in pts])
        gap = np.arctan2(np.sin(xi2 - xi1), np.cos(xi2 - xi1))
        if np.max(np.abs(gap)) < 0.1:
            # diagonal branch.  P is locally straight to fourth order at
            # xi = 0, so the determinant zero is quintic-flat there and the
            # polished pair can split by the noise floor; snapping to the
            # midpoint puts the point back on the exact diagonal image.
            xi1 = xi1 + 0.5 * gap
            z = (w1 + w2) * upwind_symbol(xi1)
        else:
            z = w1 * upwind_symbol(xi1) + w2 * upwind_symbol(xi2)
        curves.append(SymbolCurve(xi1, z, label="tangency-branch"))

    if len(curves) != 2:
        raise RuntimeError(
            f"tangency scan found {len(curves)} closed branches, expected 2 "
            "(the diagonal and the anti-parallel-tangent curve)"
        )

    # classification by mutual enclosure: the accepted branch is the one whose
    # polygon contains every point of the other
    def contains(a, b):
        return bool(np.all(point_in_polygon(b.z, a.z)))

    order = sorted(curves, key=lambda c: -abs(polygon_area(c.z)))
    outer, inner = order
    if not contains(outer, inner):
        raise RuntimeError("branch classification failed: no enclosing loop")
    outer.label = "true-envelope"
    inner.label = "rejected-branch"
    return EnvelopeBranches(accepted=outer, rejected=[inner])


# ---------------------------------------------------------------------------
# small computational-geometry helpers (complex points: x + iy)


def polygon_area(poly):
    """Signed shoelace area of a closed polygon given as complex samples."""
    x, y = poly.real, poly.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(points, poly):
    """Crossing-number inside test, vectorized over ``points``."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    x0, y0 = poly.real, poly.imag
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(pts.shape, dtype=bool)
    for chunk in range(0, pts.size, 4096):
        p = pts.reshape(-1)[chunk : chunk + 4096]
        px = p.real[:, None]
        py = p.imag[:, None]
        crosses = ((y0[None, :] > py) != (y1[None, :] > py)) & (
            px
            < (x1 - x0)[None, :] * (py - y0[None, :]) / (y1 - y0 + 1e-300)[None, :]
            + x0[None, :]
        )
        inside.reshape(-1)[chunk : chunk + 4096] = np.sum(crosses, axis=1) % 2 == 1
    return inside if np.ndim(points) else bool(inside[0])


def signed_distance(points, poly):
    """Distance to the polygon boundary, positive inside, negative outside."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex)).reshape(-1)
    a = poly
    b = np.roll(poly, -1)
    ab = b - a
    ab2 = np.abs(ab) ** 2 + 1e-300
    out = np.empty(pts.size)
    for idx in range(0, pts.size, 1024):
        p = pts[idx : idx + 1024, None]
        t = np.clip(((p - a[None, :]) * np.conj(ab[None, :])).real / ab2[None, :], 0.0, 1.0)
        d = np.abs(p - (a[None, :] + t * ab[None, :]))
        out[idx : idx + 1024] = d.min(axis=1)
    sign = np.where(point_in_polygon(pts, poly), 1.0, -1.0)
    res = sign * out
    return res if np.ndim(points) else float(res[0])
