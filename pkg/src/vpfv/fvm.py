"""Fourth-order finite-volume spatial operator for the Vlasov equation.

This module holds the clear reference implementation (pure numpy slicing over
the padded array) of:

* the five-point upwind face reconstruction,
* the diagonal transverse corrections that lift face-center flux products to
  fourth-order face averages,
* the advection-speed fields, and
* the full semi-discrete right-hand side.

The fused compiled kernels in :mod:`vpfv._kernels` are validated against this
path; production stepping calls the kernels.

The nondimensional advection velocity of species ``s`` along phase-space
coordinates ``r = (x[, y], vx[, vy])`` is::

    A = [ v,  (q/m) ((w_p0 t_0)^2 E + (w_c0 t_0) v x B_hat) + G ]

with ``B_hat = (0, 0, Bz)``, so ``v x B_hat = (vy Bz, -vx Bz)``.  Each
component ``A^d`` is independent of coordinate ``d`` itself, which lets the
upwind branch be chosen once per sweep line and lets ``A^d`` factor out of the
face-flux difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import NGHOST, DistField, PhaseSpaceGrid

# Five-point upwind reconstruction weights for the face value at i + 1/2 e^d.
# A > 0 reads cells {i-2e, ..., i+2e}; A <= 0 mirrors onto {i-e, ..., i+3e}.
W_UP = np.array([2.0, -13.0, 47.0, 27.0, -3.0]) / 60.0
W_DN = np.array([-3.0, 27.0, 47.0, -13.0, 2.0]) / 60.0


@dataclass(frozen=True)
class SpeciesConfig:
    """Charge, mass, normalization constants and external fields of a species.

    ``kappa2`` is (w_p0 t_0)^2 and ``kappa_c`` is (w_c0 t_0); ``G`` is the
    external acceleration per velocity dimension and ``Bz`` the static
    out-of-plane magnetic field amplitude.
    """

    name: str = "e"
    q: float = -1.0
    m: float = 1.0
    kappa2: float = 1.0
    kappa_c: float = 0.0
    Bz: float = 0.0
    G: tuple = (0.0,)

    @property
    def qm(self):
        return self.q / self.m


def reconstruct_face(stencil, positive):
    """Face value at i+1/2 from five cell averages along one dimension.

    ``stencil`` holds cells {i-2e..i+2e} when ``positive`` (A > 0) and
    {i-e..i+3e} otherwise (A <= 0; ties take this branch).
    """
    w = W_UP if positive else W_DN
    return float(np.dot(w, stencil))


def _g(s):
    """Velocity-dim external acceleration, defaulting to 0 for short tuples."""
    return tuple(s.G) + (0.0,) * 2


def advection_speeds(grid: PhaseSpaceGrid, species: SpeciesConfig, E, _shift=None):
    """Per-dimension advection speeds, broadcastable to the interior shape.

    ``E`` maps component names to physical-grid arrays: ``{"Ex": (Nx,)}`` in
    1D, ``{"Ex": (Nx,Ny), "Ey": (Nx,Ny)}`` in 2D.  Returns a list of arrays,
    one per dimension, each constant along its own dimension.

    ``_shift=(dim, off)`` evaluates the speeds at cells displaced by ``off``
    along ``dim`` (periodic roll of E along physical dims, exact coordinate
    offset along velocity dims); used by the correction test oracle.
    """
    s = species
    gx, gy = _g(s)[:2]
    cB = s.qm * s.kappa_c * s.Bz

    def cen(dim):
        c = grid.centers(dim)
        if _shift is not None and _shift[0] == dim:
            c = c + _shift[1] * grid.h[dim]
        return c

    def field(name, ndim_phys):
        a = np.asarray(E[name])
        if _shift is not None and _shift[0] < ndim_phys:
            a = np.roll(a, -_shift[1], axis=_shift[0])
        return a

    if grid.d == 1 and grid.v == 1:
        ax = cen(1)[np.newaxis, :]
        avx = (s.qm * s.kappa2 * field("Ex", 1) + gx)[:, np.newaxis]
        return [ax, avx]
    if grid.d == 1 and grid.v == 2:
        ax = cen(1)[np.newaxis, :, np.newaxis]
        evx = s.qm * s.kappa2 * field("Ex", 1) + gx
        avx = evx[:, np.newaxis, np.newaxis] + cB * cen(2)[np.newaxis, np.newaxis, :]
        avy = (-cB * cen(1) + gy)[np.newaxis, :, np.newaxis]
        return [ax, avx, avy]
    if grid.d == 2 and grid.v == 2:
        ax = cen(2)[np.newaxis, np.newaxis, :, np.newaxis]
        ay = cen(3)[np.newaxis, np.newaxis, np.newaxis, :]
        evx = s.qm * s.kappa2 * field("Ex", 2) + gx
        evy = s.qm * s.kappa2 * field("Ey", 2) + gy
        avx = evx[:, :, np.newaxis, np.newaxis] + cB * cen(3)[np.newaxis, np.newaxis, np.newaxis, :]
        avy = evy[:, :, np.newaxis, np.newaxis] - cB * cen(2)[np.newaxis, np.newaxis, :, np.newaxis]
        return [ax, ay, avx, avy]
    raise ValueError(f"unsupported dimensionality ({grid.d},{grid.v})")


def max_speed_per_dim(grid, species, E):
    """max |A^d| over the domain, one entry per dimension (CFL input)."""
    return [float(np.max(np.abs(a))) for a in advection_speeds(grid, species, E)]


def _shifted(data, grid, offsets):
    """Interior-shaped view of the padded array displaced by ``offsets``."""
    sl = tuple(
        slice(NGHOST + o, NGHOST + o + n) for o, n in zip(offsets, grid.N)
    )
    return data[sl]


def _axis_shift(data, grid, dim, off):
    z = [0] * grid.ndim
    z[dim] = off
    return _shifted(data, grid, z)


def _flux_difference(data, grid, dim, A):
    """A^d * (f_{i+1/2} - f_{i-1/2}) / h_d over the interior, upwinded."""
    h = grid.h[dim]
    # A > 0: faces from offsets -2..+2 (hi) and -3..+1 (lo)
    hi_p = sum(w * _axis_shift(data, grid, dim, o) for w, o in zip(W_UP, range(-2, 3)))
    lo_p = sum(w * _axis_shift(data, grid, dim, o) for w, o in zip(W_UP, range(-3, 2)))
    # A <= 0: faces from offsets -1..+3 (hi) and -2..+2 (lo)
    hi_n = sum(w * _axis_shift(data, grid, dim, o) for w, o in zip(W_DN, range(-1, 4)))
    lo_n = sum(w * _axis_shift(data, grid, dim, o) for w, o in zip(W_DN, range(-2, 3)))
    return np.where(A > 0.0, A * (hi_p - lo_p), A * (hi_n - lo_n)) / h


def _diag_sum(data, grid, a, b):
    """f(+a,-b) + f(-a,+b) - f(+a,+b) - f(-a,-b) over the interior."""

    def d2(sa, sb):
        z = [0] * grid.ndim
        z[a] = sa
        z[b] = sb
        return _shifted(data, grid, z)

    return d2(1, -1) + d2(-1, 1) - d2(1, 1) - d2(-1, -1)


def correction_coeffs(grid: PhaseSpaceGrid, species: SpeciesConfig, E):
    """Closed-form diagonal-correction coefficients on the physical grid.

    Returns a dict keyed by coefficient name; entries vary only in the
    physical coordinates (recomputed per stage since E changes per stage).
    With E=0 and B=0 only the grid-ratio parts survive:
    c1 = h_vx/(48 h_x), c4 = h_vy/(48 h_y), c2 = c3 = c5 = 0.
    """
    s = species
    h = grid.h
    qm = s.qm
    if grid.d == 1:
        hx, hvx = h[0], h[1]
        Ex = np.asarray(E["Ex"])
        dEx = np.roll(Ex, -1) - np.roll(Ex, 1)  # E[i+1] - E[i-1], periodic
        c = {"c1": hvx / (48.0 * hx) + qm * s.kappa2 * dEx / (96.0 * hvx)}
        if grid.v == 2:
            hvy = h[2]
            c["c2"] = qm * (s.kappa_c / 48.0) * s.Bz * (hvx / hvy - hvy / hvx)
        return c
    hx, hy, hvx, hvy = h
    Ex = np.asarray(E["Ex"])
    Ey = np.asarray(E["Ey"])
    dEx_x = np.roll(Ex, -1, axis=0) - np.roll(Ex, 1, axis=0)
    dEy_y = np.roll(Ey, -1, axis=1) - np.roll(Ey, 1, axis=1)
    dEx_y = np.roll(Ex, -1, axis=1) - np.roll(Ex, 1, axis=1)
    dEy_x = np.roll(Ey, -1, axis=0) - np.roll(Ey, 1, axis=0)
    return {
        "c1": hvx / (48.0 * hx) + qm * s.kappa2 * dEx_x / (96.0 * hvx),
        "c2": qm * (s.kappa_c / 48.0) * s.Bz * (hvx / hvy - hvy / hvx),
        "c3": -qm * s.kappa2 * dEx_y / (96.0 * hvx),
        "c4": hvy / (48.0 * hy) + qm * s.kappa2 * dEy_y / (96.0 * hvy),
        "c5": -qm * s.kappa2 * dEy_x / (96.0 * hvy),
    }


def transverse_correction(f: DistField, coeffs, species=None):
    """Sum of the closed-form diagonal correction terms over the interior.

    The coefficient/diagonal pairing per dimensionality (pairs written as
    (dim_a, dim_b) with dims ordered x[,y],vx[,vy]):

    * 1D-1V: c1 on (x,vx)
    * 1D-2V: c1 on (x,vx); c2 on (vx,vy) with the opposite diagonal sign
    * 2D-2V: c1 (x,vx), c4 (y,vy) one sign; c2 (vx,vy), c3 (y,vx),
      c5 (x,vy) the opposite sign
    """
    g = f.grid
    d, v = g.d, g.v
    data = f.data
    if d == 1 and v == 1:
        c1 = coeffs["c1"][:, np.newaxis]
        return c1 * _diag_sum(data, g, 0, 1)
    if d == 1 and v == 2:
        c1 = coeffs["c1"][:, np.newaxis, np.newaxis]
        out = c1 * _diag_sum(data, g, 0, 1)
        out -= coeffs["c2"] * _diag_sum(data, g, 1, 2)
        return out
    if d == 2 and v == 2:
        c1 = coeffs["c1"][:, :, np.newaxis, np.newaxis]
        c4 = coeffs["c4"][:, :, np.newaxis, np.newaxis]
        c3 = coeffs["c3"][:, :, np.newaxis, np.newaxis]
        c5 = coeffs["c5"][:, :, np.newaxis, np.newaxis]
        out = c1 * _diag_sum(data, g, 0, 2)
        out += c4 * _diag_sum(data, g, 1, 3)
        out -= coeffs["c2"] * _diag_sum(data, g, 2, 3)
        out -= c3 * _diag_sum(data, g, 1, 2)
        out -= c5 * _diag_sum(data, g, 0, 3)
        return out
    raise ValueError(f"unsupported dimensionality ({d},{v})")


def vlasov_rhs(f: DistField, species: SpeciesConfig, E, corrections=True, coeffs=None, speeds=None):
    """Reference semi-discrete RHS over the interior.

    RHS_i = C_i - sum_d (A^d_i/h_d) (f_{i+1/2 e^d} - f_{i-1/2 e^d})

    Ghosts of ``f`` must be synchronized.  ``coeffs`` optionally supplies
    precomputed correction coefficients — on a partitioned run the field
    differences inside them must come from the global periodic field, so
    each partition receives its slab instead of recomputing locally.
    ``speeds`` likewise accepts pre-sliced per-dimension advection speeds,
    letting a partition reuse globally evaluated velocity centers whose
    local recomputation would round differently.
    """
    g = f.grid
    if speeds is None:
        speeds = advection_speeds(g, species, E)
    rhs = np.zeros(g.shape)
    for dim in range(g.ndim):
        rhs -= _flux_difference(f.data, g, dim, speeds[dim])
    if corrections:
        if coeffs is None:
            coeffs = correction_coeffs(g, species, E)
        rhs += transverse_correction(f, coeffs)
    return rhs


def check_finite(arr, context=""):
    """Fail fast on the first non-finite entry, reporting its multi-index."""
    bad = ~np.isfinite(arr)
    if bad.any():
        mi = np.unravel_index(np.argmax(bad), arr.shape)
        raise FloatingPointError(
            f"non-finite value {arr[mi]!r} at interior index {tuple(int(i) for i in mi)}"
            + (f" ({context})" if context else "")
        )


def generic_correction_oracle(f: DistField, species: SpeciesConfig, E):
    """Direct evaluation of the transverse-derivative correction (test oracle).

    For each dimension d and each transverse dimension d', take the centered
    second difference (along d') of the reconstructed face product A^d * f at
    the two d-faces of the cell, scale by 1/(24 h_d), and accumulate with the
    flux-difference sign.  Agrees with the closed-form
    :func:`transverse_correction` to O(h^2) on smooth data.
    """
    g = f.grid
    nd = g.ndim
    out = np.zeros(g.shape)

    def face_product(dim, base_off, extra):
        """A^dim * reconstructed face value at cell i shifted by ``extra``,
        face i + (base_off + 1/2) e^dim."""
        A = advection_speeds(g, species, E, _shift=extra)[dim]
        hi_p = 0.0
        hi_n = 0.0
        for w_u, w_d, o_u, o_d in zip(W_UP, W_DN, range(-2, 3), range(-1, 4)):
            z = [0] * nd
            z[dim] = base_off + o_u
            z2 = [0] * nd
            z2[dim] = base_off + o_d
            if extra is not None:
                z[extra[0]] += extra[1]
                z2[extra[0]] += extra[1]
            hi_p = hi_p + w_u * _shifted(f.data, g, z)
            hi_n = hi_n + w_d * _shifted(f.data, g, z2)
        return A * np.where(A > 0.0, hi_p, hi_n)

    for dim in range(nd):
        for dp in range(nd):
            if dp == dim:
                continue
            d2_hi = (
                face_product(dim, 0, (dp, 1))
                - 2.0 * face_product(dim, 0, None)
                + face_product(dim, 0, (dp, -1))
            )
            d2_lo = (
                face_product(dim, -1, (dp, 1))
                - 2.0 * face_product(dim, -1, None)
                + face_product(dim, -1, (dp, -1))
            )
            out -= (d2_hi - d2_lo) / (24.0 * g.h[dim])
    return out
