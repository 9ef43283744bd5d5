"""Fused compiled update kernels.

Each kernel performs one integrator stage in a single pass over the interior:

    dest = ca*A + cb*B + cd*dest + cL * RHS(src)

where RHS is the upwinded fourth-order flux difference plus the diagonal
transverse corrections, evaluated inline so no distribution-sized scratch
array is ever allocated.  ``cL`` carries the time-step factor.

The advection speed along a dimension never depends on that dimension's own
coordinate, so the upwind sign is uniform along each sweep line; the kernels
just test it per cell, which branch-predicts essentially perfectly.

Compiled serially and without fastmath: results must be bitwise reproducible
across partition layouts, and reassociation would break that.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .fvm import SpeciesConfig, _g, correction_coeffs
from .grid import NGHOST, PhaseSpaceGrid


# Hand-expanded face-difference f_{i+1/2} - f_{i-1/2} as one 6-point stencil:
#   A > 0 : offsets -3..+2 -> (-2, 15, -60, 20, 30, -3) / 60
#   A <= 0: offsets -2..+3 -> ( 3, -30, -20, 60, -15, 2) / 60


@njit(cache=True)
def _first_nonfinite_2d(a):
    for i in range(NGHOST, a.shape[0] - NGHOST):
        for j in range(NGHOST, a.shape[1] - NGHOST):
            if not np.isfinite(a[i, j]):
                return i * a.shape[1] + j
    return -1


@njit(cache=True)
def _first_nonfinite_3d(a):
    for i in range(NGHOST, a.shape[0] - NGHOST):
        for j in range(NGHOST, a.shape[1] - NGHOST):
            for k in range(NGHOST, a.shape[2] - NGHOST):
                if not np.isfinite(a[i, j, k]):
                    return (i * a.shape[1] + j) * a.shape[2] + k
    return -1


@njit(cache=True)
def _first_nonfinite_4d(a):
    for i in range(NGHOST, a.shape[0] - NGHOST):
        for j in range(NGHOST, a.shape[1] - NGHOST):
            for k in range(NGHOST, a.shape[2] - NGHOST):
                for l in range(NGHOST, a.shape[3] - NGHOST):
                    if not np.isfinite(a[i, j, k, l]):
                        return ((i * a.shape[1] + j) * a.shape[2] + k) * a.shape[3] + l
    return -1


_FIRST_NONFINITE = {2: _first_nonfinite_2d, 3: _first_nonfinite_3d, 4: _first_nonfinite_4d}


@njit(cache=True, fastmath=False, inline="always")
def _fd_pos_2d(s, i, j, axis):
    if axis == 0:
        return (
            -2.0 * s[i - 3, j] + 15.0 * s[i - 2, j] - 60.0 * s[i - 1, j]
            + 20.0 * s[i, j] + 30.0 * s[i + 1, j] - 3.0 * s[i + 2, j]
        ) / 60.0
    return (
        -2.0 * s[i, j - 3] + 15.0 * s[i, j - 2] - 60.0 * s[i, j - 1]
        + 20.0 * s[i, j] + 30.0 * s[i, j + 1] - 3.0 * s[i, j + 2]
    ) / 60.0


@njit(cache=True, fastmath=False, inline="always")
def _fd_neg_2d(s, i, j, axis):
    if axis == 0:
        return (
            3.0 * s[i - 2, j] - 30.0 * s[i - 1, j] - 20.0 * s[i, j]
            + 60.0 * s[i + 1, j] - 15.0 * s[i + 2, j] + 2.0 * s[i + 3, j]
        ) / 60.0
    return (
        3.0 * s[i, j - 2] - 30.0 * s[i, j - 1] - 20.0 * s[i, j]
        + 60.0 * s[i, j + 1] - 15.0 * s[i, j + 2] + 2.0 * s[i, j + 3]
    ) / 60.0


@njit(cache=True, fastmath=False)
def stage_1d1v(dest, A, B, src, ca, cb, cd, cL, ax, avx, c1, hx, hv):
    """One fused stage for a (1,1) padded layout (x, vx)."""
    Nx = dest.shape[0] - 2 * NGHOST
    Nv = dest.shape[1] - 2 * NGHOST
    for i in range(NGHOST, Nx + NGHOST):
        a_v = avx[i - NGHOST]
        c1i = c1[i - NGHOST]
        for j in range(NGHOST, Nv + NGHOST):
            a_x = ax[j - NGHOST]
            if a_x > 0.0:
                rhs = -a_x * _fd_pos_2d(src, i, j, 0) / hx
            else:
                rhs = -a_x * _fd_neg_2d(src, i, j, 0) / hx
            if a_v > 0.0:
                rhs -= a_v * _fd_pos_2d(src, i, j, 1) / hv
            else:
                rhs -= a_v * _fd_neg_2d(src, i, j, 1) / hv
            rhs += c1i * (
                src[i + 1, j - 1] + src[i - 1, j + 1]
                - src[i + 1, j + 1] - src[i - 1, j - 1]
            )
            dest[i, j] = ca * A[i, j] + cb * B[i, j] + cd * dest[i, j] + cL * rhs


@njit(cache=True, fastmath=False, inline="always")
def _fd_pos_3d(s, i, j, k, axis):
    if axis == 0:
        return (
            -2.0 * s[i - 3, j, k] + 15.0 * s[i - 2, j, k] - 60.0 * s[i - 1, j, k]
            + 20.0 * s[i, j, k] + 30.0 * s[i + 1, j, k] - 3.0 * s[i + 2, j, k]
        ) / 60.0
    if axis == 1:
        return (
            -2.0 * s[i, j - 3, k] + 15.0 * s[i, j - 2, k] - 60.0 * s[i, j - 1, k]
            + 20.0 * s[i, j, k] + 30.0 * s[i, j + 1, k] - 3.0 * s[i, j + 2, k]
        ) / 60.0
    return (
        -2.0 * s[i, j, k - 3] + 15.0 * s[i, j, k - 2] - 60.0 * s[i, j, k - 1]
        + 20.0 * s[i, j, k] + 30.0 * s[i, j, k + 1] - 3.0 * s[i, j, k + 2]
    ) / 60.0


@njit(cache=True, fastmath=False, inline="always")
def _fd_neg_3d(s, i, j, k, axis):
    if axis == 0:
        return (
            3.0 * s[i - 2, j, k] - 30.0 * s[i - 1, j, k] - 20.0 * s[i, j, k]
            + 60.0 * s[i + 1, j, k] - 15.0 * s[i + 2, j, k] + 2.0 * s[i + 3, j, k]
        ) / 60.0
    if axis == 1:
        return (
            3.0 * s[i, j - 2, k] - 30.0 * s[i, j - 1, k] - 20.0 * s[i, j, k]
            + 60.0 * s[i, j + 1, k] - 15.0 * s[i, j + 2, k] + 2.0 * s[i, j + 3, k]
        ) / 60.0
    return (
        3.0 * s[i, j, k - 2] - 30.0 * s[i, j, k - 1] - 20.0 * s[i, j, k]
        + 60.0 * s[i, j, k + 1] - 15.0 * s[i, j, k + 2] + 2.0 * s[i, j, k + 3]
    ) / 60.0


@njit(cache=True, fastmath=False)
def stage_1d2v(
    dest, A, B, src, ca, cb, cd, cL,
    vxc, vyc, evx, avy, c1, c2, hx, hvx, hvy,
):
    """One fused stage for a (1,2) padded layout (x, vx, vy).

    Speeds: A^x = vxc[j], A^vx = evx[i] + cB*vyc[k] (cB folded into vyc by the
    caller is NOT done -- evx and the cB factor stay separate), A^vy = avy[j].
    """
    Nx = dest.shape[0] - 2 * NGHOST
    Nvx = dest.shape[1] - 2 * NGHOST
    Nvy = dest.shape[2] - 2 * NGHOST
    cB = vyc[Nvy]  # trailing slot carries the magnetic factor
    for i in range(NGHOST, Nx + NGHOST):
        e_i = evx[i - NGHOST]
        c1i = c1[i - NGHOST]
        for j in range(NGHOST, Nvx + NGHOST):
            a_x = vxc[j - NGHOST]
            a_vy = avy[j - NGHOST]
            for k in range(NGHOST, Nvy + NGHOST):
                if a_x > 0.0:
                    rhs = -a_x * _fd_pos_3d(src, i, j, k, 0) / hx
                else:
                    rhs = -a_x * _fd_neg_3d(src, i, j, k, 0) / hx
                a_vx = e_i + cB * vyc[k - NGHOST]
                if a_vx > 0.0:
                    rhs -= a_vx * _fd_pos_3d(src, i, j, k, 1) / hvx
                else:
                    rhs -= a_vx * _fd_neg_3d(src, i, j, k, 1) / hvx
                if a_vy > 0.0:
                    rhs -= a_vy * _fd_pos_3d(src, i, j, k, 2) / hvy
                else:
                    rhs -= a_vy * _fd_neg_3d(src, i, j, k, 2) / hvy
                rhs += c1i * (
                    src[i + 1, j - 1, k] + src[i - 1, j + 1, k]
                    - src[i + 1, j + 1, k] - src[i - 1, j - 1, k]
                )
                rhs -= c2 * (
                    src[i, j + 1, k - 1] + src[i, j - 1, k + 1]
                    - src[i, j + 1, k + 1] - src[i, j - 1, k - 1]
                )
                dest[i, j, k] = (
                    ca * A[i, j, k] + cb * B[i, j, k] + cd * dest[i, j, k] + cL * rhs
                )


@njit(cache=True, fastmath=False, inline="always")
def _fd_pos_4d(s, i, j, k, l, axis):
    if axis == 0:
        return (
            -2.0 * s[i - 3, j, k, l] + 15.0 * s[i - 2, j, k, l]
            - 60.0 * s[i - 1, j, k, l] + 20.0 * s[i, j, k, l]
            + 30.0 * s[i + 1, j, k, l] - 3.0 * s[i + 2, j, k, l]
        ) / 60.0
    if axis == 1:
        return (
            -2.0 * s[i, j - 3, k, l] + 15.0 * s[i, j - 2, k, l]
            - 60.0 * s[i, j - 1, k, l] + 20.0 * s[i, j, k, l]
            + 30.0 * s[i, j + 1, k, l] - 3.0 * s[i, j + 2, k, l]
        ) / 60.0
    if axis == 2:
        return (
            -2.0 * s[i, j, k - 3, l] + 15.0 * s[i, j, k - 2, l]
            - 60.0 * s[i, j, k - 1, l] + 20.0 * s[i, j, k, l]
            + 30.0 * s[i, j, k + 1, l] - 3.0 * s[i, j, k + 2, l]
        ) / 60.0
    return (
        -2.0 * s[i, j, k, l - 3] + 15.0 * s[i, j, k, l - 2]
        - 60.0 * s[i, j, k, l - 1] + 20.0 * s[i, j, k, l]
        + 30.0 * s[i, j, k, l + 1] - 3.0 * s[i, j, k, l + 2]
    ) / 60.0


@njit(cache=True, fastmath=False, inline="always")
def _fd_neg_4d(s, i, j, k, l, axis):
    if axis == 0:
        return (
            3.0 * s[i - 2, j, k, l] - 30.0 * s[i - 1, j, k, l]
            - 20.0 * s[i, j, k, l] + 60.0 * s[i + 1, j, k, l]
            - 15.0 * s[i + 2, j, k, l] + 2.0 * s[i + 3, j, k, l]
        ) / 60.0
    if axis == 1:
        return (
            3.0 * s[i, j - 2, k, l] - 30.0 * s[i, j - 1, k, l]
            - 20.0 * s[i, j, k, l] + 60.0 * s[i, j + 1, k, l]
            - 15.0 * s[i, j + 2, k, l] + 2.0 * s[i, j + 3, k, l]
        ) / 60.0
    if axis == 2:
        return (
            3.0 * s[i, j, k - 2, l] - 30.0 * s[i, j, k - 1, l]
            - 20.0 * s[i, j, k, l] + 60.0 * s[i, j, k + 1, l]
            - 15.0 * s[i, j, k + 2, l] + 2.0 * s[i, j, k + 3, l]
        ) / 60.0
    return (
        3.0 * s[i, j, k, l - 2] - 30.0 * s[i, j, k, l - 1]
        - 20.0 * s[i, j, k, l] + 60.0 * s[i, j, k, l + 1]
        - 15.0 * s[i, j, k, l + 2] + 2.0 * s[i, j, k, l + 3]
    ) / 60.0


@njit(cache=True, fastmath=False)
def stage_2d2v(
    dest, A, B, src, ca, cb, cd, cL,
    vxc, vyc, evx, evy, cB, c1, c2, c3, c4, c5, hx, hy, hvx, hvy,
):
    """One fused stage for a (2,2) padded layout (x, y, vx, vy)."""
    Nx = dest.shape[0] - 2 * NGHOST
    Ny = dest.shape[1] - 2 * NGHOST
    Nvx = dest.shape[2] - 2 * NGHOST
    Nvy = dest.shape[3] - 2 * NGHOST
    for i in range(NGHOST, Nx + NGHOST):
        for j in range(NGHOST, Ny + NGHOST):
            e_x = evx[i - NGHOST, j - NGHOST]
            e_y = evy[i - NGHOST, j - NGHOST]
            c1ij = c1[i - NGHOST, j - NGHOST]
            c3ij = c3[i - NGHOST, j - NGHOST]
            c4ij = c4[i - NGHOST, j - NGHOST]
            c5ij = c5[i - NGHOST, j - NGHOST]
            for k in range(NGHOST, Nvx + NGHOST):
                a_x = vxc[k - NGHOST]
                a_vy = e_y - cB * vxc[k - NGHOST]
                for l in range(NGHOST, Nvy + NGHOST):
                    a_y = vyc[l - NGHOST]
                    a_vx = e_x + cB * vyc[l - NGHOST]
                    if a_x > 0.0:
                        rhs = -a_x * _fd_pos_4d(src, i, j, k, l, 0) / hx
                    else:
                        rhs = -a_x * _fd_neg_4d(src, i, j, k, l, 0) / hx
                    if a_y > 0.0:
                        rhs -= a_y * _fd_pos_4d(src, i, j, k, l, 1) / hy
                    else:
                        rhs -= a_y * _fd_neg_4d(src, i, j, k, l, 1) / hy
                    if a_vx > 0.0:
                        rhs -= a_vx * _fd_pos_4d(src, i, j, k, l, 2) / hvx
                    else:
                        rhs -= a_vx * _fd_neg_4d(src, i, j, k, l, 2) / hvx
                    if a_vy > 0.0:
                        rhs -= a_vy * _fd_pos_4d(src, i, j, k, l, 3) / hvy
                    else:
                        rhs -= a_vy * _fd_neg_4d(src, i, j, k, l, 3) / hvy
                    rhs += c1ij * (
                        src[i + 1, j, k - 1, l] + src[i - 1, j, k + 1, l]
                        - src[i + 1, j, k + 1, l] - src[i - 1, j, k - 1, l]
                    )
                    rhs += c4ij * (
                        src[i, j + 1, k, l - 1] + src[i, j - 1, k, l + 1]
                        - src[i, j + 1, k, l + 1] - src[i, j - 1, k, l - 1]
                    )
                    rhs -= c2 * (
                        src[i, j, k + 1, l - 1] + src[i, j, k - 1, l + 1]
                        - src[i, j, k + 1, l + 1] - src[i, j, k - 1, l - 1]
                    )
                    rhs -= c3ij * (
                        src[i, j + 1, k - 1, l] + src[i, j - 1, k + 1, l]
                        - src[i, j + 1, k + 1, l] - src[i, j - 1, k - 1, l]
                    )
                    rhs -= c5ij * (
                        src[i + 1, j, k, l - 1] + src[i - 1, j, k, l + 1]
                        - src[i + 1, j, k, l + 1] - src[i - 1, j, k, l - 1]
                    )
                    dest[i, j, k, l] = (
                        ca * A[i, j, k, l] + cb * B[i, j, k, l]
                        + cd * dest[i, j, k, l] + cL * rhs
                    )


def fused_stage(dest, A, B, src, ca, cb, cd, cL, grid: PhaseSpaceGrid,
                species: SpeciesConfig, E, check=True):
    """Dispatch one fused integrator stage on padded arrays.

    ``dest`` must not alias ``src`` (every cell reads a stencil of ``src``);
    aliasing ``A``/``B`` with any other buffer is fine since they are read at
    the updated cell only.  ``cL`` carries the time-step factor.
    """
    if dest is src:
        raise ValueError("dest must not alias src")
    s = species
    gx, gy = _g(s)[:2]
    cB = s.qm * s.kappa_c * s.Bz
    coeffs = correction_coeffs(grid, s, E)
    h = grid.h
    if grid.d == 1 and grid.v == 1:
        ax = np.ascontiguousarray(grid.centers(1))
        avx = s.qm * s.kappa2 * np.asarray(E["Ex"]) + gx
        stage_1d1v(dest, A, B, src, ca, cb, cd, cL,
                   ax, np.ascontiguousarray(avx),
                   np.ascontiguousarray(coeffs["c1"]), h[0], h[1])
    elif grid.d == 1 and grid.v == 2:
        vxc = np.ascontiguousarray(grid.centers(1))
        # trailing slot of vyc carries cB so the kernel signature stays small
        vyc = np.empty(grid.N[2] + 1)
        vyc[:-1] = grid.centers(2)
        vyc[-1] = cB
        evx = s.qm * s.kappa2 * np.asarray(E["Ex"]) + gx
        avy = -cB * grid.centers(1) + gy
        stage_1d2v(dest, A, B, src, ca, cb, cd, cL,
                   vxc, vyc, np.ascontiguousarray(evx), np.ascontiguousarray(avy),
                   np.ascontiguousarray(coeffs["c1"]), float(coeffs["c2"]),
                   h[0], h[1], h[2])
    elif grid.d == 2 and grid.v == 2:
        vxc = np.ascontiguousarray(grid.centers(2))
        vyc = np.ascontiguousarray(grid.centers(3))
        evx = s.qm * s.kappa2 * np.asarray(E["Ex"]) + gx
        evy = s.qm * s.kappa2 * np.asarray(E["Ey"]) + gy
        stage_2d2v(dest, A, B, src, ca, cb, cd, cL,
                   vxc, vyc,
                   np.ascontiguousarray(evx), np.ascontiguousarray(evy), cB,
                   np.ascontiguousarray(coeffs["c1"]), float(coeffs["c2"]),
                   np.ascontiguousarray(coeffs["c3"]),
                   np.ascontiguousarray(coeffs["c4"]),
                   np.ascontiguousarray(coeffs["c5"]),
                   h[0], h[1], h[2], h[3])
    else:
        raise ValueError(f"unsupported dimensionality ({grid.d},{grid.v})")
    if check:
        flat = _FIRST_NONFINITE[grid.ndim](dest)
        if flat >= 0:
            padded = np.unravel_index(flat, dest.shape)
            mi = tuple(int(x) - NGHOST for x in padded)
            raise FloatingPointError(f"non-finite stage output at interior index {mi}")
