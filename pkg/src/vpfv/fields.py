"""Velocity moments, charge density, and the spectral periodic Poisson solve.

Two moment schedules are provided and must agree to summation-order roundoff:

* ``velocity-major`` — a deterministic adjacent-pair fold tree over each
  velocity axis, innermost (fastest) axis first.  The fixed tree makes the
  result bitwise reproducible run to run, and — when every rank owns a
  power-of-two span of each velocity axis — bitwise identical to a segmented
  fold followed by pairwise cross-rank combines.
* ``position-major`` — a compiled sequential sum over velocity space per
  physical cell (lexicographic order).

The Poisson solve is purely spectral on the periodic physical box:
phi_hat = rho_hat/|k|^2 (zero-mean gauge), E = -grad(phi) by spectral
differentiation, with the Nyquist mode dropped from derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .grid import NGHOST, DistField, PhaseSpaceGrid


def _fold_axis_tree(x, axis):
    """Reduce ``axis`` to length 1 by adjacent-pair rounds (odd tail carried)."""
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    while n > 1:
        m = n // 2
        s = x[..., 0 : 2 * m : 2] + x[..., 1 : 2 * m : 2]
        if n % 2:
            s = np.concatenate([s, x[..., 2 * m :]], axis=-1)
        x = s
        n = x.shape[-1]
    return np.moveaxis(x, -1, axis)


def fold_tree_sum(x, axes):
    """Deterministic pairwise-tree sum over ``axes``, fastest axis first."""
    out = np.array(x, dtype=np.float64, copy=True)
    for ax in sorted(axes, reverse=True):
        out = _fold_axis_tree(out, ax)
    return np.squeeze(out, axis=tuple(sorted(axes)))


@njit(cache=True)
def _seq_moment_2d(data, Nx, Nv):
    out = np.empty(Nx)
    for i in range(Nx):
        s = 0.0
        for j in range(Nv):
            s += data[NGHOST + i, NGHOST + j]
        out[i] = s
    return out


@njit(cache=True)
def _seq_moment_3d(data, Nx, Nvx, Nvy):
    out = np.empty(Nx)
    for i in range(Nx):
        s = 0.0
        for j in range(Nvx):
            for k in range(Nvy):
                s += data[NGHOST + i, NGHOST + j, NGHOST + k]
        out[i] = s
    return out


@njit(cache=True)
def _seq_moment_4d(data, Nx, Ny, Nvx, Nvy):
    out = np.empty((Nx, Ny))
    for i in range(Nx):
        for j in range(Ny):
            s = 0.0
            for k in range(Nvx):
                for l in range(Nvy):
                    s += data[NGHOST + i, NGHOST + j, NGHOST + k, NGHOST + l]
            out[i, j] = s
    return out


def zeroth_moment(f: DistField, schedule="velocity-major"):
    """Number density n(x) = sum over velocity cells of f * prod(h_v).

    ``schedule="velocity-major"`` uses the deterministic fold tree;
    ``"position-major"`` the compiled per-cell sequential sum; ``"free"``
    the library reduction (performance experiments only — no fixed order).
    """
    g = f.grid
    interior = f.data[g.interior_slices()]
    vol = 1.0
    for k in g.velocity_dims:
        vol *= g.h[k]
    if schedule == "velocity-major":
        n = fold_tree_sum(interior, tuple(g.velocity_dims))
    elif schedule == "position-major":
        if g.ndim == 2:
            n = _seq_moment_2d(f.data, g.N[0], g.N[1])
        elif g.ndim == 3:
            n = _seq_moment_3d(f.data, g.N[0], g.N[1], g.N[2])
        else:
            n = _seq_moment_4d(f.data, g.N[0], g.N[1], g.N[2], g.N[3])
    elif schedule == "free":
        n = interior.sum(axis=tuple(g.velocity_dims))
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    return n * vol


def _center_diff(f: DistField, dim):
    """(f_{i+e} - f_{i-e}) / (2 h) over the interior; ghosts must be synced."""
    g = f.grid
    lo = [0] * g.ndim
    hi = [0] * g.ndim
    lo[dim] = -1
    hi[dim] = 1

    def sh(off):
        sl = tuple(
            slice(NGHOST + o, NGHOST + o + n) for o, n in zip(off, g.N)
        )
        return f.data[sl]

    return (sh(hi) - sh(lo)) / (2.0 * g.h[dim])


def higher_moments(f: DistField):
    """Momentum and kinetic-energy densities on the physical grid.

    Uses the midpoint-to-average lift: <v f> = v_c*f + (h^2/12) df/dv and
    <v^2 f> = (v_c^2 + h^2/12) f + (h^2/6) v_c df/dv per velocity dimension,
    then sums over velocity space.  Ghosts must be synchronized (the
    correction differences reach into them at the velocity boundary).

    Returns (momentum, kinetic): ``momentum`` is a list of physical-grid
    arrays, one per velocity dimension; ``kinetic`` is (1/2) sum_d <v_d^2 f>.
    """
    g = f.grid
    interior = f.data[g.interior_slices()]
    vol = 1.0
    for k in g.velocity_dims:
        vol *= g.h[k]
    vaxes = tuple(g.velocity_dims)
    momentum = []
    kinetic = 0.0
    for d in g.velocity_dims:
        vc = g.centers(d)
        shape = [1] * g.ndim
        shape[d] = g.N[d]
        vcb = vc.reshape(shape)
        h2 = g.h[d] ** 2
        dfd = _center_diff(f, d)
        mom_cell = vcb * interior + (h2 / 12.0) * dfd
        en_cell = (vcb**2 + h2 / 12.0) * interior + (h2 / 6.0) * vcb * dfd
        momentum.append(mom_cell.sum(axis=vaxes) * vol)
        kinetic = kinetic + en_cell.sum(axis=vaxes) * vol
    return momentum, 0.5 * kinetic


def charge_density(densities, species):
    """rho_c = sum_s q_s n_s, then neutralized to zero mean."""
    rho = None
    for n_s, sp in zip(densities, species):
        rho = sp.q * n_s if rho is None else rho + sp.q * n_s
    return rho - np.mean(rho)


def poisson_solve(rho, grid: PhaseSpaceGrid):
    """Spectral solve of grad^2 phi = -rho_c on the periodic physical box.

    Returns (phi, E) with E a dict of components; phi has zero mean and each
    E component zero mean.  Nyquist modes are excluded from derivatives.
    """
    rho = np.asarray(rho)
    d = grid.d
    if rho.ndim != d:
        raise ValueError("charge density must live on the physical grid")
    scale = np.max(np.abs(rho)) if rho.size else 0.0
    if abs(np.mean(rho)) > 1e-10 * max(scale, 1.0):
        raise ValueError("poisson_solve requires zero-mean charge density")
    ks = [
        2.0 * np.pi * np.fft.fftfreq(grid.N[i], d=grid.h[i]) for i in range(d)
    ]
    if d == 1:
        k = ks[0]
        rhohat = np.fft.fft(rho)
        k2 = k**2
        phihat = np.zeros_like(rhohat)
        phihat[1:] = rhohat[1:] / k2[1:]
        kd = k.copy()
        if grid.N[0] % 2 == 0:
            kd[grid.N[0] // 2] = 0.0  # Nyquist derivative is ambiguous
        Ehat = -1j * kd * phihat
        phi = np.fft.ifft(phihat).real
        return phi, {"Ex": np.fft.ifft(Ehat).real}
    kx = ks[0][:, None]
    ky = ks[1][None, :]
    rhohat = np.fft.fftn(rho)
    k2 = kx**2 + ky**2
    phihat = np.where(k2 > 0.0, rhohat / np.where(k2 > 0.0, k2, 1.0), 0.0)
    kxd, kyd = kx.copy(), ky.copy()
    if grid.N[0] % 2 == 0:
        kxd[grid.N[0] // 2, 0] = 0.0
    if grid.N[1] % 2 == 0:
        kyd[0, grid.N[1] // 2] = 0.0
    Ex = np.fft.ifftn(-1j * kxd * phihat).real
    Ey = np.fft.ifftn(-1j * kyd * phihat).real
    phi = np.fft.ifftn(phihat).real
    return phi, {"Ex": Ex, "Ey": Ey}


@dataclass
class FieldState:
    """Densities and electrostatic fields on the physical grid."""

    n: dict
    rho: np.ndarray
    phi: np.ndarray
    E: dict
    max_E: dict = field(default_factory=dict)

    @classmethod
    def solve(cls, dists, species, schedule="velocity-major"):
        """Moments -> neutralized charge density -> potential and field."""
        grid = dists[0].grid
        densities = [zeroth_moment(f, schedule) for f in dists]
        rho = charge_density(densities, species)
        phi, E = poisson_solve(rho, grid)
        return cls(
            n={sp.name: ns for sp, ns in zip(species, densities)},
            rho=rho,
            phi=phi,
            E=E,
            max_E={k: float(np.max(np.abs(v))) for k, v in E.items()},
        )
