"""Phase-space grid geometry, padded cell-average storage, and local ghost fill.

Dimensions are ordered physical-first: ``(x[, y], vx[, vy])``.  Arrays are
C-ordered, so velocity dimensions vary fastest in memory (the layout the whole
code base assumes for its reductions and kernels).  Every dimension carries a
ghost pad of width 3 on each side: the five-point face reconstruction reads up
to +/-3 cells along each axis and the diagonal correction terms need +/-1
diagonals, which fit inside the same shell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NGHOST = 3


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform Cartesian phase-space grid.

    Parameters
    ----------
    d, v : int
        Number of physical and velocity dimensions.  ``v >= d`` and
        ``d + v in {2, 3, 4}``.
    N : tuple of int
        Interior cell count per dimension (physical dims first).
    lo, hi : tuple of float
        Domain bounds per dimension.
    periodic : tuple of bool
        Per-dimension periodicity.  Physical dimensions are periodic and
        velocity dimensions are not, except in synthetic all-periodic test
        configurations.
    """

    d: int
    v: int
    N: tuple
    lo: tuple
    hi: tuple
    periodic: tuple
    spacing: tuple = None  # explicit cell widths; None derives them from bounds

    @property
    def ndim(self):
        return self.d + self.v

    @property
    def h(self):
        if self.spacing is not None:
            return self.spacing
        return tuple((self.hi[k] - self.lo[k]) / self.N[k] for k in range(self.ndim))

    @property
    def shape(self):
        """Interior shape."""
        return tuple(self.N)

    @property
    def padded_shape(self):
        return tuple(n + 2 * NGHOST for n in self.N)

    @property
    def velocity_dims(self):
        return tuple(range(self.d, self.ndim))

    @property
    def physical_dims(self):
        return tuple(range(self.d))

    @property
    def cell_volume(self):
        vol = 1.0
        for hk in self.h:
            vol *= hk
        return vol

    def centers(self, dim):
        """Interior cell-center coordinates along ``dim``."""
        h = self.h[dim]
        return self.lo[dim] + (np.arange(self.N[dim]) + 0.5) * h

    def padded_centers(self, dim, wrap_periodic=True):
        """Cell-center coordinates for the padded index range [-3, N+3).

        For a periodic dimension the ghost coordinates are (by default) those
        of the wrapped interior cell, bitwise, so that evaluating a periodic
        function on ghost cells gives exactly the interior values it will be
        compared against.  Non-periodic (velocity) ghosts extend past the
        domain bounds.
        """
        idx = np.arange(-NGHOST, self.N[dim] + NGHOST)
        if self.periodic[dim] and wrap_periodic:
            idx = np.mod(idx, self.N[dim])
        h = self.h[dim]
        return self.lo[dim] + (idx + 0.5) * h

    def interior_slices(self):
        return tuple(slice(NGHOST, NGHOST + n) for n in self.N)


def make_grid(d, v, N, lo, hi, periodic=None, spacing=None):
    """Build a :class:`PhaseSpaceGrid`, validating the supported shapes.

    ``spacing`` pins the cell widths explicitly instead of deriving them
    from the bounds; partition-local grids use it so the local widths are
    bitwise equal to the global ones regardless of bound rounding.

    Raises
    ------
    ValueError
        On dimension mismatch, non-positive extent, ``v < d``, unsupported
        total dimensionality, or cell counts too small for the stencil.
    """
    if v < d:
        raise ValueError(f"need v >= d, got d={d}, v={v}")
    if d < 1:
        raise ValueError("need at least one physical dimension")
    ndim = d + v
    if ndim not in (2, 3, 4):
        raise ValueError(f"unsupported phase-space dimensionality d+v={ndim}")
    N = tuple(int(n) for n in N)
    lo = tuple(float(x) for x in lo)
    hi = tuple(float(x) for x in hi)
    if not (len(N) == len(lo) == len(hi) == ndim):
        raise ValueError(
            f"dimension mismatch: d+v={ndim} but len(N)={len(N)}, "
            f"len(lo)={len(lo)}, len(hi)={len(hi)}"
        )
    for k in range(ndim):
        if hi[k] <= lo[k]:
            raise ValueError(f"non-positive extent in dimension {k}: [{lo[k]}, {hi[k]}]")
        if N[k] < 8:
            raise ValueError(
                f"N[{k}]={N[k]} too small: stencil + correction footprint needs >= 8"
            )
    if periodic is None:
        periodic = tuple(k < d for k in range(ndim))
    else:
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != ndim:
            raise ValueError("periodic flags length mismatch")
    if spacing is not None:
        spacing = tuple(float(w) for w in spacing)
        if len(spacing) != ndim:
            raise ValueError("spacing length mismatch")
    return PhaseSpaceGrid(d=d, v=v, N=N, lo=lo, hi=hi, periodic=periodic, spacing=spacing)


def flat_index(grid, mi):
    """Flatten a (possibly ghost) multi-index over the padded box.

    ``mi`` uses interior-relative coordinates: interior cells are
    ``0 <= mi[k] < N[k]`` and ghosts extend to ``-3`` and ``N[k]+2``.
    Offsets of +1 in the last (fastest) dimension differ by 1.
    """
    off = 0
    for k in range(grid.ndim):
        c = mi[k] + NGHOST
        if not (0 <= c < grid.N[k] + 2 * NGHOST):
            raise IndexError(f"index {mi[k]} outside padded box in dimension {k}")
        off = off * (grid.N[k] + 2 * NGHOST) + c
    return off


def unflatten(grid, offset):
    """Inverse of :func:`flat_index`."""
    total = 1
    for n in grid.padded_shape:
        total *= n
    if not (0 <= offset < total):
        raise IndexError(f"offset {offset} outside padded box")
    mi = [0] * grid.ndim
    for k in range(grid.ndim - 1, -1, -1):
        npad = grid.N[k] + 2 * NGHOST
        mi[k] = offset % npad - NGHOST
        offset //= npad
    return tuple(mi)


@dataclass
class DistField:
    """Cell-average distribution function for one species on one partition.

    ``data`` covers the padded box (interior + 3-wide ghost shell in every
    dimension), C-ordered with velocity dimensions fastest.
    """

    grid: PhaseSpaceGrid
    species: str = "e"
    data: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.data is None:
            self.data = np.zeros(self.grid.padded_shape)
        if self.data.shape != self.grid.padded_shape:
            raise ValueError(
                f"storage shape {self.data.shape} != padded {self.grid.padded_shape}"
            )
        if self.data.dtype != np.float64:
            raise TypeError("cell averages must be float64")

    @property
    def interior(self):
        """View of the interior cells (no ghosts)."""
        return self.data[self.grid.interior_slices()]

    def copy(self):
        return DistField(grid=self.grid, species=self.species, data=self.data.copy())


class FrozenGhosts:
    """Velocity-boundary ghost slabs pinned at their initial-time values.

    Each non-periodic dimension contributes two slabs (low/high side), each
    spanning the full padded box in the other dimensions.  Slabs are captured
    once after initialization and written back verbatim on every ghost fill,
    so velocity-boundary ghosts are bitwise time-invariant across a run.
    """

    def __init__(self, slabs):
        self.slabs = slabs  # {(dim, side): ndarray}

    @classmethod
    def capture(cls, f: DistField):
        slabs = {}
        g = f.grid
        for k in range(g.ndim):
            if g.periodic[k]:
                continue
            n = g.N[k]
            lo_sl = [slice(None)] * g.ndim
            hi_sl = [slice(None)] * g.ndim
            lo_sl[k] = slice(0, NGHOST)
            hi_sl[k] = slice(n + NGHOST, n + 2 * NGHOST)
            slabs[(k, 0)] = f.data[tuple(lo_sl)].copy()
            slabs[(k, 1)] = f.data[tuple(hi_sl)].copy()
        return cls(slabs)


def fill_local_ghosts(f: DistField, frozen: FrozenGhosts = None):
    """Fill the ghost shell from local information.

    Non-periodic (velocity) dimensions get their frozen t=0 slabs; periodic
    dimensions get exact wrapped copies of interior columns.  The periodic
    wraps run last and copy whole columns -- including the velocity-ghost
    entries just written -- so corner regions are consistent with what a
    neighboring partition would send.
    """
    g = f.grid
    has_frozen_dims = not all(g.periodic)
    if has_frozen_dims:
        if frozen is None:
            raise ValueError("non-periodic dimensions present but no frozen ghost snapshot")
        for (k, side), slab in frozen.slabs.items():
            n = g.N[k]
            sl = [slice(None)] * g.ndim
            sl[k] = slice(0, NGHOST) if side == 0 else slice(n + NGHOST, n + 2 * NGHOST)
            f.data[tuple(sl)] = slab
    for k in range(g.ndim):
        if not g.periodic[k]:
            continue
        n = g.N[k]
        dst_lo = [slice(None)] * g.ndim
        src_lo = [slice(None)] * g.ndim
        dst_hi = [slice(None)] * g.ndim
        src_hi = [slice(None)] * g.ndim
        dst_lo[k] = slice(0, NGHOST)
        src_lo[k] = slice(n, n + NGHOST)
        dst_hi[k] = slice(n + NGHOST, n + 2 * NGHOST)
        src_hi[k] = slice(NGHOST, 2 * NGHOST)
        f.data[tuple(dst_lo)] = f.data[tuple(src_lo)]
        f.data[tuple(dst_hi)] = f.data[tuple(src_hi)]
    return f
