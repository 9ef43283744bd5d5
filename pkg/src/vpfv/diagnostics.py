"""Conserved-quantity rows, growth-rate fits, Richardson error, snapshots.

Definitions (cell-average arithmetic throughout):

* mass        M_s  = sum_cells f_s * cell volume (deterministic fold tree)
* momentum    P    = | sum_s m_s * integral of v f_s |   (Euclidean norm)
* field       U_E  = integral of |E|^2 / 2 over the physical box
* kinetic     K    = sum_s m_s * integral of |v|^2 f_s / 2
* total       W    = U_E + K   (definitional identity, exact by construction)
* amplitude ``normE`` = sqrt(integral of E.E dx)

Growth rates are always fitted on the field *amplitude*; conventions that
fit the field energy instead produce rates twice as large, so energy-based
literature values must be halved before comparison.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .fields import fold_tree_sum, higher_moments
from .grid import DistField, make_grid

#: Columns of the diagnostics CSV, in order; ``mass_<name>`` expands per
#: species.  Bump the schema tag when the layout changes.
DIAGNOSTICS_SCHEMA = "vpfv-diagnostics-1"
SNAPSHOT_MAGIC = b"VPFV"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class DiagnosticsRow:
    """One sampled instant of the conserved-quantity ledger."""

    t: float
    dt: float
    mass: tuple  # (name, M_s) pairs, species order
    momentum: float
    field_energy: float
    kinetic_energy: float
    total_energy: float
    field_amplitude: float

    @staticmethod
    def header(species_names):
        cols = ["t", "dt"]
        cols += [f"mass_{name}" for name in species_names]
        cols += [
            "momentum",
            "field_energy",
            "kinetic_energy",
            "total_energy",
            "field_amplitude",
        ]
        return cols

    def values(self):
        vals = [self.t, self.dt]
        vals += [m for _, m in self.mass]
        vals += [
            self.momentum,
            self.field_energy,
            self.kinetic_energy,
            self.total_energy,
            self.field_amplitude,
        ]
        return vals


def field_amplitude(E, grid):
    """sqrt(integral of E.E dx) over the physical box."""
    total = 0.0
    vol = 1.0
    for k in range(grid.d):
        vol *= grid.h[k]
    for comp in E.values():
        total += float(np.sum(np.square(comp)))
    return math.sqrt(total * vol)


def conserved_quantities(dists, species, state, t, dt):
    """Build one :class:`DiagnosticsRow` from synchronized fields.

    ``dists`` must have current ghost values (the moment lifts difference
    into the velocity ghost layer) and ``state`` the field solve for the
    same instant.
    """
    masses = []
    momentum_h = None
    kinetic = 0.0
    for f, sp in zip(dists, species):
        g = f.grid
        cellvol = 1.0
        for k in range(g.ndim):
            cellvol *= g.h[k]
        interior = f.data[g.interior_slices()]
        masses.append((sp.name, float(fold_tree_sum(interior, tuple(range(g.ndim)))) * cellvol))
        mom, kin = higher_moments(f)
        physvol = 1.0
        for k in range(g.d):
            physvol *= g.h[k]
        if momentum_h is None:
            momentum_h = [0.0] * len(mom)
        for k, mk in enumerate(mom):
            momentum_h[k] += sp.m * float(np.sum(mk)) * physvol
        kinetic += sp.m * float(np.sum(kin)) * physvol
    grid0 = dists[0].grid
    U_E = 0.5 * field_amplitude(state.E, grid0) ** 2
    return DiagnosticsRow(
        t=t,
        dt=dt,
        mass=tuple(masses),
        momentum=math.sqrt(sum(p * p for p in momentum_h)),
        field_energy=U_E,
        kinetic_energy=kinetic,
        total_energy=U_E + kinetic,
        field_amplitude=field_amplitude(state.E, grid0),
    )


def rows_to_csv(rows, species_names):
    """Render diagnostics rows as CSV text (17 significant digits)."""
    lines = [",".join(DiagnosticsRow.header(species_names))]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in row.values()))
    return "\n".join(lines) + "\n"


def fit_growth_rate(t, amplitude, window):
    """Least-squares exponential rate of ``amplitude`` over ``window``.

    Fits log(amplitude) = a + gamma*t on samples with window[0] <= t <=
    window[1] and returns (gamma, stderr).  Damping gives negative gamma.
    """
    t = np.asarray(t, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    lo, hi = window
    keep = (t >= lo) & (t <= hi)
    if int(np.count_nonzero(keep)) < 10:
        raise ValueError(
            f"window [{lo}, {hi}] holds {int(np.count_nonzero(keep))} samples; need >= 10"
        )
    ts = t[keep]
    amps = amplitude[keep]
    if np.any(amps <= 0.0):
        raise ValueError("amplitude must be positive on the fit window")
    y = np.log(amps)
    n = ts.size
    tm = ts.mean()
    ym = y.mean()
    sxx = float(np.sum((ts - tm) ** 2))
    gamma = float(np.sum((ts - tm) * (y - ym)) / sxx)
    resid = y - (ym + gamma * (ts - tm))
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return gamma, stderr


def richardson_error(f_N, f_2N):
    """Volume-weighted L1 difference between a field and its refinement.

    ``f_2N`` must hold exactly twice the cells of ``f_N`` along every
    dimension; it is aggregated exactly (the parent cell average is the
    arithmetic mean of its 2^D equal-volume children) before differencing.
    """
    a = np.asarray(f_N, dtype=float)
    b = np.asarray(f_2N, dtype=float)
    if a.ndim != b.ndim or any(2 * na != nb for na, nb in zip(a.shape, b.shape)):
        raise ValueError(
            f"refinement shape {b.shape} is not double of {a.shape} everywhere"
        )
    shape = []
    for na in a.shape:
        shape += [na, 2]
    coarse = b.reshape(shape).mean(axis=tuple(range(1, 2 * a.ndim, 2)))
    return float(np.mean(np.abs(a - coarse)))


# ---------------------------------------------------------------------------
# Snapshot format: header + row-major little-endian float64 interior


def write_snapshot(path, dist: DistField, time, species=None):
    """Write one species' interior cell averages with grid metadata.

    Layout (all little-endian): magic ``VPFV``, u32 version, u32 d, u32 v,
    u32 name length + utf-8 species tag, f64 time, then per dimension
    u64 N, f64 lo, f64 hi, then the interior cells row-major as f64.
    """
    g = dist.grid
    name = (species if species is not None else dist.species).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, g.d, g.v))
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<d", float(time)))
        for k in range(g.ndim):
            fh.write(struct.pack("<Qdd", g.N[k], g.lo[k], g.hi[k]))
        interior = np.ascontiguousarray(dist.data[g.interior_slices()])
        fh.write(interior.astype("<f8", copy=False).tobytes())


def read_snapshot(path):
    """Read a snapshot back into (DistField, time); bitwise round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"not a snapshot file: magic {magic!r}")
        version, d, v = struct.unpack("<III", fh.read(12))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        (nlen,) = struct.unpack("<I", fh.read(4))
        name = fh.read(nlen).decode("utf-8")
        (time,) = struct.unpack("<d", fh.read(8))
        N, lo, hi = [], [], []
        for _ in range(d + v):
            Nk, lok, hik = struct.unpack("<Qdd", fh.read(24))
            N.append(int(Nk))
            lo.append(lok)
            hi.append(hik)
        grid = make_grid(d, v, tuple(N), tuple(lo), tuple(hi))
        count = int(np.prod(N))
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise ValueError("snapshot truncated")
        interior = np.frombuffer(raw, dtype="<f8").reshape(tuple(N))
    f = DistField(grid, species=name)
    f.data[grid.interior_slices()] = interior
    return f, time
