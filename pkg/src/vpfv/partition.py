"""Domain partitioning and the simulated multi-rank communication model.

The phase-space box of each species is tiled by a grid of partitions
(uniform boxes).  Partitions of different species that are co-located in
physical space may share a rank.  Three communication kinds are modeled:

* ``ghost`` — halo synchronization of the distribution function.  Face
  segments are three cells deep (the upwind stencil footprint); diagonal
  edge segments are one cell deep and are generated only for the dimension
  pairs the transverse flux corrections actually couple (the reduced
  pair set), with strategy flags restoring the full pair set or the whole
  ghost shell for accounting studies.
* ``reduce`` — pairwise combines of partial velocity moments across
  velocity-split partitions.  The combine order reproduces the
  deterministic fold tree of :func:`vpfv.fields.fold_tree_sum` block by
  block, so multi-rank density sums are bitwise equal to single-rank ones
  whenever each partition's span along every velocity axis is a power of
  two.
* ``field`` — redistribution of the solved electrostatic field.

Everything runs in one process: ranks are isolated array states, and
transfers are buffer copies at stage barriers, recorded in a
:class:`TrafficLog` that substitutes for wire measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .grid import NGHOST, DistField, PhaseSpaceGrid, make_grid


def _payload(field_or_array):
    """Padded ndarray behind either a DistField or a bare array."""
    if isinstance(field_or_array, DistField):
        return field_or_array.data
    return np.asarray(field_or_array)


# ---------------------------------------------------------------------------
# Neighbor-pair counting


def neighbor_pairs(d, v):
    """Communication-pair counts for a partition inside a full 3^(d+v) block.

    Returns ``{"N_all", "N_FVM", "N_VP"}``: every neighbor in the hypercube
    shell; axis faces plus all width-1 diagonal edges of the general
    fourth-order stencil; and the reduced set exploiting which dimension
    pairs the electrostatic flux corrections actually couple.
    """
    if d < 1 or v < d:
        raise ValueError(f"need d >= 1 and v >= d, got d={d}, v={v}")
    D = d + v
    return {
        "N_all": 3**D - 1,
        "N_FVM": 2 * D * D,
        "N_VP": 2 * D * D - 4 * math.comb(d, 2) - 4 * (v - d) * d,
    }


def correction_edge_pairs(d, v):
    """Unordered dimension pairs whose diagonal ghosts the corrections read.

    A pair is coupled when the advection speed along one member varies along
    the other: position fluxes vary along the conjugate velocity dimension;
    velocity fluxes vary along every physical dimension whose field component
    exists (the first ``d`` velocity components) and, through the magnetic
    rotation, along the other in-plane velocity dimension.
    """
    if d < 1 or v < d:
        raise ValueError(f"need d >= 1 and v >= d, got d={d}, v={v}")
    pairs = set()
    for i in range(d):
        for k in range(v):
            if k == i or k < d:
                pairs.add((i, d + k))
    if v == 2:
        pairs.add((d, d + 1))
    return frozenset(pairs)


def _strategy_pairs(strategy, d, v):
    D = d + v
    if strategy == "vp":
        return sorted(correction_edge_pairs(d, v))
    if strategy == "fvm":
        return [(i, j) for i in range(D) for j in range(i + 1, D)]
    raise ValueError(f"unknown ghost strategy {strategy!r}")


def ghost_fraction(N_local, d, v, strategy="fvm"):
    """Fraction of the full 3-wide ghost shell a strategy transfers.

    ``N_local`` is the cell count per side of a cubic local partition in the
    middle of a 3^(d+v) block of partitions.
    """
    if N_local < 8:
        raise ValueError(f"N_local={N_local} below the stencil minimum of 8")
    D = d + v
    shell = (N_local + 2 * NGHOST) ** D - N_local**D
    if strategy == "all":
        return 1.0
    npairs = len(_strategy_pairs(strategy, d, v))
    faces = 2 * D * NGHOST * N_local ** (D - 1)
    edges = 4 * npairs * N_local ** (D - 2)
    return (faces + edges) / shell


# ---------------------------------------------------------------------------
# Partition plans


@dataclass(frozen=True)
class Box:
    """One partition: a species, its multi-index, and its cell range."""

    species: int
    lex: int
    index: tuple
    lo: tuple
    hi: tuple
    rank: int

    @property
    def shape(self):
        return tuple(h - l for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class GhostSegment:
    """One contiguous ghost-shell slab moved between two partitions.

    Windows are (start, stop) ranges per dimension in each box's padded
    local coordinates.  ``dims`` names the off-axis dimensions: one entry
    for a width-3 face, two for a width-1 diagonal edge (full-shell
    strategy segments may name more).
    """

    src_box: tuple
    dst_box: tuple
    src_rank: int
    dst_rank: int
    kind: str
    dims: tuple
    src_window: tuple
    dst_window: tuple
    count: int


@dataclass(frozen=True)
class PartitionPlan:
    """Partition layout, rank map, and ghost-exchange segment list."""

    d: int
    v: int
    S: int
    r: int
    ranks: int
    strategy: str
    grids: tuple
    n: tuple
    boxes: tuple
    rank_members: tuple
    segments: tuple

    def box(self, species, lex):
        return self.boxes[species][lex]

    def boxes_flat(self):
        for per_species in self.boxes:
            yield from per_species

    def box_grid(self, species, lex):
        """Local :class:`PhaseSpaceGrid` for one partition.

        Dimensions keep their global periodicity only when a single
        partition spans them (so the local wrap is the global wrap);
        split dimensions become non-periodic locally and are filled by
        exchange instead.
        """
        g = self.grids[species]
        b = self.box(species, lex)
        lo = tuple(
            g.lo[k] + b.lo[k] * g.h[k] for k in range(g.ndim)
        )
        hi = tuple(
            g.lo[k] + b.hi[k] * g.h[k] for k in range(g.ndim)
        )
        periodic = tuple(
            g.periodic[k] and self.n[species][k] == 1 for k in range(g.ndim)
        )
        return make_grid(g.d, g.v, b.shape, lo, hi, periodic=periodic, spacing=g.h)

    def segments_to(self, species, lex):
        return [s for s in self.segments if s.dst_box == (species, lex)]

    def segments_from(self, species, lex):
        return [s for s in self.segments if s.src_box == (species, lex)]

    def directed_pairs(self):
        """Segments grouped per directed (src_box, dst_box) communication
        pair, in deterministic order — one packed buffer per pair."""
        order = []
        groups = {}
        for seg in self.segments:
            key = (seg.src_box, seg.dst_box)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(seg)
        return [(key, tuple(groups[key])) for key in order]

    def to_report(self):
        """Plain-dict summary for the ``plan`` CLI subcommand."""
        vols = comm_volumes(self)
        counts = neighbor_pairs(self.d, self.v)
        acct = ghost_accounting(self)
        return {
            "d": self.d,
            "v": self.v,
            "species": self.S,
            "species_per_rank": self.r,
            "ranks": self.ranks,
            "strategy": self.strategy,
            "partition_grid": [list(ns) for ns in self.n],
            "rank_map": [
                {
                    "rank": rank,
                    "members": [
                        {
                            "species": s,
                            "box": list(self.box(s, lex).index),
                            "cells_lo": list(self.box(s, lex).lo),
                            "cells_hi": list(self.box(s, lex).hi),
                        }
                        for (s, lex) in members
                    ],
                }
                for rank, members in enumerate(self.rank_members)
            ],
            "neighbor_pairs": counts,
            "comm_volumes": vols,
            "ghost_accounting": acct,
            "ghost_fraction_small_N": {
                strat: ghost_fraction(8, self.d, self.v, strat)
                for strat in ("fvm", "vp")
            },
        }


def _as_tuple_per_species(value, S, what):
    seq = list(value)
    if seq and not hasattr(seq[0], "__len__"):
        seq = [seq] * S
    if len(seq) != S:
        raise ValueError(f"{what}: expected one entry per species ({S}), got {len(seq)}")
    return [tuple(int(x) for x in entry) for entry in seq]


def plan_partitions(grids, n, ranks=None, r=1, strategy="vp"):
    """Tile each species' phase-space box and assign partitions to ranks.

    Parameters
    ----------
    grids : PhaseSpaceGrid or sequence of PhaseSpaceGrid
        Full-domain grid per species.  Physical dimensions must agree.
    n : sequence of int, or sequence of sequences
        Partition counts per dimension (shared, or one entry per species).
        Physical-dimension counts must be identical across species.
    ranks : int, optional
        Expected rank count; validated against the plan when given.
    r : int
        Partitions per rank — co-located partitions of ``r`` different
        species share a rank.
    strategy : {"vp", "fvm", "all"}
        Which diagonal ghost segments to generate.
    """
    if isinstance(grids, PhaseSpaceGrid):
        grids = (grids,)
    grids = tuple(grids)
    S = len(grids)
    if S < 1:
        raise ValueError("need at least one species grid")
    d, v = grids[0].d, grids[0].v
    D = d + v
    for g in grids:
        if (g.d, g.v) != (d, v):
            raise ValueError("all species must share (d, v)")
        if g.N[:d] != grids[0].N[:d] or g.periodic != grids[0].periodic:
            raise ValueError("physical grids must be identical across species")
    ns = _as_tuple_per_species(n, S, "partition counts")
    for s, (g, n_s) in enumerate(zip(grids, ns)):
        if len(n_s) != D:
            raise ValueError(f"species {s}: need {D} partition counts, got {len(n_s)}")
        if n_s[:d] != ns[0][:d]:
            raise ValueError("physical partition counts must be identical across species")
        for k in range(D):
            if n_s[k] < 1:
                raise ValueError(f"species {s}: partition count must be >= 1 in dim {k}")
            if g.N[k] % n_s[k]:
                raise ValueError(
                    f"species {s}: partition count {n_s[k]} does not divide "
                    f"N[{k}]={g.N[k]}"
                )
            if g.N[k] // n_s[k] < 8:
                raise ValueError(
                    f"species {s}: partition span {g.N[k] // n_s[k]} in dim {k} "
                    "is below the stencil + correction footprint minimum of 8"
                )
    if S % r:
        raise ValueError(f"species_per_rank r={r} must divide species count S={S}")
    if r > 1 and any(n_s != ns[0] for n_s in ns):
        raise ValueError("r > 1 requires identical partition grids across species")

    boxes_per = [int(np.prod(n_s)) for n_s in ns]
    total = sum(boxes_per)
    nranks = total // r
    if ranks is not None and ranks != nranks:
        raise ValueError(
            f"rank-count mismatch: plan yields {nranks} ranks, caller expects {ranks}"
        )

    offsets = np.concatenate([[0], np.cumsum(boxes_per)])
    boxes = []
    rank_members = [[] for _ in range(nranks)]
    for s, (g, n_s) in enumerate(zip(grids, ns)):
        span = tuple(g.N[k] // n_s[k] for k in range(D))
        per_species = []
        for lex, idx in enumerate(np.ndindex(*n_s)):
            if r > 1:
                rank = (s // r) * boxes_per[0] + lex
            else:
                rank = int(offsets[s]) + lex
            per_species.append(
                Box(
                    species=s,
                    lex=lex,
                    index=tuple(idx),
                    lo=tuple(idx[k] * span[k] for k in range(D)),
                    hi=tuple((idx[k] + 1) * span[k] for k in range(D)),
                    rank=rank,
                )
            )
            rank_members[rank].append((s, lex))
        boxes.append(tuple(per_species))

    plan = PartitionPlan(
        d=d,
        v=v,
        S=S,
        r=r,
        ranks=nranks,
        strategy=strategy,
        grids=grids,
        n=tuple(ns),
        boxes=tuple(boxes),
        rank_members=tuple(tuple(m) for m in rank_members),
        segments=(),
    )
    object.__setattr__(plan, "segments", tuple(_build_segments(plan)))
    return plan


def _resolve_step(plan, species, idx_along, dim, side):
    """Owner of the ghost region one step ``side`` along ``dim``.

    Returns (neighbor index along dim, global coordinate shift) or None
    when the step leaves a non-periodic domain: such regions hold frozen
    boundary data that every box captures at scatter time, so they are
    never transferred.
    """
    g = plan.grids[species]
    n = plan.n[species][dim]
    nb = idx_along + side
    if 0 <= nb < n:
        return nb, 0
    if g.periodic[dim]:
        return nb % n, -side * g.N[dim]
    return None


def _build_segments(plan):
    segments = []
    for s in range(plan.S):
        n_s = plan.n[s]
        D = plan.d + plan.v
        for b in plan.boxes[s]:
            if plan.strategy == "all":
                offsets = [
                    tuple(o - 1 for o in idx)
                    for idx in np.ndindex(*([3] * D))
                    if any(o != 1 for o in idx)
                ]
                for off in offsets:
                    seg = _make_segment(plan, s, b, off, widths="full")
                    if seg is not None:
                        segments.append(seg)
                continue
            for dim in range(D):
                for side in (-1, 1):
                    off = tuple(side if k == dim else 0 for k in range(D))
                    seg = _make_segment(plan, s, b, off, widths="face")
                    if seg is not None:
                        segments.append(seg)
            for (i, j) in _strategy_pairs(plan.strategy, plan.d, plan.v):
                for si in (-1, 1):
                    for sj in (-1, 1):
                        off = tuple(
                            si if k == i else sj if k == j else 0
                            for k in range(D)
                        )
                        seg = _make_segment(plan, s, b, off, widths="edge")
                        if seg is not None:
                            segments.append(seg)
    return segments


def _make_segment(plan, s, b, off, widths):
    """Build the ghost segment of box ``b`` for neighbor offset ``off``.

    ``widths``: "face" (3-deep, one off-axis dim), "edge" (1-deep, two
    off-axis dims), "full" (3-deep in every off-axis dim).  Returns None
    when any offset dimension crosses a frozen (non-periodic) domain
    boundary — those ghost regions are time-invariant and restored from
    each box's own t=0 capture by the local fill, never transferred — so
    every generated segment sources owner-interior cells.
    """
    D = plan.d + plan.v
    depth = 1 if widths == "edge" else NGHOST
    dst_g = []
    src_idx = list(b.index)
    shift = [0] * D
    for k in range(D):
        if off[k] == 0:
            dst_g.append((b.lo[k], b.hi[k]))
            continue
        if off[k] > 0:
            dst_g.append((b.hi[k], b.hi[k] + depth))
        else:
            dst_g.append((b.lo[k] - depth, b.lo[k]))
        step = _resolve_step(plan, s, b.index[k], k, off[k])
        if step is None:
            return None
        src_idx[k], shift[k] = step
    src_box = _box_by_index(plan, s, tuple(src_idx))
    if src_box.lex == b.lex and all(sh == 0 for sh in shift):
        return None
    src_window = tuple(
        (a + shift[k] - src_box.lo[k] + NGHOST, z + shift[k] - src_box.lo[k] + NGHOST)
        for k, (a, z) in enumerate(dst_g)
    )
    dst_window = tuple(
        (a - b.lo[k] + NGHOST, z - b.lo[k] + NGHOST)
        for k, (a, z) in enumerate(dst_g)
    )
    count = 1
    for a, z in dst_g:
        count *= z - a
    kind = {"face": "face", "edge": "edge", "full": "shell"}[widths]
    return GhostSegment(
        src_box=(s, src_box.lex),
        dst_box=(s, b.lex),
        src_rank=src_box.rank,
        dst_rank=b.rank,
        kind=kind,
        dims=tuple(k for k in range(D) if off[k] != 0),
        src_window=src_window,
        dst_window=dst_window,
        count=count,
    )


def _box_by_index(plan, species, index):
    n_s = plan.n[species]
    lex = 0
    for k in range(len(n_s)):
        lex = lex * n_s[k] + index[k]
    return plan.boxes[species][lex]


# ---------------------------------------------------------------------------
# Communication-volume estimates


def reduce_volume_formula(N, n, d, S, r=1):
    """Printed estimate of the density-reduction transfer count.

    ``ceil(log2((S/r) * prod of velocity partition counts))`` combine
    rounds, each moving one partial value per physical cell.  The
    ``bit_length`` form evaluates the ceil-log2 exactly on integers.
    """
    vel_parts = 1
    for k in range(d, len(N)):
        vel_parts *= n[k]
    arg = (S // r) * vel_parts
    rounds = (arg - 1).bit_length() if arg > 0 else 0
    phys_cells = 1
    for k in range(d):
        phys_cells *= N[k]
    return rounds * phys_cells


def phi_volume_formula(N, n, p, d, S, r=1):
    """Printed estimate of the field-solve transfer count.

    The reduction term plus three ghost layers on each side of every
    physical-dimension interface, counted as ``(n_i - p_i)`` interfaces
    with ``p_i = 1`` on periodic dimensions.
    """
    vel_parts = 1
    for k in range(d, len(N)):
        vel_parts *= n[k]
    phi_faces = 0
    for i in range(d):
        prod = 1
        for j in range(d):
            if j != i:
                prod *= N[j]
        phi_faces += (n[i] - p[i]) * prod
    return reduce_volume_formula(N, n, d, S, r) + 6 * S * vel_parts * phi_faces


def ghost_volume_formula(N, n, p, S):
    """Printed estimate of the ghost-exchange transfer count.

    Face term: six ghost layers (three per side) on ``(n_i - p_i)``
    interfaces per dimension.  Edge term: two width-1 diagonal strips per
    interface pair.  ``p_i = 1`` on periodic dimensions as printed; with
    every ``n_i = 1`` and every ``p_i = 1`` the value is identically zero.
    """
    D = len(N)
    faces = 0
    edges = 0
    for i in range(D):
        prod = 1
        for j in range(D):
            if j != i:
                prod *= N[j]
        faces += (n[i] - p[i]) * prod
        for j in range(D):
            if j == i:
                continue
            prod2 = 1
            for k in range(D):
                if k != i and k != j:
                    prod2 *= N[k]
            edges += (n[i] - p[i]) * (n[j] - p[j]) * prod2
    return S * (6 * faces + 2 * edges)


def comm_volumes(plan):
    """The three printed transfer-volume formulas, evaluated verbatim.

    Uses species 0's cell and partition counts (the estimate assumes they
    are shared).  ``p_i`` is 1 on periodic dimensions and 0 otherwise, as
    printed; see :func:`ghost_accounting` for the counted comparison.
    """
    g = plan.grids[0]
    n = plan.n[0]
    N = g.N
    d = plan.d
    D = plan.d + plan.v
    p = [1 if g.periodic[k] else 0 for k in range(D)]
    return {
        "B_reduce": reduce_volume_formula(N, n, d, plan.S, plan.r),
        "B_phi": phi_volume_formula(N, n, p, d, plan.S, plan.r),
        "B_ghost": ghost_volume_formula(N, n, p, plan.S),
    }


def ghost_accounting(plan):
    """Dual report: printed B_ghost formula vs counted segment volume.

    The printed face factor ``(n_i - p_i)`` drops one interface on periodic
    dimensions (which actually gain the wrap interface) and keeps one on
    non-periodic dimensions (which lack it), so formula and count generally
    differ; both values are reported rather than silently reconciling them.
    ``counted`` sums every generated segment; ``counted_off_rank`` excludes
    same-rank wrap copies, which never cross a wire.
    """
    formula = comm_volumes(plan)["B_ghost"]
    counted = sum(seg.count for seg in plan.segments)
    off_rank = sum(
        seg.count for seg in plan.segments if seg.src_rank != seg.dst_rank
    )
    return {
        "formula": formula,
        "counted": counted,
        "counted_off_rank": off_rank,
        "strategy": plan.strategy,
        "agrees": formula == counted,
    }


# ---------------------------------------------------------------------------
# Fused pack / unpack


def _window_flat_indices(window, shape):
    grids = np.meshgrid(
        *[np.arange(a, z) for a, z in window], indexing="ij", sparse=False
    )
    return np.ravel_multi_index(grids, shape).ravel()


def segment_flat_maps(segments, src_shape, dst_shape):
    """Flat gather/scatter index maps for one communication pair's segments.

    Every buffer index maps to its (segment, cell) source and destination,
    so pack and unpack are each a single fused pass over the flattened
    contiguous buffer.
    """
    if not segments:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    src = np.concatenate(
        [_window_flat_indices(s.src_window, src_shape) for s in segments]
    )
    dst = np.concatenate(
        [_window_flat_indices(s.dst_window, dst_shape) for s in segments]
    )
    return src, dst


def pack_ghosts(field, segments):
    """Gather one box's outgoing ghost data into a contiguous buffer."""
    data = _payload(field)
    src, _ = segment_flat_maps(segments, data.shape, data.shape)
    return data.reshape(-1)[src]


def unpack_ghosts(buffer, field, segments):
    """Scatter a packed buffer into one box's ghost shell."""
    data = _payload(field)
    _, dst = segment_flat_maps(segments, data.shape, data.shape)
    if buffer.shape != dst.shape:
        raise ValueError(
            f"buffer length {buffer.shape} does not match segment cells {dst.shape}"
        )
    data.reshape(-1)[dst] = buffer
    return field


# ---------------------------------------------------------------------------
# Traffic accounting and the simulated exchange


@dataclass
class TrafficRow:
    stage: int
    kind: str
    src: int
    dst: int
    count: int


@dataclass
class TrafficLog:
    """Per-pair transfer records, standing in for wire measurements."""

    rows: list = dfield(default_factory=list)

    def log(self, stage, kind, src, dst, count):
        self.rows.append(TrafficRow(stage, kind, src, dst, int(count)))

    def total(self, kind=None):
        return sum(r.count for r in self.rows if kind is None or r.kind == kind)

    def to_csv_rows(self):
        yield ("stage", "kind", "src", "dst", "count")
        for r in self.rows:
            yield (r.stage, r.kind, r.src, r.dst, r.count)


class Exchanger:
    """Precomputed pack/unpack index maps for every communication pair."""

    def __init__(self, plan):
        self.plan = plan
        self.pairs = []
        for (src_key, dst_key), segs in plan.directed_pairs():
            s_src, lex_src = src_key
            s_dst, lex_dst = dst_key
            src_shape = tuple(
                n + 2 * NGHOST for n in plan.box(s_src, lex_src).shape
            )
            dst_shape = tuple(
                n + 2 * NGHOST for n in plan.box(s_dst, lex_dst).shape
            )
            src_idx, dst_idx = segment_flat_maps(segs, src_shape, dst_shape)
            self.pairs.append(
                {
                    "src": src_key,
                    "dst": dst_key,
                    "src_rank": segs[0].src_rank,
                    "dst_rank": segs[0].dst_rank,
                    "src_idx": src_idx,
                    "dst_idx": dst_idx,
                    "count": int(src_idx.size),
                }
            )

    def exchange(self, fields, log=None, stage=0):
        """Pack every pair, barrier, then unpack — no pair waits on another.

        ``fields`` maps (species, lex) to the padded local array (or an
        object with ``.data``).  Every segment sources owner-interior
        cells; frozen-boundary ghost regions are restored by each box's
        local fill and never cross the exchange.
        """
        buffers = []
        for pair in self.pairs:
            data = _payload(fields[pair["src"]])
            buffers.append(data.reshape(-1)[pair["src_idx"]])
        for pair, buf in zip(self.pairs, buffers):
            data = _payload(fields[pair["dst"]])
            data.reshape(-1)[pair["dst_idx"]] = buf
            if log is not None:
                log.log(stage, "ghost", pair["src_rank"], pair["dst_rank"], pair["count"])
        return log


def simulate_exchange(plan, fields, log=None, stage=0):
    """One staged, barrier-synchronized ghost exchange over all pairs.

    Returns the :class:`TrafficLog` (created when not supplied).  Builds
    the index maps on the fly; hold an :class:`Exchanger` to amortize them
    across repeated steps.
    """
    if log is None:
        log = TrafficLog()
    Exchanger(plan).exchange(fields, log=log, stage=stage)
    return log


# ---------------------------------------------------------------------------
# Scatter / gather between a global field and per-box local fields


def scatter_field(plan, species, dist):
    """Split a filled global padded array into per-box padded local arrays.

    The global ghost shell must be current (periodic wraps and frozen
    boundary slabs), so every box's halo — including domain-boundary
    ghosts — is seeded with the values a synchronized run would hold.
    """
    g = plan.grids[species]
    data = _payload(dist)
    out = {}
    for b in plan.boxes[species]:
        window = tuple(
            slice(b.lo[k], b.hi[k] + 2 * NGHOST) for k in range(g.ndim)
        )
        out[(species, b.lex)] = data[window].copy()
    return out


def gather_field(plan, species, fields):
    """Assemble the global interior array from per-box local arrays."""
    g = plan.grids[species]
    out = np.empty(g.N)
    for b in plan.boxes[species]:
        local = _payload(fields[(species, b.lex)])
        inner = tuple(slice(NGHOST, NGHOST + n) for n in b.shape)
        window = tuple(slice(b.lo[k], b.hi[k]) for k in range(g.ndim))
        out[window] = local[inner]
    return out


# ---------------------------------------------------------------------------
# Deterministic cross-partition moment combine


def combine_partials(partials, ranks=None, log=None, stage=0, cell_count=None):
    """Adjacent-pair combine rounds over per-box partial arrays.

    ``partials`` is ordered by ascending box index along one velocity axis.
    Lower-index partials sit on the left of each addition and odd tails
    carry, reproducing :func:`vpfv.fields.fold_tree_sum` exactly: when each
    box's span along the axis is a power of two, the local fold delivers
    one finished tree block and these rounds are the remaining tree levels,
    making the combined sum bitwise equal to the single-rank fold.

    Logs one ``reduce`` row per pairwise message when ``log`` and ``ranks``
    are given (sender is the right/upper box).
    """
    items = list(partials)
    ranks = list(ranks) if ranks is not None else [None] * len(items)
    while len(items) > 1:
        nxt = []
        nxt_ranks = []
        m = len(items) // 2
        for i in range(m):
            a, b = items[2 * i], items[2 * i + 1]
            if log is not None and ranks[2 * i] is not None:
                n = cell_count if cell_count is not None else np.size(b)
                log.log(stage, "reduce", ranks[2 * i + 1], ranks[2 * i], n)
            nxt.append(a + b)
            nxt_ranks.append(ranks[2 * i])
        if len(items) % 2:
            nxt.append(items[-1])
            nxt_ranks.append(ranks[-1])
        items = nxt
        ranks = nxt_ranks
    return items[0]


def reduction_rounds(m):
    """Number of pairwise combine rounds for ``m`` partials: ceil(log2 m)."""
    return (int(m) - 1).bit_length()
