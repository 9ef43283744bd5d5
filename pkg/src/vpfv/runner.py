"""Stepping drivers: single-process runs and the simulated multi-rank cluster.

Every Runge-Kutta stage performs the same pipeline:

    sync ghosts -> velocity moments -> charge density -> Poisson solve ->
    field + correction-coefficient distribution -> upwind RHS -> fused update

The single-rank :class:`Simulation` runs it on whole-domain arrays.  The
:class:`SimulatedCluster` runs it per partition with the halo exchange,
deterministic cross-partition moment combine, and a single global field
solve whose slabs are sliced back to each box.  Advection speeds, field
slabs, and correction coefficients are always evaluated on the *global*
grid and sliced per box, and partition-local grids inherit the global
cell widths verbatim, so no local coordinate arithmetic can round
differently.  A cluster run is then bitwise identical to the single-rank
run whenever the partition spans along every velocity axis are powers of
two (the moment fold tree decomposes exactly across such blocks); see
:mod:`vpfv.partition` for why.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ConfigError, RunConfig
from .diagnostics import conserved_quantities
from .fields import (
    FieldState,
    _fold_axis_tree,
    charge_density,
    poisson_solve,
)
from .fvm import (
    advection_speeds,
    correction_coeffs,
    max_speed_per_dim,
    vlasov_rhs,
)
from .grid import DistField, FrozenGhosts, fill_local_ghosts, make_grid
from .partition import (
    Exchanger,
    TrafficLog,
    combine_partials,
    gather_field,
    plan_partitions,
    scatter_field,
)
from .problems import (
    ProblemSetup,
    ProblemSpec,
    make_landau_1d,
    make_problem,
)
from .timestepping import (
    DEFAULT_SIGMA,
    StepContext,
    max_stable_dt,
    rk4_38_low_storage_step,
)


class RunDiverged(RuntimeError):
    """Raised when a run produces non-finite values; f0 holds the last
    completed state."""


def fused_stage_update(dest, A, B, rhs, ca, cb, cd, cL):
    """dest = ca*A + cb*B + cd*dest + cL*rhs, one shared expression.

    Both drivers route every stage through this call so that partitioned
    and whole-domain updates perform identical elementwise arithmetic.
    """
    dest[...] = ca * A + cb * B + cd * dest + cL * rhs


def _slice_broadcast(arr, box):
    """Slice a broadcast-shaped per-dimension array to one box's window.

    Advection-speed arrays keep size-1 axes where they are constant;
    those pass through untouched while full axes take the box's span.
    """
    sl = tuple(
        slice(None) if arr.shape[k] == 1 else slice(box.lo[k], box.hi[k])
        for k in range(arr.ndim)
    )
    return arr[sl]


def velocity_cell_volume(grid):
    vol = 1.0
    for k in grid.velocity_dims:
        vol *= grid.h[k]
    return vol


def stable_dt(grids, species, E, sigma=DEFAULT_SIGMA):
    """min over species of sigma / sum_d(max|A_d| / h_d) on global grids."""
    return min(
        max_stable_dt([max_speed_per_dim(g, sp, E)], g.h, sigma=sigma)
        for g, sp in zip(grids, species)
    )


def timestep_norm_report(grids, species, E, sigma=DEFAULT_SIGMA):
    """L1-norm vs max-norm CFL bounds and their ratio.

    The production bound divides sigma by the **L1 norm** of the per-cell
    speed vector (sum over dimensions of max|A_d|/h_d); a max-norm bound
    divides by its largest component only and is looser by exactly this
    ratio.  Reported on demand for the magnetized two-species benchmark.
    """
    dt_l1 = stable_dt(grids, species, E, sigma)
    best = math.inf
    for g, sp in zip(grids, species):
        speeds = max_speed_per_dim(g, sp, E)
        peak = max(a / h for a, h in zip(speeds, g.h))
        if peak > 0.0:
            best = min(best, sigma / peak)
    dt_max = best
    ratio = dt_l1 / dt_max if math.isfinite(dt_max) else 1.0
    return {"dt_l1": dt_l1, "dt_maxnorm": dt_max, "ratio_l1_over_maxnorm": ratio}


class Simulation:
    """Whole-domain driver owning exactly three buffers per species."""

    def __init__(
        self,
        setup: ProblemSetup,
        cfl_fraction=0.9,
        dt=None,
        corrections=True,
        schedule="velocity-major",
        sigma=DEFAULT_SIGMA,
    ):
        self.species = tuple(setup.species)
        self.grids = tuple(f.grid for f in setup.dists)
        self.cfl_fraction = cfl_fraction
        self.fixed_dt = dt
        self.corrections = corrections
        self.schedule = schedule
        self.sigma = sigma
        f0 = [f.data for f in setup.dists]
        self.frozen = [
            FrozenGhosts.capture(f) for f in setup.dists
        ]  # analytic t=0 ghost values, reused verbatim every stage
        self.ctx = StepContext(
            f0=f0,
            f1=[np.zeros_like(a) for a in f0],
            fout=[np.zeros_like(a) for a in f0],
        )
        self._names = [f.species for f in setup.dists]

    # -- state access ----------------------------------------------------
    @property
    def t(self):
        return self.ctx.t

    @property
    def step_count(self):
        return self.ctx.step

    def persistent_buffers(self):
        """The three per-species buffer sets (allocation audit hook)."""
        return (self.ctx.f0, self.ctx.f1, self.ctx.fout)

    # -- pipeline pieces ---------------------------------------------------
    def _wrap(self, arrays):
        dists = []
        for s, arr in enumerate(arrays):
            f = DistField(self.grids[s], species=self._names[s], data=arr)
            fill_local_ghosts(f, self.frozen[s])
            dists.append(f)
        return dists

    def _solve(self, arrays):
        dists = self._wrap(arrays)
        state = FieldState.solve(dists, self.species, schedule=self.schedule)
        return dists, state

    def _stage(self, dest, A, B, src, ca, cb, cd, cL, t):
        dists, state = self._solve(src)
        for s, sp in enumerate(self.species):
            rhs = vlasov_rhs(dists[s], sp, state.E, corrections=self.corrections)
            inner = self.grids[s].interior_slices()
            fused_stage_update(
                dest[s][inner], A[s][inner], B[s][inner], rhs, ca, cb, cd, cL
            )
        self._last_state = state

    # -- timestep control --------------------------------------------------
    def max_dt(self):
        """Unscaled stability bound from the current state."""
        _, state = self._solve(self.ctx.f0)
        return stable_dt(self.grids, self.species, state.E, self.sigma)

    def current_dt(self):
        if self.fixed_dt is not None:
            return self.fixed_dt
        bound = self.max_dt()
        if not math.isfinite(bound):
            raise RunDiverged("stability bound is not finite (empty flow?)")
        return bound * self.cfl_fraction

    def _roll_back(self, dt, msg):
        """Recommit the pre-step state so f0 stays finite, then fail.

        Every committed state passed the same finiteness check, so the
        rolled-back buffers are a valid last-good snapshot by induction.
        """
        self.ctx.f0, self.ctx.fout = self.ctx.fout, self.ctx.f0
        self.ctx.t -= dt
        self.ctx.step -= 1
        raise RunDiverged(msg)

    # -- stepping ------------------------------------------------------------
    def advance(self, dt):
        rk4_38_low_storage_step(self.ctx, dt, self._stage)
        self.ctx.rotate()
        for s, arr in enumerate(self.ctx.f0):
            # a non-finite cell makes the interior sum non-finite (one
            # cheap pass; values are O(1), so no overflow false positives)
            total = float(np.sum(arr[self.grids[s].interior_slices()]))
            if not math.isfinite(total):
                self._roll_back(dt, f"species {self._names[s]} non-finite")

    def diagnostics_row(self, dt):
        dists, state = self._solve(self.ctx.f0)
        return conserved_quantities(dists, self.species, state, self.ctx.t, dt)

    def state(self):
        return self._solve(self.ctx.f0)[1]

    def interiors(self):
        return [
            arr[self.grids[s].interior_slices()].copy()
            for s, arr in enumerate(self.ctx.f0)
        ]

    def run(self, t_end, cadence=10, max_steps=10**7, on_row=None):
        """Advance to ``t_end``; emit a diagnostics row every ``cadence``
        steps plus the first and last."""
        rows = [self.diagnostics_row(0.0)]
        if on_row:
            on_row(rows[0])
        while self.ctx.t < t_end - 1e-12 and self.ctx.step < max_steps:
            dt = min(self.current_dt(), t_end - self.ctx.t)
            self.advance(dt)
            if self.ctx.step % cadence == 0 or self.ctx.t >= t_end - 1e-12:
                row = self.diagnostics_row(dt)
                rows.append(row)
                if on_row:
                    on_row(row)
        return rows


class SimulatedCluster:
    """Partitioned driver: isolated per-box states, barrier exchanges.

    All ranks live in this process; transfers are array copies recorded in
    the :class:`TrafficLog`.  The reduction and field stages are computed
    once globally (rank-0 semantics) and sliced back, matching the
    deterministic combine-tree accounting.
    """

    def __init__(
        self,
        setup: ProblemSetup,
        n,
        ranks=None,
        species_per_rank=1,
        strategy="vp",
        cfl_fraction=0.9,
        dt=None,
        corrections=True,
        sigma=DEFAULT_SIGMA,
    ):
        self.species = tuple(setup.species)
        self.globals = tuple(f.grid for f in setup.dists)
        self.plan = plan_partitions(
            self.globals, n, ranks=ranks, r=species_per_rank, strategy=strategy
        )
        self.cfl_fraction = cfl_fraction
        self.fixed_dt = dt
        self.corrections = corrections
        self.sigma = sigma
        self.log = TrafficLog()
        self.exchanger = Exchanger(self.plan)
        self._names = [f.species for f in setup.dists]
        self._stage_no = 0

        f0 = {}
        self.global_frozen = []
        for s, f in enumerate(setup.dists):
            frozen_global = FrozenGhosts.capture(f)
            fill_local_ghosts(f, frozen_global)
            f0.update(scatter_field(self.plan, s, f))
            self.global_frozen.append(frozen_global)
        self.local_grids = {
            (s, lex): self.plan.box_grid(s, lex)
            for s in range(len(self.species))
            for lex in range(len(self.plan.boxes[s]))
        }
        self.frozen = {}
        for key, arr in f0.items():
            df = DistField(self.local_grids[key], data=arr)
            self.frozen[key] = FrozenGhosts.capture(df)
        self.ctx = StepContext(
            f0=f0,
            f1={k: np.zeros_like(a) for k, a in f0.items()},
            fout={k: np.zeros_like(a) for k, a in f0.items()},
        )
        # index tuple -> lex, for locating physical slabs after combining
        self._lex_of = [
            {b.index: b.lex for b in self.plan.boxes[s]}
            for s in range(len(self.species))
        ]

    @property
    def t(self):
        return self.ctx.t

    @property
    def step_count(self):
        return self.ctx.step

    # -- pipeline pieces ---------------------------------------------------
    def _sync(self, bufs):
        dists = {}
        for key, arr in bufs.items():
            f = DistField(
                self.local_grids[key], species=self._names[key[0]], data=arr
            )
            fill_local_ghosts(f, self.frozen[key])
            dists[key] = f
        self.exchanger.exchange(dists, log=self.log, stage=self._stage_no)
        return dists

    def _global_density(self, s, bufs):
        """Deterministic cross-partition zeroth moment of species ``s``.

        Folds the innermost velocity axis locally, combines across the
        boxes split along it (adjacent pairs, ascending index), then moves
        outward one axis at a time — exactly the fold tree the single-rank
        moment performs, evaluated block-wise.
        """
        g = self.globals[s]
        d, D = g.d, g.ndim
        parts = {}
        for b in self.plan.boxes[s]:
            arr = bufs[(s, b.lex)][self.local_grids[(s, b.lex)].interior_slices()]
            parts[b.index] = (arr, b.rank)
        for axis in range(D - 1, d - 1, -1):
            folded = {
                idx: (_fold_axis_tree(arr, axis), rank)
                for idx, (arr, rank) in parts.items()
            }
            groups = {}
            for idx in sorted(folded):
                key = idx[:axis] + (0,) + idx[axis + 1 :]
                groups.setdefault(key, []).append(idx)
            parts = {}
            for key, members in groups.items():
                members.sort(key=lambda idx: idx[axis])
                arrays = [folded[m][0] for m in members]
                ranks = [folded[m][1] for m in members]
                if len(arrays) == 1:
                    parts[key] = (arrays[0], ranks[0])
                else:
                    combined = combine_partials(
                        arrays, ranks=ranks, log=self.log, stage=self._stage_no
                    )
                    parts[key] = (combined, ranks[0])
        vol = velocity_cell_volume(g)
        out = np.empty(g.N[:d])
        for key, (arr, rank) in parts.items():
            b = self.plan.box(s, self._lex_of[s][key])
            window = tuple(slice(b.lo[k], b.hi[k]) for k in range(d))
            out[window] = arr.reshape([b.hi[k] - b.lo[k] for k in range(d)]) * vol
            if rank != 0:
                self.log.log(self._stage_no, "field", rank, 0, arr.size)
        return out

    def _field_solve(self, bufs):
        densities = [
            self._global_density(s, bufs) for s in range(len(self.species))
        ]
        rho = charge_density(densities, self.species)
        phi, E = poisson_solve(rho, self.globals[0])
        return densities, phi, E

    def _stage(self, dest, A, B, src, ca, cb, cd, cL, t):
        dists = self._sync(src)
        _, _, E = self._field_solve(src)
        self._last_E = E
        for s, sp in enumerate(self.species):
            g = self.globals[s]
            coeffs = (
                correction_coeffs(g, sp, E) if self.corrections else None
            )
            speeds = advection_speeds(g, sp, E)
            d = g.d
            for b in self.plan.boxes[s]:
                key = (s, b.lex)
                phys = tuple(slice(b.lo[k], b.hi[k]) for k in range(d))
                E_loc = {name: comp[phys] for name, comp in E.items()}
                c_loc = (
                    None
                    if coeffs is None
                    else {
                        name: (
                            val[phys]
                            if isinstance(val, np.ndarray) and val.ndim >= d
                            else val
                        )
                        for name, val in coeffs.items()
                    }
                )
                sp_loc = [_slice_broadcast(a, b) for a in speeds]
                rhs = vlasov_rhs(
                    dists[key],
                    sp,
                    E_loc,
                    corrections=self.corrections,
                    coeffs=c_loc,
                    speeds=sp_loc,
                )
                if b.rank != 0:
                    count = sum(comp.size for comp in E_loc.values())
                    self.log.log(self._stage_no, "field", 0, b.rank, count)
                inner = self.local_grids[key].interior_slices()
                fused_stage_update(
                    dest[key][inner], A[key][inner], B[key][inner], rhs, ca, cb, cd, cL
                )
        self._stage_no += 1

    # -- timestep control ---------------------------------------------------
    def max_dt(self):
        _, _, E = self._field_solve(self.ctx.f0)
        return stable_dt(self.globals, self.species, E, self.sigma)

    def current_dt(self):
        if self.fixed_dt is not None:
            return self.fixed_dt
        bound = self.max_dt()
        if not math.isfinite(bound):
            raise RunDiverged("stability bound is not finite (empty flow?)")
        return bound * self.cfl_fraction

    # -- stepping -------------------------------------------------------------
    def advance(self, dt):
        rk4_38_low_storage_step(self.ctx, dt, self._stage)
        self.ctx.rotate()
        for key, arr in self.ctx.f0.items():
            inner = self.local_grids[key].interior_slices()
            if not math.isfinite(float(np.sum(arr[inner]))):
                self.ctx.f0, self.ctx.fout = self.ctx.fout, self.ctx.f0
                self.ctx.t -= dt
                self.ctx.step -= 1
                raise RunDiverged(
                    f"species {self._names[key[0]]} non-finite on box {key[1]}"
                )

    def gather(self, s):
        """Global interior array of species ``s`` from the f0 buffers."""
        return gather_field(self.plan, s, self.ctx.f0)

    def _global_dists(self):
        dists = []
        for s in range(len(self.species)):
            f = DistField(self.globals[s], species=self._names[s])
            f.data[self.globals[s].interior_slices()] = self.gather(s)
            fill_local_ghosts(f, self.global_frozen[s])
            dists.append(f)
        return dists

    def diagnostics_row(self, dt):
        dists = self._global_dists()
        state = FieldState.solve(dists, self.species)
        return conserved_quantities(dists, self.species, state, self.ctx.t, dt)

    def run(self, t_end, cadence=10, max_steps=10**7, on_row=None):
        rows = [self.diagnostics_row(0.0)]
        if on_row:
            on_row(rows[0])
        while self.ctx.t < t_end - 1e-12 and self.ctx.step < max_steps:
            dt = min(self.current_dt(), t_end - self.ctx.t)
            self.advance(dt)
            if self.ctx.step % cadence == 0 or self.ctx.t >= t_end - 1e-12:
                row = self.diagnostics_row(dt)
                rows.append(row)
                if on_row:
                    on_row(row)
        return rows


# ---------------------------------------------------------------------------
# Synthetic transport problems (stability and conservation probes)


def synthetic_advection_setup(N=64, Nv=None, v_max=1.0, all_periodic=False):
    """Field-free 1D-1V transport of a smooth profile.

    The species carries zero charge, so the solved field vanishes and cells
    simply stream in x at their velocity-center speed.  With
    ``all_periodic`` the velocity boundary wraps too (synthetic torus):
    every flux telescopes and mass is conserved to rounding.
    """
    from .fvm import SpeciesConfig
    from .problems import quadrature_init

    Nv = Nv if Nv is not None else N
    periodic = (True, True) if all_periodic else None
    grid = make_grid(1, 1, (N, Nv), (0.0, -v_max), (2.0, v_max), periodic=periodic)

    def profile(x, vx):
        return 1.0 + 0.5 * np.sin(np.pi * x) * np.cos(0.5 * np.pi * vx / v_max)

    data = quadrature_init(profile, grid)
    f = DistField(grid, species="n", data=data)
    sp = SpeciesConfig(name="n", q=0.0, m=1.0)
    return ProblemSetup(ProblemSpec("two-stream"), (sp,), [f])


# ---------------------------------------------------------------------------
# Config-driven construction


def problem_grids(cfg: RunConfig):
    """Per-species grids a config describes, without field initialization.

    Partition planning only needs geometry, and paper-scale plans would be
    far too large to initialize on a desk machine.
    """
    import math as _math

    from .problems import dgh_wavenumber, lhdi_grids

    N = cfg.N[0]
    Nv = cfg.species[0].Nv[0]
    spec = ProblemSpec(cfg.problem, dict(cfg.problem_params))
    if cfg.problem == "two-stream":
        L = 2.0 * _math.pi / spec.k
        return [make_grid(1, 1, (N, Nv), (0.0, -spec.v_max), (L, spec.v_max))]
    if cfg.problem == "dgh":
        L = 2.0 * _math.pi / dgh_wavenumber(spec)
        return [
            make_grid(
                1,
                2,
                (N, Nv, Nv),
                (0.0, -spec.v_max, -spec.v_max),
                (L, spec.v_max, spec.v_max),
            )
        ]
    if cfg.problem == "lhdi":
        grids = lhdi_grids(spec, N, Nv)
        return [grids["i"], grids["e"]]
    if cfg.problem == "landau":
        L = 2.0 * _math.pi / spec.k_x
        if cfg.d == 1:
            return [make_grid(1, 1, (N, Nv), (0.0, -spec.v_max), (L, spec.v_max))]
        return [
            make_grid(
                2,
                2,
                (N, N, Nv, Nv),
                (0.0, 0.0, -spec.v_max, -spec.v_max),
                (L, L, spec.v_max, spec.v_max),
            )
        ]
    raise ConfigError(f"unknown problem {cfg.problem!r}")


def make_setup(cfg: RunConfig, order=8):
    """Build the benchmark a config names, honoring resolution fields."""
    if len(set(cfg.N)) != 1:
        raise ConfigError("[domain] N: desk benchmarks use equal counts per dimension")
    N = cfg.N[0]
    Nvs = {nv for sp in cfg.species for nv in sp.Nv}
    if len(Nvs) != 1:
        raise ConfigError("[species] Nv: desk benchmarks share one velocity count")
    Nv = Nvs.pop()
    spec = ProblemSpec(cfg.problem, dict(cfg.problem_params))
    if cfg.problem == "landau" and cfg.d == 1:
        setup = make_landau_1d(spec, N, Nv, order=order)
    else:
        setup = make_problem(spec, N, Nv, order=order)
    grids = [f.grid for f in setup.dists]
    if grids[0].d != cfg.d or grids[0].v != cfg.v:
        raise ConfigError(
            f"[domain] d/v = {cfg.d}/{cfg.v} does not match problem "
            f"{cfg.problem!r} ({grids[0].d}/{grids[0].v})"
        )
    if len(cfg.species) != len(setup.species):
        raise ConfigError(
            f"[species]: {cfg.problem!r} has {len(setup.species)} species, "
            f"config lists {len(cfg.species)}"
        )
    for section, built in zip(cfg.species, setup.species):
        for attr in ("q", "m"):
            given = getattr(section, attr)
            if given is not None and not math.isclose(
                given, getattr(built, attr), rel_tol=1e-12
            ):
                raise ConfigError(
                    f"[species.{section.name}] {attr} = {given} contradicts the "
                    f"problem value {getattr(built, attr)}"
                )
    return setup


def make_driver(cfg: RunConfig, order=8):
    """Config -> ready-to-run driver (cluster when partitions are given)."""
    setup = make_setup(cfg, order=order)
    kwargs = dict(
        cfl_fraction=cfg.cfl_fraction if cfg.cfl_fraction is not None else 0.9,
        dt=cfg.dt,
    )
    if cfg.partition_n is not None:
        return SimulatedCluster(
            setup,
            cfg.partition_n if len(cfg.partition_n) > 1 else cfg.partition_n[0],
            ranks=cfg.ranks,
            species_per_rank=cfg.species_per_rank,
            strategy=cfg.strategy,
            **kwargs,
        )
    schedule = "velocity-major" if cfg.deterministic else "free"
    return Simulation(setup, schedule=schedule, **kwargs)
