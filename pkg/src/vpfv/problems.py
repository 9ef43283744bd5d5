"""Benchmark initial conditions.

Four standard electrostatic configurations — counter-streaming beams
(two-stream instability), a perturbed electron ring in a magnetic field
(Dory–Guest–Harris instability), acceleration-driven cross-field drifting
Maxwellians (lower-hybrid drift instability), and a perturbed Maxwellian
(Landau damping) — initialized as high-order cell averages.

Cell averages come from tensor-product Gauss–Legendre quadrature (8 points
per dimension by default, exact through degree 15), so initialization error
sits far below the scheme's own truncation error.  Every benchmark density
here is a sum of products of one- or two-dimensional factors, and the cell
average of such a product is the product of lower-dimensional averages; the
initializers exploit that to avoid full-dimensional quadrature loops on
production grids.

Unit conventions: times are measured in inverse reference plasma frequency,
velocities in the problem's reference velocity, so ``kappa2 = 1``; magnetic
fields enter through the frequency-ratio constant ``kappa_c`` with a unit
field direction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .fvm import SpeciesConfig
from .grid import DistField, PhaseSpaceGrid, make_grid

# Fastest-growing wavenumber of the cross-field drift benchmark at mass
# ratio 25, from this package's dispersion oracle (growth peaks interior to
# the scanned band; see the oracle's regression tests).
DRIFT_K_MR25 = 1.9


# ---------------------------------------------------------------------------
# quadrature machinery


def _gl_nodes(order):
    """Gauss–Legendre nodes/weights on [-1/2, 1/2] (weights sum to 1)."""
    x, w = leggauss(int(order))
    return 0.5 * x, 0.5 * w


def quadrature_init(func, grid: PhaseSpaceGrid, order=8):
    """Tensor-product Gauss–Legendre cell averages of ``func`` on the padded
    box.

    Parameters
    ----------
    func : callable
        ``func(*coords)`` accepting broadcastable coordinate arrays (one per
        dimension, physical dimensions first) and returning the pointwise
        density.
    grid : PhaseSpaceGrid
    order : int
        Quadrature points per dimension (8 by default; 4 for quick work,
        larger values serve as self-refinement references).

    Ghost coordinates wrap around periodic dimensions and extend past the
    domain bounds along velocity dimensions, so the returned array is a
    fully initialized padded field.
    """
    nodes, weights = _gl_nodes(order)
    coords = [grid.padded_centers(k) for k in range(grid.ndim)]
    data = np.zeros(grid.padded_shape)
    for combo in itertools.product(range(len(nodes)), repeat=grid.ndim):
        w = 1.0
        for c in combo:
            w *= weights[c]
        pts = np.meshgrid(
            *(
                coords[k] + nodes[combo[k]] * grid.h[k]
                for k in range(grid.ndim)
            ),
            indexing="ij",
            sparse=True,
        )
        data += w * func(*pts)
    return data


def line_averages(func, grid: PhaseSpaceGrid, dim, order=8):
    """1D cell averages of ``func`` along ``dim`` over the padded range."""
    nodes, weights = _gl_nodes(order)
    x = grid.padded_centers(dim)
    h = grid.h[dim]
    out = np.zeros_like(x)
    for xi, wi in zip(nodes, weights):
        out += wi * func(x + xi * h)
    return out


def plane_averages(func2, grid: PhaseSpaceGrid, dims, order=8):
    """2D cell averages of ``func2`` over the dimension pair ``dims``."""
    nodes, weights = _gl_nodes(order)
    a = grid.padded_centers(dims[0])
    b = grid.padded_centers(dims[1])
    ha, hb = grid.h[dims[0]], grid.h[dims[1]]
    out = np.zeros((a.size, b.size))
    for xi, wi in zip(nodes, weights):
        for yj, wj in zip(nodes, weights):
            out += wi * wj * func2(
                (a + xi * ha)[:, None], (b + yj * hb)[None, :]
            )
    return out


# ---------------------------------------------------------------------------
# problem specification


_DEFAULTS = {
    "two-stream": dict(v_T2=0.1, u=1.0, delta=1e-5, k=0.6, v_max=8.0),
    "dgh": dict(
        ell=4,
        alpha_perp=math.sqrt(2.0) / 2.0,
        delta=1e-4,
        kbar=3.2,
        omega_ratio=0.05,
        v_max=8.0,
    ),
    "lhdi": dict(
        m_r=25.0,
        temp_ratio=1.0,
        beta=2.5e-3,
        drift_ratio=None,  # None -> 9 + 9/m_r
        delta_e=1e-3,
        delta_i=0.0,
        k=None,  # None -> fastest-growing mode (oracle value at m_r=25)
        omega_ratio_coeff=1e-2,  # |Omega_e|/omega_pe = coeff * sqrt(m_r)
    ),
    "landau": dict(alpha=0.5, k_x=0.5, k_y=0.5, v_max=8.0),
}


@dataclass(frozen=True)
class ProblemSpec:
    """A benchmark tag plus its parameter set (defaults reproduce the
    standard configurations; see ``_DEFAULTS``)."""

    problem: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in _DEFAULTS:
            raise ValueError(
                f"unknown problem {self.problem!r}; "
                f"expected one of {sorted(_DEFAULTS)}"
            )
        unknown = set(self.params) - set(_DEFAULTS[self.problem])
        if unknown:
            raise ValueError(
                f"unknown parameters for {self.problem}: {sorted(unknown)}"
            )
        merged = dict(_DEFAULTS[self.problem])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    def __getattr__(self, name):
        try:
            return self.params[name]
        except KeyError:
            raise AttributeError(name) from None


def two_stream_spec(**overrides):
    return ProblemSpec("two-stream", overrides)


def dgh_spec(**overrides):
    return ProblemSpec("dgh", overrides)


def lhdi_spec(**overrides):
    return ProblemSpec("lhdi", overrides)


def landau_spec(**overrides):
    return ProblemSpec("landau", overrides)


def _require(grid, d, v, what):
    if (grid.d, grid.v) != (d, v):
        raise ValueError(
            f"{what} requires a {d}D-{v}V grid, got {grid.d}D-{grid.v}V"
        )


def _require_box(grid, k, what):
    L = grid.hi[0] - grid.lo[0]
    want = 2.0 * math.pi / k
    if abs(L - want) > 1e-9 * want:
        raise ValueError(
            f"{what}: the box must fit one perturbation wavelength "
            f"(L = {L}, 2 pi / k = {want})"
        )


# ---------------------------------------------------------------------------
# two-stream


def init_two_stream(grid: PhaseSpaceGrid, spec: ProblemSpec, order=8):
    """Two counter-streaming Maxwellian beams with opposed density
    perturbations:

        f = (1 / (v_T sqrt(2 pi))) * sum_{+,-} (1/2 ± delta sin(2 pi x / L))
                                      * exp(-(v ∓ u)^2 / (2 v_T^2))

    The perturbation moves density between the beams, so the total density
    stays exactly uniform at t = 0 and the field grows from the velocity-
    space asymmetry.
    """
    _require(grid, 1, 1, "the two-stream benchmark")
    _require_box(grid, spec.k, "two-stream")
    vt = math.sqrt(spec.v_T2)
    u, delta, k = spec.u, spec.delta, spec.k
    norm = 1.0 / (vt * math.sqrt(2.0 * math.pi))

    sin_avg = line_averages(lambda x: np.sin(k * x), grid, 0, order)
    beam_p = line_averages(
        lambda v: norm * np.exp(-((v - u) ** 2) / (2.0 * vt * vt)), grid, 1, order
    )
    beam_m = line_averages(
        lambda v: norm * np.exp(-((v + u) ** 2) / (2.0 * vt * vt)), grid, 1, order
    )
    wp = 0.5 + delta * sin_avg
    wm = 0.5 - delta * sin_avg
    data = wp[:, None] * beam_p[None, :] + wm[:, None] * beam_m[None, :]
    return DistField(grid=grid, species="e", data=data)


def two_stream_species():
    return SpeciesConfig(name="e", q=-1.0, m=1.0, kappa2=1.0, kappa_c=0.0,
                         G=(0.0,))


# ---------------------------------------------------------------------------
# ring distribution (Dory–Guest–Harris)


def _ring_factors(ell, alpha):
    """Pointwise ring density and its mode-4 azimuthal projections.

    Returns (ring, ring_sin4, ring_cos4) as functions of (vx, vy);
    sin(4 theta) and cos(4 theta) are evaluated through polynomial ring
    identities (4 vx^3 vy - 4 vx vy^3) / |v|^4 and
    (vx^4 - 6 vx^2 vy^2 + vy^4) / |v|^4, smooth for ell >= 2.
    """
    c0 = 1.0 / (math.pi * math.factorial(ell) * alpha * alpha)

    def ring(vx, vy):
        s = (vx * vx + vy * vy) / (alpha * alpha)
        return c0 * s**ell * np.exp(-s)

    def with_mode4(trig):
        def f(vx, vy):
            v2 = vx * vx + vy * vy
            v4 = v2 * v2
            safe = np.where(v4 > 0.0, v4, 1.0)
            return ring(vx, vy) * trig(vx, vy) / safe * np.where(v4 > 0.0, 1.0, 0.0)

        return f

    ring_sin4 = with_mode4(lambda vx, vy: 4.0 * vx**3 * vy - 4.0 * vx * vy**3)
    ring_cos4 = with_mode4(lambda vx, vy: vx**4 - 6.0 * vx**2 * vy**2 + vy**4)
    return ring, ring_sin4, ring_cos4


def dgh_wavenumber(spec: ProblemSpec):
    """Physical wavenumber of the normalized ``kbar = k v_perp0 / |Omega|``
    (ring peak speed v_perp0 = sqrt(ell) alpha_perp)."""
    v0 = math.sqrt(spec.ell) * spec.alpha_perp
    return spec.kbar * spec.omega_ratio / v0


def init_dgh(grid: PhaseSpaceGrid, spec: ProblemSpec, order=8):
    """Perturbed electron ring distribution:

        f = ring(|v|) * (1 + delta sin(4 theta - 2 pi x / L)),
        ring = (1/(pi ell! alpha^2)) (v.v/alpha^2)^ell exp(-v.v/alpha^2)

    Expanded as ring + delta [sin(4 theta) cos(kx) - cos(4 theta) sin(kx)]
    so every term is a (vx, vy)-factor times an x-factor.  The perturbation
    has zero azimuthal mean, so the t = 0 density is exactly uniform.
    """
    _require(grid, 1, 2, "the ring-distribution benchmark")
    if spec.ell < 2:
        raise ValueError("ring exponent ell must be >= 2 (mode-4 smoothness)")
    k = dgh_wavenumber(spec)
    _require_box(grid, k, "ring-distribution benchmark")

    ring, ring_sin4, ring_cos4 = _ring_factors(spec.ell, spec.alpha_perp)
    R = plane_averages(ring, grid, (1, 2), order)
    S4 = plane_averages(ring_sin4, grid, (1, 2), order)
    C4 = plane_averages(ring_cos4, grid, (1, 2), order)
    cos_avg = line_averages(lambda x: np.cos(k * x), grid, 0, order)
    sin_avg = line_averages(lambda x: np.sin(k * x), grid, 0, order)

    data = (
        np.ones_like(cos_avg)[:, None, None] * R[None, :, :]
        + spec.delta
        * (
            cos_avg[:, None, None] * S4[None, :, :]
            - sin_avg[:, None, None] * C4[None, :, :]
        )
    )
    return DistField(grid=grid, species="e", data=data)


def dgh_species(spec: ProblemSpec):
    """Electron config: |Omega_e| / omega_pe enters as kappa_c with a unit
    field direction; the neutralizing ion background is implicit."""
    return SpeciesConfig(
        name="e", q=-1.0, m=1.0, kappa2=1.0, kappa_c=spec.omega_ratio,
        Bz=1.0, G=(0.0, 0.0),
    )


# ---------------------------------------------------------------------------
# cross-field drift (lower-hybrid drift instability)


def lhdi_closure(spec: ProblemSpec):
    """Convert the five benchmark ratios to primitive per-species values.

    Chain (reference mass = ion mass, n_i = n_e = 1, unit charge,
    times in inverse reference plasma frequency, unit-pressure field):

    - ``omega_pi = 1`` fixes the ion scale; ``omega_pe^2 = m_r``.
    - ``|Omega_e|/omega_pe = coeff sqrt(m_r)`` with the same ratio chain
      gives ``Omega_i = coeff`` (ions) and ``Omega_e = -coeff m_r``:
      the frequency-ratio constant kappa_c = coeff with unit field.
    - ``beta = 2 (n_i T_i + n_e T_e)`` in units of the magnetic pressure:
      with T_i = T_e it gives T_i = beta / 4, v_Ti = sqrt(T_i),
      v_Te = v_Ti sqrt(m_r).
    - the drift split follows from u_s = G_y / Omega_s:
      v_D = |u_i - u_e| = G_y (1 + 1/m_r)/coeff, and
      v_D = (9 + 9/m_r) v_Ti  =>  G_y = 9 v_Ti coeff, independent of m_r.
    - velocity boxes: u_s ± alpha_s v_Ts with alpha_i = 12.14 and
      alpha_e = 18.21 below mass ratio 100, 6.07 at or above it.
    """
    m_r = float(spec.m_r)
    if spec.temp_ratio != 1.0:
        raise ValueError(
            "parameter closure is defined for equal temperatures "
            f"(temp_ratio = {spec.temp_ratio})"
        )
    coeff = spec.omega_ratio_coeff
    T_i = spec.beta / 4.0
    v_Ti = math.sqrt(T_i)
    v_Te = v_Ti * math.sqrt(m_r)
    drift_ratio = (
        spec.drift_ratio if spec.drift_ratio is not None else 9.0 + 9.0 / m_r
    )
    G_y = drift_ratio * v_Ti * coeff / (1.0 + 1.0 / m_r)
    Omega_i = coeff
    Omega_e = -coeff * m_r
    u_ix = G_y / Omega_i
    u_ex = G_y / Omega_e
    if abs(abs(u_ix - u_ex) - drift_ratio * v_Ti) > 1e-12:
        raise ValueError("inconsistent drift closure")
    alpha_i = 12.14
    alpha_e = 18.21 if m_r < 100.0 else 6.07
    k = spec.k
    if k is None:
        if m_r != 25.0:
            raise ValueError(
                "no default wavenumber for this mass ratio: pass k "
                "(fastest-growing mode from the dispersion oracle)"
            )
        k = DRIFT_K_MR25
    return dict(
        m_r=m_r, T_i=T_i, T_e=T_i, v_Ti=v_Ti, v_Te=v_Te, G_y=G_y,
        Omega_i=Omega_i, Omega_e=Omega_e, omega_pi2=1.0, omega_pe2=m_r,
        u_ix=u_ix, u_ex=u_ex, alpha_i=alpha_i, alpha_e=alpha_e, k=k,
        kappa_c=coeff,
    )


def lhdi_species(spec: ProblemSpec):
    """Ion and electron configs (uniform acceleration acts on both)."""
    c = lhdi_closure(spec)
    ion = SpeciesConfig(
        name="i", q=1.0, m=1.0, kappa2=1.0, kappa_c=c["kappa_c"], Bz=1.0,
        G=(0.0, c["G_y"]),
    )
    ele = SpeciesConfig(
        name="e", q=-1.0, m=1.0 / c["m_r"], kappa2=1.0, kappa_c=c["kappa_c"],
        Bz=1.0, G=(0.0, c["G_y"]),
    )
    return ion, ele


def lhdi_grids(spec: ProblemSpec, N, Nv=None):
    """Per-species grids: shared physical box (one wavelength), per-species
    velocity boxes u_s ± alpha_s v_Ts in each velocity dimension."""
    c = lhdi_closure(spec)
    L = 2.0 * math.pi / c["k"]
    Nv = Nv if Nv is not None else N
    grids = {}
    for name, u, alpha, vt in (
        ("i", c["u_ix"], c["alpha_i"], c["v_Ti"]),
        ("e", c["u_ex"], c["alpha_e"], c["v_Te"]),
    ):
        half = alpha * vt
        grids[name] = make_grid(
            1,
            2,
            (N, Nv, Nv),
            (0.0, u - half, -half),
            (L, u + half, half),
        )
    return grids


def init_lhdi(grids, spec: ProblemSpec, order=8):
    """Drifting-Maxwellian pair with an electron-side density perturbation:

        f_s = (1/(2 pi v_Ts^2)) exp(-(v - u_s)^2 / (2 v_Ts^2))
              * (1 + delta_s sin(k x))

    ``grids`` maps species name ("i", "e") to its grid (see lhdi_grids).
    Returns a dict of DistFields keyed the same way.
    """
    c = lhdi_closure(spec)
    out = {}
    for name, u, vt, delta in (
        ("i", c["u_ix"], c["v_Ti"], spec.delta_i),
        ("e", c["u_ex"], c["v_Te"], spec.delta_e),
    ):
        grid = grids[name]
        _require(grid, 1, 2, "the cross-field drift benchmark")
        _require_box(grid, c["k"], "cross-field drift benchmark")
        norm = 1.0 / (2.0 * math.pi * vt * vt)

        def maxw(vv, u0=u, vt2=vt * vt):
            return np.exp(-((vv - u0) ** 2) / (2.0 * vt2))

        pert = 1.0 + delta * line_averages(
            lambda x: np.sin(c["k"] * x), grid, 0, order
        )
        mx = line_averages(lambda vv: maxw(vv), grid, 1, order)
        my = line_averages(lambda vv: maxw(vv, u0=0.0), grid, 2, order)
        data = norm * pert[:, None, None] * mx[None, :, None] * my[None, None, :]
        out[name] = DistField(grid=grid, species=name, data=data)
    return out


# ---------------------------------------------------------------------------
# Landau damping


def init_landau(grid: PhaseSpaceGrid, spec: ProblemSpec, order=8):
    """Perturbed resting Maxwellian.

    2D-2V: f = (1/(2 pi)) exp(-(vx^2+vy^2)/2) (1 + a cos(kx x) + a cos(ky y))
    1D-1V reduced variant: f = (1/sqrt(2 pi)) exp(-v^2/2) (1 + a cos(kx x)).
    """
    if (grid.d, grid.v) == (1, 1):
        _require_box(grid, spec.k_x, "Landau benchmark")
        ax = line_averages(lambda x: np.cos(spec.k_x * x), grid, 0, order)
        mv = line_averages(
            lambda vv: np.exp(-0.5 * vv * vv) / math.sqrt(2.0 * math.pi),
            grid, 1, order,
        )
        data = (1.0 + spec.alpha * ax)[:, None] * mv[None, :]
        return DistField(grid=grid, species="e", data=data)
    if (grid.d, grid.v) == (2, 2):
        _require_box(grid, spec.k_x, "Landau benchmark")
        ax = line_averages(lambda x: np.cos(spec.k_x * x), grid, 0, order)
        ay = line_averages(lambda y: np.cos(spec.k_y * y), grid, 1, order)
        mx = line_averages(
            lambda vv: np.exp(-0.5 * vv * vv) / math.sqrt(2.0 * math.pi),
            grid, 2, order,
        )
        my = line_averages(
            lambda vv: np.exp(-0.5 * vv * vv) / math.sqrt(2.0 * math.pi),
            grid, 3, order,
        )
        weight = (
            1.0
            + spec.alpha * ax[:, None]
            + spec.alpha * ay[None, :]
        )
        data = (
            weight[:, :, None, None]
            * mx[None, None, :, None]
            * my[None, None, None, :]
        )
        return DistField(grid=grid, species="e", data=data)
    raise ValueError(
        "the Landau benchmark requires a 2D-2V grid (or the 1D-1V reduced "
        f"variant), got {grid.d}D-{grid.v}V"
    )


def landau_species():
    return SpeciesConfig(name="e", q=-1.0, m=1.0, kappa2=1.0, kappa_c=0.0,
                         G=(0.0, 0.0))


# ---------------------------------------------------------------------------
# assembled setups


@dataclass
class ProblemSetup:
    """Everything the stepping loop needs for one benchmark."""

    spec: ProblemSpec
    species: tuple  # SpeciesConfig per species
    dists: list  # DistField per species, same order


def make_problem(spec: ProblemSpec, N, Nv=None, order=8):
    """Build grids, species, and initialized fields for a benchmark.

    ``N`` is the cell count along each physical dimension, ``Nv`` along each
    velocity dimension (defaults to ``N``).
    """
    Nv = Nv if Nv is not None else N
    if spec.problem == "two-stream":
        L = 2.0 * math.pi / spec.k
        grid = make_grid(1, 1, (N, Nv), (0.0, -spec.v_max), (L, spec.v_max))
        return ProblemSetup(spec, (two_stream_species(),),
                            [init_two_stream(grid, spec, order)])
    if spec.problem == "dgh":
        k = dgh_wavenumber(spec)
        L = 2.0 * math.pi / k
        grid = make_grid(
            1, 2, (N, Nv, Nv),
            (0.0, -spec.v_max, -spec.v_max), (L, spec.v_max, spec.v_max),
        )
        return ProblemSetup(spec, (dgh_species(spec),),
                            [init_dgh(grid, spec, order)])
    if spec.problem == "lhdi":
        grids = lhdi_grids(spec, N, Nv)
        dists = init_lhdi(grids, spec, order)
        return ProblemSetup(spec, lhdi_species(spec),
                            [dists["i"], dists["e"]])
    if spec.problem == "landau":
        L = 2.0 * math.pi / spec.k_x
        grid = make_grid(
            2, 2, (N, N, Nv, Nv),
            (0.0, 0.0, -spec.v_max, -spec.v_max),
            (L, L, spec.v_max, spec.v_max),
        )
        return ProblemSetup(spec, (landau_species(),),
                            [init_landau(grid, spec, order)])
    raise ValueError(f"unknown problem {spec.problem!r}")


def make_landau_1d(spec: ProblemSpec, N, Nv=None, order=8):
    """1D-1V reduced Landau setup (weak-damping desk runs)."""
    Nv = Nv if Nv is not None else N
    L = 2.0 * math.pi / spec.k_x
    grid = make_grid(1, 1, (N, Nv), (0.0, -spec.v_max), (L, spec.v_max))
    return ProblemSetup(spec, (landau_species(),),
                        [init_landau(grid, spec, order)])
