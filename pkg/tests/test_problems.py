"""Tests for benchmark initial conditions.

Independent oracles: pointwise full-dimensional quadrature (cross-checking
the separable fast paths), Gaussian-tail/erf reasoning for truncated-box
densities, closed-form closure arithmetic for the drift benchmark, and
self-refinement (order doubling) for quadrature accuracy.
"""

import math

import numpy as np
import pytest

from vpfv.fields import FieldState, higher_moments, zeroth_moment
from vpfv.grid import make_grid
from vpfv.problems import (
    DRIFT_K_MR25,
    ProblemSpec,
    dgh_spec,
    dgh_wavenumber,
    init_dgh,
    init_landau,
    init_lhdi,
    init_two_stream,
    landau_spec,
    lhdi_closure,
    lhdi_grids,
    lhdi_spec,
    make_landau_1d,
    make_problem,
    quadrature_init,
    two_stream_spec,
)


class TestQuadratureInit:
    """Tensor-product Gauss-Legendre cell averaging."""

    def test_constant_is_exact(self):
        grid = make_grid(1, 1, (8, 8), (0.0, -1.0), (1.0, 1.0))
        data = quadrature_init(lambda x, v: np.ones(np.broadcast(x, v).shape),
                               grid)
        assert np.max(np.abs(data - 1.0)) < 1e-14

    def test_quadratic_matches_analytic_average(self):
        """Cell average of x^2 is x_c^2 + h^2/12, exactly at low degree."""
        grid = make_grid(1, 1, (8, 8), (0.0, -1.0), (2.0, 1.0))
        data = quadrature_init(lambda x, v: x * x + 0.0 * v, grid)
        h = grid.h[0]
        xc = grid.padded_centers(0)
        want = xc * xc + h * h / 12.0
        assert np.max(np.abs(data - want[:, None])) < 1e-14

    def test_gaussian_self_refinement(self):
        """Order 8 vs order 16 on h = 0.1 cells differ below 1e-14."""
        grid = make_grid(1, 1, (10, 10), (0.0, -0.5), (1.0, 0.5))
        f = lambda x, v: np.exp(-((x - 0.45) ** 2 + v**2) / 0.08)
        a = quadrature_init(f, grid, order=8)
        b = quadrature_init(f, grid, order=16)
        assert np.max(np.abs(a - b)) < 1e-14

    def test_periodic_ghost_columns_wrap(self):
        grid = make_grid(1, 1, (8, 8), (0.0, -1.0), (1.0, 1.0))
        data = quadrature_init(
            lambda x, v: np.sin(2.0 * np.pi * x) + 0.0 * v, grid
        )
        assert np.array_equal(data[0:3], data[8 : 8 + 3])
        assert np.array_equal(data[-3:], data[3:6])


class TestTwoStream:
    """Counter-streaming beam initialization."""

    def _build(self, **over):
        spec = two_stream_spec(**over)
        L = 2.0 * math.pi / spec.k
        grid = make_grid(1, 1, (32, 64), (0.0, -spec.v_max), (L, spec.v_max))
        return grid, spec, init_two_stream(grid, spec)

    def test_matches_generic_quadrature(self):
        """The separable assembly equals full 2D quadrature of the printed
        density."""
        spec = two_stream_spec(delta=1e-2)
        L = 2.0 * math.pi / spec.k
        grid = make_grid(1, 1, (8, 8), (0.0, -spec.v_max), (L, spec.v_max))
        fast = init_two_stream(grid, spec)
        vt = math.sqrt(spec.v_T2)

        def pointwise(x, v):
            norm = 1.0 / (vt * math.sqrt(2.0 * math.pi))
            up = (0.5 + spec.delta * np.sin(spec.k * x)) * np.exp(
                -((v - spec.u) ** 2) / (2.0 * vt * vt)
            )
            dn = (0.5 - spec.delta * np.sin(spec.k * x)) * np.exp(
                -((v + spec.u) ** 2) / (2.0 * vt * vt)
            )
            return norm * (up + dn)

        ref = quadrature_init(pointwise, grid)
        assert np.max(np.abs(fast.data - ref)) < 1e-14

    def test_unperturbed_is_even_with_zero_momentum(self):
        grid, spec, f = self._build(delta=0.0)
        assert np.allclose(f.data, f.data[:, ::-1], rtol=0.0, atol=1e-16)
        momentum, _ = higher_moments(f)
        assert np.max(np.abs(momentum[0])) < 1e-14

    def test_density_is_uniform_and_unit(self):
        """Total density stays exactly 1: the perturbation only moves
        density between beams.  Truncation at v_max = 8 is ~ exp(-245)."""
        grid, spec, f = self._build()
        n = zeroth_moment(f)
        assert np.max(np.abs(n - 1.0)) < 1e-10

    def test_standard_configuration(self):
        grid, spec, f = self._build(v_T2=0.1, u=1.0, delta=1e-5, k=0.6)
        assert spec.v_T2 == 0.1 and spec.delta == 1e-5
        assert abs(grid.hi[0] - 2.0 * math.pi / 0.6) < 1e-12

    def test_rejects_wrong_dimensionality(self):
        grid = make_grid(1, 2, (8, 8, 8), (0.0, -8.0, -8.0),
                         (2.0 * math.pi / 0.6, 8.0, 8.0))
        with pytest.raises(ValueError, match="1D-1V"):
            init_two_stream(grid, two_stream_spec())

    def test_rejects_wrong_box_length(self):
        grid = make_grid(1, 1, (8, 8), (0.0, -8.0), (5.0, 8.0))
        with pytest.raises(ValueError, match="wavelength"):
            init_two_stream(grid, two_stream_spec(k=0.6))


class TestRingDistribution:
    """Perturbed electron ring initialization."""

    def _build(self, N=24, Nv=32, **over):
        spec = dgh_spec(**over)
        k = dgh_wavenumber(spec)
        L = 2.0 * math.pi / k
        grid = make_grid(
            1, 2, (N, Nv, Nv),
            (0.0, -spec.v_max, -spec.v_max), (L, spec.v_max, spec.v_max),
        )
        return grid, spec, init_dgh(grid, spec)

    def test_matches_generic_quadrature(self):
        """Separable ring + mode-4 assembly equals full 3D quadrature of the
        printed density (azimuthal angle via arctan identities)."""
        spec = dgh_spec(delta=1e-2)
        k = dgh_wavenumber(spec)
        L = 2.0 * math.pi / k
        grid = make_grid(1, 2, (8, 10, 10), (0.0, -8.0, -8.0), (L, 8.0, 8.0))
        fast = init_dgh(grid, spec)
        a2 = spec.alpha_perp**2
        c0 = 1.0 / (math.pi * math.factorial(spec.ell) * a2)

        def pointwise(x, vx, vy):
            v2 = vx * vx + vy * vy
            ring = c0 * (v2 / a2) ** spec.ell * np.exp(-v2 / a2)
            theta = np.arctan2(vy, vx)
            return ring * (1.0 + spec.delta * np.sin(4.0 * theta - k * x))

        ref = quadrature_init(pointwise, grid)
        assert np.max(np.abs(fast.data - ref)) < 1e-14

    def test_radial_peak_location(self):
        """Unperturbed ring peaks at perpendicular speed sqrt(ell) alpha
        = sqrt(2), within one velocity cell."""
        grid, spec, f = self._build(delta=0.0, Nv=48)
        sl = f.interior[0]
        idx = np.unravel_index(np.argmax(sl), sl.shape)
        vx = grid.centers(1)[idx[0]]
        vy = grid.centers(2)[idx[1]]
        h = max(grid.h[1], grid.h[2])
        assert abs(math.hypot(vx, vy) - math.sqrt(2.0)) <= h + 1e-12

    def test_unperturbed_density_is_unit(self):
        grid, spec, f = self._build(delta=0.0, Nv=48)
        n = zeroth_moment(f)
        assert np.max(np.abs(n - 1.0)) < 1e-10

    def test_perturbed_density_is_still_uniform(self):
        """The mode-4 azimuthal perturbation has zero velocity-space mean."""
        grid, spec, f = self._build(Nv=48)
        n = zeroth_moment(f)
        assert np.max(np.abs(n - 1.0)) < 1e-10

    def test_mode4_projection_recovers_amplitude(self):
        """Projecting delta-f onto ring * sin(4 theta - k x) returns the
        perturbation amplitude.

        The basis is cell-averaged by composite midpoint subdivision,
        written out here independently of the module's quadrature, so the
        check exercises the azimuthal-identity assembly, not just
        round-tripping one integrator against itself.
        """
        delta = 1e-4
        N, Nv, m = 16, 48, 6
        grid, spec, f = self._build(N=N, Nv=Nv, delta=delta)
        base = init_dgh(grid, dgh_spec(delta=0.0))
        df = f.interior - base.interior
        k = dgh_wavenumber(spec)
        L = grid.hi[0]

        def fine(lo, hi, n):
            h = (hi - lo) / (n * m)
            return lo + (np.arange(n * m) + 0.5) * h

        x = fine(0.0, L, N)[:, None, None]
        vx = fine(-spec.v_max, spec.v_max, Nv)[None, :, None]
        vy = fine(-spec.v_max, spec.v_max, Nv)[None, None, :]
        v2 = vx * vx + vy * vy
        theta = np.arctan2(vy, vx)
        a2 = spec.alpha_perp**2
        ring = (
            (v2 / a2) ** spec.ell
            * np.exp(-v2 / a2)
            / (math.pi * math.factorial(spec.ell) * a2)
        )
        basis = (
            (ring * np.sin(4.0 * theta - k * x))
            .reshape(N, m, Nv, m, Nv, m)
            .mean(axis=(1, 3, 5))
        )
        amp = np.sum(df * basis) / np.sum(basis * basis)
        assert abs(amp - delta) < 0.01 * delta, f"projected {amp} vs {delta}"

    def test_order_refinement_below_time_error(self):
        """Doubling the quadrature order moves the field by < 1e-14."""
        spec = dgh_spec()
        k = dgh_wavenumber(spec)
        L = 2.0 * math.pi / k
        grid = make_grid(1, 2, (8, 48, 48), (0.0, -8.0, -8.0), (L, 8.0, 8.0))
        a = init_dgh(grid, spec, order=8)
        b = init_dgh(grid, spec, order=16)
        assert np.max(np.abs(a.data - b.data)) < 1e-14

    def test_rejects_small_ring_exponent(self):
        grid, spec, _ = self._build(N=8, Nv=8)
        with pytest.raises(ValueError, match="ell"):
            init_dgh(grid, dgh_spec(ell=1))

    def test_rejects_wrong_dimensionality(self):
        grid = make_grid(1, 1, (8, 8), (0.0, -8.0), (55.536, 8.0))
        with pytest.raises(ValueError, match="1D-2V"):
            init_dgh(grid, dgh_spec())


class TestDriftClosure:
    """Parameter closure for the cross-field drift benchmark."""

    def test_mass_ratio_25_primitives(self):
        c = lhdi_closure(lhdi_spec())
        assert abs(c["v_Ti"] - 0.025) < 1e-15
        assert abs(c["v_Te"] - 0.125) < 1e-15
        assert abs(c["G_y"] - 2.25e-3) < 1e-18
        assert c["Omega_i"] == 0.01 and c["Omega_e"] == -0.25
        assert c["omega_pi2"] == 1.0 and c["omega_pe2"] == 25.0
        assert c["k"] == DRIFT_K_MR25

    def test_drift_difference_equals_ratio(self):
        for m_r in (25.0, 64.0, 100.0, 400.0):
            c = lhdi_closure(lhdi_spec(m_r=m_r, k=1.0))
            want = (9.0 + 9.0 / m_r) * c["v_Ti"]
            assert abs(abs(c["u_ix"] - c["u_ex"]) - want) < 1e-15

    def test_cyclotron_to_plasma_ratio(self):
        for m_r in (25.0, 100.0):
            c = lhdi_closure(lhdi_spec(m_r=m_r, k=1.0))
            got = abs(c["Omega_e"]) / math.sqrt(c["omega_pe2"])
            assert abs(got - 1e-2 * math.sqrt(m_r)) < 1e-15

    def test_beta_recovered(self):
        c = lhdi_closure(lhdi_spec())
        beta = 2.0 * (c["T_i"] + c["T_e"])  # unit density, unit-pressure field
        assert abs(beta - 2.5e-3) < 1e-18

    def test_velocity_box_margins(self):
        assert lhdi_closure(lhdi_spec())["alpha_e"] == 18.21
        assert lhdi_closure(lhdi_spec(m_r=100.0, k=1.0))["alpha_e"] == 6.07
        assert lhdi_closure(lhdi_spec())["alpha_i"] == 12.14

    def test_rejects_unequal_temperatures(self):
        with pytest.raises(ValueError, match="temp"):
            lhdi_closure(lhdi_spec(temp_ratio=2.0))

    def test_requires_wavenumber_off_reference_mass_ratio(self):
        with pytest.raises(ValueError, match="wavenumber"):
            lhdi_closure(lhdi_spec(m_r=64.0))


class TestDriftInit:
    """Cross-field drifting Maxwellian initialization."""

    def _build(self, N=16, Nv=24, **over):
        spec = lhdi_spec(**over)
        grids = lhdi_grids(spec, N, Nv)
        return spec, grids, init_lhdi(grids, spec)

    def test_matches_generic_quadrature(self):
        spec, grids, dists = self._build(N=8, Nv=8)
        c = lhdi_closure(spec)
        for name, u, vt, delta in (
            ("i", c["u_ix"], c["v_Ti"], 0.0),
            ("e", c["u_ex"], c["v_Te"], 1e-3),
        ):
            def pointwise(x, vx, vy, u=u, vt=vt, delta=delta):
                norm = 1.0 / (2.0 * math.pi * vt * vt)
                return (
                    norm
                    * np.exp(-((vx - u) ** 2 + vy**2) / (2.0 * vt * vt))
                    * (1.0 + delta * np.sin(c["k"] * x))
                )

            ref = quadrature_init(pointwise, grids[name])
            assert np.max(np.abs(dists[name].data - ref)) < 1e-12

    def test_ion_density_is_unperturbed(self):
        spec, grids, dists = self._build()
        n_i = zeroth_moment(dists["i"])
        assert np.var(n_i) <= 1e-14
        assert np.max(np.abs(n_i - 1.0)) < 1e-10

    def test_electron_density_carries_the_perturbation(self):
        """Discrete sine projection of n_e recovers delta_e damped by the
        exact cell-average factor sin(kh/2)/(kh/2)."""
        spec, grids, dists = self._build()
        n_e = zeroth_moment(dists["e"])
        x = grids["e"].centers(0)
        k = lhdi_closure(spec)["k"]
        amp = 2.0 * np.mean((n_e - 1.0) * np.sin(k * x))
        arg = 0.5 * k * grids["e"].h[0]
        want = spec.delta_e * math.sin(arg) / arg
        assert abs(amp - want) < 1e-9 * spec.delta_e, f"{amp} vs {want}"

    def test_velocity_boxes_are_centered_on_drifts(self):
        spec, grids, _ = self._build()
        c = lhdi_closure(spec)
        gi, ge = grids["i"], grids["e"]
        assert abs(0.5 * (gi.lo[1] + gi.hi[1]) - c["u_ix"]) < 1e-15
        assert abs(0.5 * (ge.lo[1] + ge.hi[1]) - c["u_ex"]) < 1e-15
        assert abs(gi.hi[1] - gi.lo[1] - 2 * 12.14 * c["v_Ti"]) < 1e-12
        assert abs(ge.hi[2] - ge.lo[2] - 2 * 18.21 * c["v_Te"]) < 1e-12


class TestLandau:
    """Perturbed-Maxwellian initialization."""

    def test_matches_generic_quadrature_2d2v(self):
        spec = landau_spec()
        L = 4.0 * math.pi
        grid = make_grid(
            2, 2, (8, 8, 8, 8), (0.0, 0.0, -8.0, -8.0), (L, L, 8.0, 8.0)
        )
        fast = init_landau(grid, spec)

        def pointwise(x, y, vx, vy):
            return (
                np.exp(-0.5 * (vx * vx + vy * vy))
                / (2.0 * math.pi)
                * (1.0 + 0.5 * np.cos(0.5 * x) + 0.5 * np.cos(0.5 * y))
            )

        ref = quadrature_init(pointwise, grid)
        assert np.max(np.abs(fast.data - ref)) < 1e-14

    def test_standard_box_is_4pi(self):
        spec = landau_spec()
        assert spec.alpha == 0.5 and spec.k_x == 0.5 and spec.k_y == 0.5
        assert abs(2.0 * math.pi / spec.k_x - 4.0 * math.pi) < 1e-14

    def test_mean_density_is_unit(self):
        """Cosine perturbations integrate to zero over the periodic box."""
        setup = make_problem(landau_spec(), 12, 16)
        n = zeroth_moment(setup.dists[0])
        assert abs(np.mean(n) - 1.0) < 1e-10
        assert np.max(np.abs(n - 1.0)) > 0.4  # alpha = 0.5 modulation present

    def test_unperturbed_field_is_zero(self):
        setup = make_problem(landau_spec(alpha=0.0), 8, 12)
        state = FieldState.solve(setup.dists, setup.species)
        assert max(state.max_E.values()) < 1e-13

    def test_reduced_variant(self):
        setup = make_landau_1d(landau_spec(alpha=0.01), 16, 32)
        grid = setup.dists[0].grid
        n = zeroth_moment(setup.dists[0])
        assert abs(np.mean(n) - 1.0) < 1e-10
        x = grid.centers(0)
        amp = 2.0 * np.mean((n - 1.0) * np.cos(0.5 * x))
        arg = 0.25 * grid.h[0]
        want = 0.01 * math.sin(arg) / arg
        assert abs(amp - want) < 1e-12, f"{amp} vs {want}"

    def test_rejects_wrong_dimensionality(self):
        grid = make_grid(1, 2, (8, 8, 8), (0.0, -8.0, -8.0),
                         (4.0 * math.pi, 8.0, 8.0))
        with pytest.raises(ValueError, match="2D-2V"):
            init_landau(grid, landau_spec())


class TestProblemSpec:
    def test_unknown_problem_rejected(self):
        with pytest.raises(ValueError, match="unknown problem"):
            ProblemSpec("bump-on-tail")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError, match="unknown parameters"):
            two_stream_spec(vt=0.1)

    def test_defaults_are_standard(self):
        assert two_stream_spec().params == dict(
            v_T2=0.1, u=1.0, delta=1e-5, k=0.6, v_max=8.0
        )
        d = dgh_spec().params
        assert d["ell"] == 4 and d["delta"] == 1e-4 and d["kbar"] == 3.2
        assert d["omega_ratio"] == 0.05
        assert abs(d["alpha_perp"] - math.sqrt(2.0) / 2.0) < 1e-15
        l = lhdi_spec().params
        assert l["m_r"] == 25.0 and l["delta_e"] == 1e-3 and l["delta_i"] == 0.0
        assert l["beta"] == 2.5e-3

    def test_make_problem_two_stream(self):
        setup = make_problem(two_stream_spec(), 16, 32)
        assert len(setup.dists) == 1
        assert setup.species[0].q == -1.0
        assert setup.dists[0].grid.N == (16, 32)

    def test_make_problem_lhdi_two_species(self):
        setup = make_problem(lhdi_spec(), 8, 12)
        assert len(setup.dists) == 2
        assert setup.species[0].name == "i" and setup.species[1].name == "e"
        assert setup.species[1].m == 1.0 / 25.0
        assert setup.species[0].G == (0.0, 2.25e-3)
