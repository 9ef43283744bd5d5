"""Integrator equivalence, stability polynomial, CFL bound, buffer audit."""

import math
import tracemalloc

import numpy as np
import pytest

from vpfv._kernels import fused_stage
from vpfv.fvm import SpeciesConfig, vlasov_rhs
from vpfv.grid import DistField, fill_local_ghosts, make_grid
from vpfv.timestepping import (
    DEFAULT_SIGMA,
    StepContext,
    array_stage,
    max_stable_dt,
    rk4_38_low_storage_step,
    rk4_butcher_step,
)


def R(z):
    return 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24


def scalar_stage(lam):
    def stage(dest, A, B, src, ca, cb, cd, cL, t):
        dest[...] = ca * A + cb * B + cd * dest + cL * (lam * src)

    return stage


class TestStabilityPolynomial:
    @pytest.mark.parametrize("z", [-0.5, -2.0, 0.3, -1.0 + 1.2j, 2.5j])
    def test_butcher_reproduces_quartic(self, z):
        dt = 0.7
        lam = z / dt
        got = rk4_butcher_step(np.asarray(1.0 + 0j), dt, lambda u, t: lam * u)
        assert abs(got - R(z)) <= 1e-14 * abs(R(z))

    @pytest.mark.parametrize("z", [-0.5, -2.0, 0.3, -1.0 + 1.2j, 2.5j])
    def test_low_storage_reproduces_quartic(self, z):
        dt = 0.7
        lam = z / dt
        ctx = StepContext(
            f0=np.asarray(1.0 + 0j),
            f1=np.zeros((), complex),
            fout=np.zeros((), complex),
        )
        rk4_38_low_storage_step(ctx, dt, scalar_stage(lam))
        assert abs(ctx.fout - R(z)) <= 1e-13 * abs(R(z))

    def test_zero_rhs_identity(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal(1000) * np.exp(rng.uniform(-20, 20, 1000))
        out = rk4_butcher_step(u, 0.5, lambda y, t: np.zeros_like(y))
        assert np.array_equal(out, u)

    def test_dt_zero_low_storage_identity_to_one_ulp(self):
        # the 3/8 coefficients (0.375, 0.75) each round once, so the
        # three-buffer mixing reproduces the state to 1 ulp, not bitwise
        rng = np.random.default_rng(2)
        u = rng.standard_normal(1000)
        ctx = StepContext(f0=u.copy(), f1=np.empty_like(u), fout=np.empty_like(u))
        rk4_38_low_storage_step(ctx, 0.0, scalar_stage(0.0))
        assert np.all(np.abs(ctx.fout - u) <= 2 * np.spacing(np.abs(u)))

    def test_nonautonomous_quadrature_order(self):
        # integrate u' = cos(t) over [0,1]; global error slope 4
        errs = []
        for n in (8, 16, 32):
            dt = 1.0 / n
            u, t = np.asarray(0.0), 0.0
            for _ in range(n):
                u = rk4_butcher_step(u, dt, lambda y, tt: np.cos(tt), t=t)
                t += dt
            errs.append(abs(float(u) - math.sin(1.0)))
        slope = np.log2(errs[1] / errs[2])
        assert 3.8 <= slope <= 4.2, f"slope {slope:.2f}, errors {errs}"


class TestDualIntegrator:
    def test_linear_100_steps(self):
        lam = -1.3
        dt = 0.02
        ub = np.asarray(1.0)
        ctx = StepContext(f0=np.asarray(1.0), f1=np.zeros(()), fout=np.zeros(()))
        st = scalar_stage(lam)
        for _ in range(100):
            ub = rk4_butcher_step(ub, dt, lambda u, t: lam * u)
            rk4_38_low_storage_step(ctx, dt, st)
            ctx.rotate()
        assert abs(float(ctx.f0) - float(ub)) <= 1e-12 * abs(float(ub))

    def test_nonlinear_50_steps(self):
        def L(u, t):
            return -(u**2)

        def stage(dest, A, B, src, ca, cb, cd, cL, t):
            dest[...] = ca * A + cb * B + cd * dest + cL * (-(src**2))

        ub = np.asarray(1.0)
        ctx = StepContext(f0=np.asarray(1.0), f1=np.zeros(()), fout=np.zeros(()))
        for _ in range(50):
            ub = rk4_butcher_step(ub, 0.05, L)
            rk4_38_low_storage_step(ctx, 0.05, stage)
            ctx.rotate()
        assert abs(float(ctx.f0) - float(ub)) <= 1e-13 * abs(float(ub))


def _advection_setup(N=32):
    """All-periodic 1D-1V box with a fixed external field (no Poisson)."""
    g = make_grid(1, 1, [N, N], [0, -1], [2 * np.pi, 1], periodic=(True, True))
    s = SpeciesConfig(q=-1.0, m=1.0, kappa2=1.0, G=(0.05,))
    E = {"Ex": 0.3 * np.sin(g.centers(0))}
    x, v = np.meshgrid(g.centers(0), g.centers(1), indexing="ij")
    f = DistField(g)
    f.data[g.interior_slices()] = np.exp(np.sin(x)) * (2 + np.sin(np.pi * v))
    fill_local_ghosts(f, None)
    return g, s, E, f


class TestKernelEquivalence:
    """The fused compiled kernels against the numpy reference operator."""

    def test_1d1v_stage(self):
        g, s, E, f = _advection_setup()
        rng = np.random.default_rng(0)
        A = rng.random(g.padded_shape)
        B = rng.random(g.padded_shape)
        dest = rng.random(g.padded_shape)
        want = (
            0.4 * A[g.interior_slices()]
            - 1.1 * B[g.interior_slices()]
            + 2.0 * dest[g.interior_slices()]
            + 0.37 * vlasov_rhs(f, s, E)
        )
        fused_stage(dest, A, B, f.data, 0.4, -1.1, 2.0, 0.37, g, s, E)
        got = dest[g.interior_slices()]
        scale = np.max(np.abs(want))
        assert np.max(np.abs(got - want)) <= 2e-13 * scale

    def test_1d2v_stage(self):
        N = 16
        g = make_grid(
            1, 2, [N, N, N], [0, -1, -1.5], [2 * np.pi, 1, 1.5],
            periodic=(True, True, True),
        )
        s = SpeciesConfig(q=-1.0, kappa2=1.1, kappa_c=0.4, Bz=1.0, G=(0.0, 0.1))
        E = {"Ex": 0.5 * np.sin(g.centers(0))}
        rng = np.random.default_rng(1)
        f = DistField(g)
        f.data[g.interior_slices()] = 1.0 + 0.3 * rng.random(g.shape)
        fill_local_ghosts(f, None)
        dest = np.zeros(g.padded_shape)
        fused_stage(dest, f.data, f.data, f.data, 0.0, 0.0, 0.0, 1.0, g, s, E)
        want = vlasov_rhs(f, s, E)
        got = dest[g.interior_slices()]
        scale = np.max(np.abs(want))
        assert np.max(np.abs(got - want)) <= 2e-13 * scale

    def test_2d2v_stage(self):
        N = 10
        g = make_grid(
            2, 2, [N, N, N, N], [0, 0, -1, -1.5],
            [2 * np.pi, 2 * np.pi, 1, 1.5],
            periodic=(True, True, True, True),
        )
        s = SpeciesConfig(q=-1.0, kappa2=1.3, kappa_c=0.4, Bz=1.0)
        cx, cy = g.centers(0), g.centers(1)
        E = {
            "Ex": 0.4 * np.outer(np.sin(cx), np.cos(cy)),
            "Ey": 0.4 * np.outer(np.cos(cx), np.sin(cy)),
        }
        rng = np.random.default_rng(2)
        f = DistField(g)
        f.data[g.interior_slices()] = 1.0 + 0.3 * rng.random(g.shape)
        fill_local_ghosts(f, None)
        dest = np.zeros(g.padded_shape)
        fused_stage(dest, f.data, f.data, f.data, 0.0, 0.0, 0.0, 1.0, g, s, E)
        want = vlasov_rhs(f, s, E)
        got = dest[g.interior_slices()]
        scale = np.max(np.abs(want))
        assert np.max(np.abs(got - want)) <= 2e-13 * scale

    def test_alias_src_rejected(self):
        g, s, E, f = _advection_setup(16)
        with pytest.raises(ValueError):
            fused_stage(f.data, f.data, f.data, f.data, 0, 0, 0, 1.0, g, s, E)

    def test_nonfinite_stage_detected(self):
        g, s, E, f = _advection_setup(16)
        f.data[8, 8] = np.inf
        dest = np.zeros(g.padded_shape)
        with pytest.raises(FloatingPointError):
            fused_stage(dest, f.data, f.data, f.data, 0, 0, 0, 1.0, g, s, E)


def _pde_stage(g, s, E):
    def stage(dest, A, B, src, ca, cb, cd, cL, t):
        fd = DistField(g, data=src)
        fill_local_ghosts(fd, None)
        fused_stage(dest, A, B, src, ca, cb, cd, cL, g, s, E)

    return stage


class TestPdeDualRun:
    def test_advection_20_steps_matches_butcher(self):
        g, s, E, f = _advection_setup(32)
        dt = 0.02

        def L(y, t):
            fd = DistField(g, data=y.copy())
            fill_local_ghosts(fd, None)
            out = np.zeros(g.padded_shape)
            out[g.interior_slices()] = vlasov_rhs(fd, s, E)
            return out

        ub = f.data.copy()
        ctx = StepContext(
            f0=f.data.copy(), f1=np.zeros(g.padded_shape), fout=np.zeros(g.padded_shape)
        )
        st = _pde_stage(g, s, E)
        for _ in range(20):
            ub = rk4_butcher_step(ub, dt, L)
            rk4_38_low_storage_step(ctx, dt, st)
            ctx.rotate()
        a = ctx.f0[g.interior_slices()]
        b = ub[g.interior_slices()]
        scale = np.max(np.abs(b))
        assert np.max(np.abs(a - b)) <= 1e-12 * scale

    def test_three_buffer_allocation_audit(self):
        # after warm-up, stepping must not allocate another field-sized array
        g, s, E, f = _advection_setup(96)
        buf_bytes = f.data.nbytes
        ctx = StepContext(
            f0=f.data.copy(), f1=np.zeros(g.padded_shape), fout=np.zeros(g.padded_shape)
        )
        st = _pde_stage(g, s, E)
        rk4_38_low_storage_step(ctx, 0.01, st)  # warm the compiled kernels
        ctx.rotate()
        tracemalloc.start()
        base, _ = tracemalloc.get_traced_memory()
        for _ in range(10):
            rk4_38_low_storage_step(ctx, 0.01, st)
            ctx.rotate()
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert peak - base < buf_bytes / 4, (
            f"stepping allocated {peak - base} bytes transiently; "
            f"a field buffer is {buf_bytes}"
        )


class TestMaxStableDt:
    def test_reference_value(self):
        # two dims with A/h = 1 each: dt = sigma / 2
        assert max_stable_dt([[1.0, 1.0]], [1.0, 1.0], sigma=1.73) == pytest.approx(0.865)

    def test_l1_beats_scaled_linf_bound(self):
        # anisotropic speeds: the L1 bound nearly doubles the conservative
        # D * max|A/h| bound (factor -> D in the limit)
        sigma = 1.73
        dt_l1 = max_stable_dt([[1.0, 0.01]], [1.0, 1.0], sigma=sigma)
        dt_linf = sigma / (2 * max(1.0, 0.01))
        assert dt_l1 / dt_linf == pytest.approx(2.0 / 1.01, rel=1e-12)
        assert dt_l1 / dt_linf == pytest.approx(1.98, abs=0.01)

    def test_equal_speeds_norms_coincide(self):
        sigma = DEFAULT_SIGMA
        dt_l1 = max_stable_dt([[0.7, 0.7, 0.7]], [1, 1, 1], sigma=sigma)
        assert dt_l1 == pytest.approx(sigma / (3 * 0.7))

    def test_min_over_species(self):
        fast = [2.0, 1.0]
        slow = [0.1, 0.1]
        dt = max_stable_dt([slow, fast], [1.0, 1.0], sigma=1.73)
        assert dt == pytest.approx(1.73 / 3.0)

    def test_all_zero_speeds_unbounded(self):
        assert max_stable_dt([[0.0, 0.0]], [1.0, 1.0]) == math.inf

    def test_safety_fraction(self):
        dt = max_stable_dt([[1.0, 1.0]], [1.0, 1.0], sigma=1.73, safety=0.9)
        assert dt == pytest.approx(0.865 * 0.9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            max_stable_dt([[1.0]], [1.0, 1.0])


class TestEmpiricalStability:
    """Constant-advection runs bracketing the CFL bound."""

    def _run(self, dt_frac, steps=2000):
        g = make_grid(1, 1, [32, 32], [0, -1], [2 * np.pi, 1], periodic=(True, True))
        s = SpeciesConfig(q=1.0, m=1.0, kappa2=1.0, G=(0.2,))
        E = {"Ex": np.full(32, 0.15)}
        x, v = np.meshgrid(g.centers(0), g.centers(1), indexing="ij")
        f = DistField(g)
        f.data[g.interior_slices()] = np.exp(np.sin(x) + 0.5 * np.cos(np.pi * v))
        fill_local_ghosts(f, None)
        vmax = np.max(np.abs(g.centers(1)))
        amax = abs(1.0 * 1.0 * 0.15 + 0.2)
        dt_max = max_stable_dt([[vmax, amax]], g.h, sigma=1.73)
        ctx = StepContext(
            f0=f.data, f1=np.zeros(g.padded_shape), fout=np.zeros(g.padded_shape)
        )
        st = _pde_stage(g, s, E)
        norm0 = np.max(np.abs(ctx.f0[g.interior_slices()]))
        try:
            for _ in range(steps):
                rk4_38_low_storage_step(ctx, dt_frac * dt_max, st)
                ctx.rotate()
        except FloatingPointError:
            return norm0, math.inf
        return norm0, np.max(np.abs(ctx.f0[g.interior_slices()]))

    @pytest.mark.slow
    def test_below_bound_stays_bounded(self):
        n0, n = self._run(0.95)
        assert n <= 1.5 * n0, f"norm grew {n / n0:.2f}x below the CFL bound"

    @pytest.mark.slow
    def test_above_bound_diverges(self):
        n0, n = self._run(1.25)
        assert n > 10 * n0, f"norm only reached {n / n0:.2f}x above the CFL bound"
