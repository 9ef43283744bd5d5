"""Linear kinetic-theory oracles for the validation benchmarks.

Independent of the solver: the plasma dispersion function, a complex Newton
root finder over a guess grid, and the electrostatic dispersion relations for
counter-streaming Maxwellian beams, ring-distribution Bernstein modes
(magnetized, perpendicular propagation), cross-field drift modes driven by a
uniform acceleration, and Maxwellian Landau damping.

Conventions: frequencies are complex (Im > 0 grows); residuals are the
magnitude of the dielectric function at the root; every accepted root carries
its guess, iteration count, and residual so comparisons are auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_laguerre, ive, j0, roots_laguerre, wofz

SQRT_PI = math.sqrt(math.pi)

RESIDUAL_TOL = 1e-10  # acceptance gate for any returned root


# ---------------------------------------------------------------------------
# plasma dispersion function


def plasma_Z(zeta):
    """Plasma dispersion function Z(zeta) = j sqrt(pi) w(zeta).

    Faddeeva evaluation inside |zeta| < 50, four-term asymptotic series
    beyond (with the lower-half-plane pole term).  Raises OverflowError where
    exp(-zeta^2) would overflow in the continuation.
    """
    z = complex(zeta)
    if z.imag < 0.0 and z.imag * z.imag - z.real * z.real > 705.0:
        raise OverflowError(
            f"exp(-zeta^2) overflows in the lower-half-plane continuation at "
            f"zeta={z!r}"
        )
    if abs(z) < 50.0:
        return 1j * SQRT_PI * complex(wofz(z))
    z2 = z * z
    series = -(1.0 / z) * (1.0 + 0.5 / z2 + 0.75 / (z2 * z2) + 1.875 / (z2 * z2 * z2))
    if z.imag > 0.0:
        return series
    sigma = 1.0 if z.imag == 0.0 else 2.0
    return series + sigma * 1j * SQRT_PI * np.exp(-z2)


def plasma_Z_derivative(zeta):
    """Z'(zeta) via the ODE identity Z' = -2 (1 + zeta Z)."""
    z = complex(zeta)
    return -2.0 * (1.0 + z * plasma_Z(z))


# ---------------------------------------------------------------------------
# complex Newton over a guess grid


@dataclass(frozen=True)
class ComplexRoot:
    """A converged dispersion root with provenance."""

    omega: complex
    residual: float
    iterations: int
    guess: complex
    flags: tuple = ()

    def __post_init__(self):
        if self.residual > RESIDUAL_TOL:
            raise ValueError(
                f"root residual {self.residual:.3e} exceeds {RESIDUAL_TOL:.0e}"
            )


def newton_root(f, z0, restol=1e-11, maxiter=60):
    """Damped complex Newton with a central-difference derivative.

    Returns (z, |f(z)|, iterations) on convergence, None otherwise.
    """
    z = complex(z0)
    with np.errstate(all="ignore"):
        return _newton_loop(f, z, restol, maxiter)


def _newton_loop(f, z, restol, maxiter):
    # Track the best iterate: near machine-limited roots the step can cycle
    # in the residual noise floor without ever shrinking below the
    # stagnation threshold, yet the root is already converged.
    best_resid, best_z, best_it = math.inf, None, 0
    for it in range(1, maxiter + 1):
        try:
            fz = complex(f(z))
        except (OverflowError, ZeroDivisionError, FloatingPointError):
            break
        if not np.isfinite(fz.real) or not np.isfinite(fz.imag):
            break
        if abs(fz) < best_resid:
            best_resid, best_z, best_it = abs(fz), z, it
            if best_resid == 0.0:
                break
        h = 1e-7 * max(1.0, abs(z))
        try:
            df = (f(z + h) - f(z - h)) / (2.0 * h)
        except (OverflowError, ZeroDivisionError, FloatingPointError):
            break
        if df == 0.0 or not np.isfinite(df.real) or not np.isfinite(df.imag):
            break
        step = fz / df
        # keep steps sane so a guess near a pole cannot fling the iterate away
        if abs(step) > 1.0 + abs(z):
            step *= (1.0 + abs(z)) / abs(step)
        z = z - step
        if abs(step) <= 1e-13 * max(1.0, abs(z)):
            try:
                resid = abs(f(z))
            except (OverflowError, ZeroDivisionError, FloatingPointError):
                break
            if resid < best_resid:
                best_resid, best_z, best_it = resid, z, it
            break
    if best_z is not None and best_resid <= restol:
        return best_z, best_resid, best_it
    return None


def scan_roots(
    f,
    re_window=(0.0, 3.0),
    im_window=(-1.0, 1.0),
    n=40,
    extra_guesses=(),
    restol=1e-11,
    maxiter=60,
):
    """Newton from an n x n guess grid; dedupe and sort by growth rate.

    Returns a list of ComplexRoot sorted by decreasing Im(omega).
    """
    res = np.linspace(re_window[0], re_window[1], n)
    ims = np.linspace(im_window[0], im_window[1], n)
    guesses = [complex(a, b) for a in res for b in ims]
    guesses.extend(complex(g) for g in extra_guesses)

    found = {}
    for g in guesses:
        hit = newton_root(f, g, restol=restol, maxiter=maxiter)
        if hit is None:
            continue
        z, resid, its = hit
        key = (round(z.real, 7), round(z.imag, 7))
        if key not in found or resid < found[key].residual:
            found[key] = ComplexRoot(
                omega=z, residual=resid, iterations=its, guess=g
            )
    return sorted(found.values(), key=lambda r: -r.omega.imag)


def fastest_growing(f, **kwargs):
    roots = scan_roots(f, **kwargs)
    if not roots:
        raise RuntimeError("no dispersion root found in the scanned window")
    return roots[0]


# ---------------------------------------------------------------------------
# counter-streaming Maxwellian beams


def two_stream_residual(k, v_T, u=1.0, omega_pe=1.0):
    """Dielectric for two symmetric drifting-Maxwellian beams.

    eps(omega) = 1 + (omega_pe^2 / (2 k^2 v_T^2)) (2 + z+ Z(z+) + z- Z(z-)),
    z± = (omega/|k| ∓ u) / (sqrt(2) v_T).
    """
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    pref = omega_pe**2 / (2.0 * k * k * v_T * v_T)
    s2v = math.sqrt(2.0) * v_T

    def eps(w):
        zp = (w / k - u) / s2v
        zm = (w / k + u) / s2v
        return 1.0 + pref * (2.0 + zp * plasma_Z(zp) + zm * plasma_Z(zm))

    return eps


def two_stream_dispersion(k, v_T, u=1.0, omega_pe=1.0, n=40, extra_guesses=()):
    """Fastest-growing root of the two-beam relation."""
    eps = two_stream_residual(k, v_T, u=u, omega_pe=omega_pe)
    return fastest_growing(
        eps,
        re_window=(0.0, 3.0 * omega_pe),
        im_window=(-1.0, 1.0),
        n=n,
        extra_guesses=extra_guesses,
    )


def cold_two_stream_root(k, u=1.0, omega_pe=1.0):
    """Unstable (or least-stable) root of the cold two-beam quartic.

    (omega^2 - k^2 u^2)^2 = omega_pe^2 (omega^2 + k^2 u^2) for half-density
    beams; growing root exists iff k u < omega_pe.
    """
    a = (k * u / omega_pe) ** 2
    x = 0.5 * (2.0 * a + 1.0 - math.sqrt(8.0 * a + 1.0))  # (omega/omega_pe)^2
    if x < 0.0:
        return 1j * omega_pe * math.sqrt(-x)
    return omega_pe * math.sqrt(x) + 0j


def marginal_two_stream_k(v_T, u=1.0, omega_pe=1.0):
    """Wavenumber where the symmetric-beam mode is exactly marginal.

    The unstable mode sits at omega = 0, so marginality is
    eps(0) = 0  =>  k^2 = -omega_pe^2 (1 + zeta Re Z(zeta)) / v_T^2,
    zeta = u / (sqrt(2) v_T).
    """
    zeta = u / (math.sqrt(2.0) * v_T)
    val = 1.0 + zeta * plasma_Z(zeta).real
    if val >= 0.0:
        raise ValueError("no marginal wavenumber: beams too warm to destabilize")
    return omega_pe * math.sqrt(-val) / v_T


# ---------------------------------------------------------------------------
# gyrophase kernel shared by the magnetized relations
#
# K(W) = ∫_0^pi sin(W tau)/sin(W pi) sin(tau) R(cos(tau/2)) dtau
#
# The cross-field-drift relation's full-circle form maps onto this under
# tau = pi - phi (its sin(phi/2) becomes cos(tau/2)); the kernel is even in W,
# so signed vs absolute gyrofrequencies are interchangeable.


class GyroKernel:
    """Panel Gauss-Legendre quadrature of the gyrophase kernel.

    The radial factor R(cos(tau/2)) is independent of W, so it is cached on
    each node set; the panel count adapts to |W| (the integrand oscillates
    ~W times over [0, pi]).
    """

    def __init__(self, radial, order=16, min_panels=24):
        self._radial = radial
        self._order = order
        self._min_panels = min_panels
        self._cache = {}

    def _nodes(self, panels):
        if panels not in self._cache:
            x, w = leggauss(self._order)
            edges = np.linspace(0.0, np.pi, panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            tau = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            wts = (half[:, None] * w[None, :]).ravel()
            g = wts * np.sin(tau) * self._radial(np.cos(0.5 * tau))
            self._cache[panels] = (tau, g)
        return self._cache[panels]

    def _panels_for(self, W):
        return max(self._min_panels, int(math.ceil(3.0 * abs(W))))

    def __call__(self, W, panels=None):
        W = complex(W)
        den = np.sin(W * np.pi)
        if abs(den) < 1e-280:
            raise ZeroDivisionError(
                f"gyrophase kernel evaluated on a real harmonic: W={W!r}"
            )
        tau, g = self._nodes(panels or self._panels_for(W))
        return complex(np.sum(g * np.sin(W * tau))) / den

    def converged(self, W, tol=1e-9):
        """Refinement check: halve the panel width and compare."""
        p = self._panels_for(W)
        a = self(W, panels=p)
        b = self(W, panels=2 * p)
        return abs(a - b) <= tol * max(1.0, abs(b)), abs(a - b)


def bessel_sum_kernel(W, lam, nmax=None):
    """Harmonic-sum form of the gyrophase kernel for a Maxwellian radial
    factor: K(W) = sum_n e^{-lam} I_n(lam) / (1 - (W + n)^2).

    Independent oracle for the quadrature kernel (drift-free case).
    """
    W = complex(W)
    if nmax is None:
        nmax = int(10 + 2 * lam + 10 * math.sqrt(max(lam, 1.0)) + 3 * abs(W))
    n = np.arange(-nmax, nmax + 1)
    an = ive(n, lam)
    return complex(np.sum(an / (1.0 - (W + n) ** 2)))


def maxwellian_radial(k, v_T, Omega):
    """Radial (perpendicular-velocity) reduction of a Maxwellian.

    R(c) = exp(-2 k^2 v_T^2 c^2 / Omega^2): the closed form of
    ∫ f0 J0(2 k v c / Omega) 2 pi v dv for f0 = exp(-v^2/2v_T^2)/(2 pi v_T^2).
    """
    b2 = 2.0 * (k * v_T / Omega) ** 2

    def radial(c):
        return np.exp(-b2 * np.asarray(c) ** 2)

    return radial


def ring_radial(k, ell, alpha, Omega):
    """Radial reduction of the ring distribution: e^{-x} L_ell(x) with
    x = (k alpha c / Omega)^2 (Laguerre closed form of the Bessel moment)."""
    b = k * alpha / Omega

    def radial(c):
        x = (b * np.asarray(c)) ** 2
        return np.exp(-x) * eval_laguerre(ell, x)

    return radial


def ring_radial_quadrature(k, ell, alpha, Omega, n_nodes=200):
    """Direct Gauss-Laguerre evaluation of the ring's Bessel moment —
    the independent oracle for ring_radial."""
    s, w = roots_laguerre(n_nodes)
    b = k * alpha / Omega
    norm = math.factorial(ell)

    def radial(c):
        c = np.asarray(c, dtype=np.float64)
        arg = 2.0 * b * np.sqrt(s)[None, :] * np.atleast_1d(c)[:, None]
        vals = np.sum(w[None, :] * s[None, :] ** ell * j0(arg), axis=1) / norm
        return vals if np.ndim(c) else float(vals[0])

    return radial


# ---------------------------------------------------------------------------
# ring-distribution (Bernstein-type) relation, perpendicular propagation


def dgh_residual(k_perp, omega_ratio, ell=4, alpha=math.sqrt(2.0) / 2.0,
                 omega_pe=1.0):
    """Dielectric 1 + (omega_pe/Omega)^2 K(omega/|Omega|) for the ring."""
    if k_perp <= 0:
        raise ValueError("k_perp must be positive")
    Omega = abs(omega_ratio) * omega_pe
    kern = GyroKernel(ring_radial(k_perp, ell, alpha, Omega))
    pref = (omega_pe / Omega) ** 2

    def D(w):
        return 1.0 + pref * kern(w / Omega)

    D.kernel = kern
    D.Omega = Omega
    return D


def dgh_dispersion(k_perp, omega_ratio, ell=4, alpha=math.sqrt(2.0) / 2.0,
                   omega_pe=1.0, n=40, extra_guesses=(), check_quadrature=True):
    """Fastest-growing ring-distribution root near the given k_perp."""
    D = dgh_residual(k_perp, omega_ratio, ell=ell, alpha=alpha,
                     omega_pe=omega_pe)
    root = fastest_growing(
        D,
        re_window=(0.0, 3.0 * max(omega_pe, D.Omega)),
        im_window=(-1.0, 1.0),
        n=n,
        extra_guesses=extra_guesses,
    )
    flags = []
    W = root.omega / D.Omega
    if abs(W.imag) < 1e-6 and abs(W.real - round(W.real)) < 1e-3:
        flags.append("near-harmonic")
    if check_quadrature:
        ok, err = D.kernel.converged(W)
        if not ok:
            raise RuntimeError(
                f"gyrophase quadrature not converged at the root: delta={err:.3e}"
            )
    if flags:
        root = ComplexRoot(root.omega, root.residual, root.iterations,
                           root.guess, tuple(flags))
    return root


# ---------------------------------------------------------------------------
# acceleration-driven cross-field drift relation (two species)


@dataclass(frozen=True)
class DriftSpecies:
    """Per-species parameters of the drift relation."""

    omega_ps2: float  # squared plasma frequency
    Omega: float      # signed gyrofrequency q B / m
    v_T: float        # thermal velocity


def lhdi_residual(k, species, G_y):
    """Dielectric 1 + sum_s (omega_ps^2/Omega_s^2) K_s(W_s) with
    W_s = omega/Omega_s - k G_y / Omega_s^2 (Doppler shift by the
    acceleration drift u_s = G_y/Omega_s)."""
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    kerns = [
        GyroKernel(maxwellian_radial(k, s.v_T, s.Omega)) for s in species
    ]

    def D(w):
        total = 1.0 + 0j
        for s, kern in zip(species, kerns):
            W = w / s.Omega - k * G_y / s.Omega**2
            total += s.omega_ps2 / s.Omega**2 * kern(W)
        return total

    D.kernels = kerns
    D.species = tuple(species)
    return D


def lhdi_dispersion(k, species, G_y, re_window=None, im_window=(-1.0, 1.0),
                    n=40, extra_guesses=()):
    """Fastest-growing root of the two-species drift relation."""
    D = lhdi_residual(k, species, G_y)
    if re_window is None:
        scale = max(
            max(math.sqrt(s.omega_ps2) for s in species),
            max(abs(s.Omega) for s in species),
        )
        re_window = (0.0, 3.0 * scale)
    root = fastest_growing(
        D, re_window=re_window, im_window=im_window, n=n,
        extra_guesses=extra_guesses,
    )
    flags = []
    for s in species:
        W = root.omega / s.Omega - k * G_y / s.Omega**2
        if abs(W.imag) < 1e-6 and abs(W.real - round(W.real)) < 1e-3:
            flags.append("near-harmonic")
            break
    if flags:
        root = ComplexRoot(root.omega, root.residual, root.iterations,
                           root.guess, tuple(flags))
    return root


# ---------------------------------------------------------------------------
# Maxwellian Landau damping


def landau_residual(k, omega_pe=1.0):
    """eps(omega) = 1 + (omega_pe^2/k^2)(1 + zeta Z(zeta)), zeta = omega/(sqrt(2) k)."""
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    s2k = math.sqrt(2.0) * k

    def eps(w):
        zeta = w / s2k
        return 1.0 + (omega_pe / k) ** 2 * (1.0 + zeta * plasma_Z(zeta))

    return eps


def landau_rate(k, omega_pe=1.0, n=40):
    """Least-damped Langmuir root (Im omega < 0) for 0 < k <= 1."""
    if not 0.0 < k <= 1.0:
        raise ValueError("landau_rate expects 0 < k <= 1")
    eps = landau_residual(k, omega_pe=omega_pe)
    roots = scan_roots(
        eps, re_window=(0.0, 3.0 * omega_pe), im_window=(-1.0, 1.0), n=n
    )
    damped = [r for r in roots if r.omega.imag < 0.0 and r.omega.real > 0.1]
    if not damped:
        raise RuntimeError("no damped root found in the scanned window")
    return damped[0]  # scan_roots sorts by Im desc: first = least damped


# ---------------------------------------------------------------------------
# wavenumber scans with root continuation


def scan_wavenumbers(residual_factory, ks, re_window, im_window=(-1.0, 1.0),
                     n=12):
    """Fastest-growing root vs wavenumber, seeding each k with the previous
    root so branches are followed continuously."""
    out = []
    prev = None
    for k in ks:
        f = residual_factory(k)
        extras = (prev.omega,) if prev is not None else ()
        root = fastest_growing(
            f, re_window=re_window, im_window=im_window, n=n,
            extra_guesses=extras,
        )
        out.append((float(k), root))
        prev = root
    return out
