"""vpfv: a desk-scale multi-partition continuum-kinetic Vlasov-Poisson solver.

Fourth-order finite-volume discretization of the electrostatic Vlasov-Poisson
system in 1D-1V, 1D-2V and 2D-2V phase space, with:

* five-point upwind face reconstruction plus transverse (diagonal) corrections,
* a three-buffer low-storage RK4 (3/8ths rule) integrator,
* CFL constants and stability envelopes from Von Neumann analysis,
* spectral periodic Poisson solve with zero-mean gauge,
* a simulated multi-rank partition/halo-exchange layer with traffic accounting,
* plasma benchmark problems (two-stream, ring cyclotron-harmonic instability,
  lower-hybrid drift instability, Landau damping) and independent
  linear-dispersion oracles for each.
"""

__version__ = "0.1.0"

from .grid import PhaseSpaceGrid, DistField, make_grid
from .fvm import SpeciesConfig

__all__ = [
    "PhaseSpaceGrid",
    "DistField",
    "make_grid",
    "SpeciesConfig",
    "__version__",
]
