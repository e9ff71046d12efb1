"""Capacities of random walk ranges in Z^3 / Z^4 and of Brownian paths in R^3."""
import os

# the installed TBB is too old for numba; skip it instead of warning on every run
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

from .continuum_capacity import (PointCloud, SimplexWeights, capacity_bm, energy,  # noqa: E402
                                 minimize_energy_fw, occupation_cloud, sphere_cloud)
from .estimators import BrownianCapacity, EquilibriumCapacity, RangeCapacity  # noqa: E402
from .exceptions import ConfigurationError, NumericalError  # noqa: E402
from .green_kernel import (GreenKernel, build_kernel_table, default_kernel, green,  # noqa: E402
                           green_asymptotic, green_continuum, green_exact)
from .lattice_walk import (RangeSet, RngStream, Trajectory, build_range,  # noqa: E402
                           derive_stream, first_entrance, hitting_time, simulate_bm, simulate_srw)
from .potential import (CapacityEstimate, EquilibriumSolution, capacity_exact,  # noqa: E402
                        capacity_far_point, capacity_mc, equilibrium_measure,
                        escape_probability_mc, hitting_probability)

__version__ = "0.1.0"

__all__ = [
    "BrownianCapacity", "CapacityEstimate", "ConfigurationError", "EquilibriumCapacity",
    "EquilibriumSolution", "GreenKernel", "NumericalError", "PointCloud", "RangeCapacity",
    "RangeSet", "RngStream", "SimplexWeights", "Trajectory", "build_kernel_table", "build_range",
    "capacity_bm", "capacity_exact", "capacity_far_point", "capacity_mc", "default_kernel",
    "derive_stream", "energy", "equilibrium_measure", "escape_probability_mc", "first_entrance",
    "green", "green_asymptotic", "green_continuum", "green_exact", "hitting_probability",
    "hitting_time", "minimize_energy_fw", "occupation_cloud", "simulate_bm", "simulate_srw",
    "sphere_cloud",
]
