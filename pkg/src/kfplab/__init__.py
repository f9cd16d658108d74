"""Numerical laboratory for the kinetic Fokker-Planck equation in a slab
with Maxwell (specular + diffusive) reflection walls."""

from .grid import PhaseGrid, make_grid, boundary_geometry, core_region
from .model import (BoundaryModel, CoefficientModel, builtin_model,
                    equilibrium_boundary, wall_maxwellian, wall_maxwellians)
from .weights import (WeightSpec, poly_weight, exp_weight, classify,
                      check_compatibility, twist, dual_twist)
from .operator import (GeneratorMatrix, assemble, dual_generator,
                       reflection_operator)
from .evolve import (PhaseField, TimeScheme, Trajectory, default_dt,
                     evolve_forward, evolve_dual_backward,
                     fundamental_solution, step_matrix,
                     read_snapshot, write_snapshot)
from .norms import (weighted_norm, dual_norm, bracket, boundary_budget,
                    find_A, interpolation_constants, core_seminorm)
from .spectral import (EigenTriplet, HarrisCertificate, NormPair,
                       principal_triplet, minorization_eta, minorization_for,
                       certificate, verify_decay, replay)
from .config import RunConfig, ConfigError, load_config, parse_config

__version__ = "0.1.0"
