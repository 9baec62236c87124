"""Numerical laboratory for weighted sub-Laplacians on unimodular Lie groups.

Concrete Euclidean and first-Heisenberg geometry, confining weights
M = exp(-v), truncated-grid Dirichlet/mass form pairs, spectral-gap and
resolvent-decay experiments, fractional quadrature identities, covering
nets, and non-local energies, with a CLI for reproducible batch runs.
"""

from .fractional import (CoveringNet, NonlocalReport, annulus_check, build_net,
                         controllalpha_check, lambda_alpha_estimate,
                         nonlocal_energy, overlap_bound_check, weighted_mass)
from .grids import (AssembledForms, Grid, GridError, ResolventError, apply_LM,
                    assemble, build_grid, read_triplets, solve_resolvent,
                    write_triplets)
from .groups import GroupError, GroupInstance, euclidean, heisenberg1
from .kernels import BACKEND as kernel_backend
from .spectral import (DenseCeilingError, EigenSolveError, OffdiagResult,
                       frac_power_apply, functional_calculus_check,
                       improved_gap, lempoinc_check, offdiag_experiment,
                       poincare_gap, quadratic_functional)
from .weights import (CertificateError, LyapunovCertificate, WeightError,
                      WeightSpec, build_lyapunov, condition_infimum,
                      improved_condition_infimum, library, polynomial_weight,
                      verify_lyapunov)

__version__ = "0.1.0"
