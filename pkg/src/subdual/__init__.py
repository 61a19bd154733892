"""Numerical laboratory for memory kernels with a companion (``k * l = 1``):
dual convolutions, Volterra resolvents, subdiffusive porous-medium and
reaction solvers, and checks of the associated duality estimates."""

from .convolution import (ConvOperator, check_fundamental_identity, check_integrodiff_duality,
                          check_successive_dual, conv, dual_conv)
from .estimates import (EstimateReport, uniqueness_gap, verify_basic, verify_basic_alt, verify_entropy,
                        verify_galpha, verify_pme, verify_spectral, verify_triple)
from .errors import (ConfigError, DomainError, GridMismatchError, MonotonicityError, PositivityError,
                     PreconditionError, SingularSystemError, SolverError)
from .grids import SpaceGrid, TimeGrid
from .kernels import (CellKernel, ExpShifted, Kernel, KernelPair, MultiTerm, PowerSum, Standard, Tabulated,
                      antiderivative, companion_kernel, eval_standard, standard_pair)
from .resolvent import (approx_identity_error, regularized_kernel, resolvent_family, solve_relaxation,
                        solve_resolvent)
from .reaction import ReactionSpec, mass_combination, simulate
from .solver import Field, Nonlinearity, ProblemSpec, SolverOptions, conv_weights, residual, solve
from .spectral import SpectralOperator, solve_nonlocal_pme

__version__ = "0.1.0"
