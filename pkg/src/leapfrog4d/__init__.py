"""Structure-preserving leapfrog integrators for relativistic charged-particle
dynamics in the 4D space-time formulation.

Three steppers (explicit, energy-preserving discrete-gradient, variational /
symplectic), their non-relativistic limits, electromagnetic field models, and
a diagnostics suite for the conservation properties; hot loops run through a
compiled kernel with a pure-Python fallback.
"""
from .backend import BACKEND
from .diagnostics import (ConservedReport, LorentzGenerator, convergence_order,
                          energy, fd_jacobian_det, fd_symplectic_defect,
                          mass_shell, noether, reference_solve,
                          rotation_z_generator)
from .fields import (AKind, BUILTIN_FIELDS, DiscreteGradientKind, FieldModel,
                     Polynomial3, StructuredField, avf_dgrad, axisymmetric_field,
                     builtin_field, constant_eb_field, dg_faraday,
                     discrete_gradient, faraday, midpoint_dgrad,
                     polynomial_field, quadratic_well_field,
                     quartic_uniform_b_field, quartic_well_field, zero_field)
from .integrators import (DEFAULT_SETTINGS, HalfStepState, IterationScheme,
                          NoConvergenceError, PhaseState, SolverSettings,
                          StepSizeError, boris_step, dg_lf_step,
                          explicit_lf_step, grid_momentum, initial_phase_state,
                          nonrel_dg_step, nonrel_variational_step,
                          phase_from_half_step, reversed_explicit_lf_step,
                          start_half_step, start_nonrel_half_step,
                          variational_step, variational_two_step_residual)
from .minkowski import (MINKOWSKI_DIAG, Momentum4, Position4,
                        SingularMatrixError, Velocity4, cayley, det4,
                        minkowski_apply, minkowski_matrix, solve4)
from .trajectory import (RECORD_COLUMNS, RunResult, RunSummary, integrate,
                         integrate_nonrel, limit_study)

__version__ = "0.1.0"
