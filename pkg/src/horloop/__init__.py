"""Numerical toolkit for closed sub-Riemannian geodesics on contact manifolds.

Pipeline: endpoint-map calculus over piecewise-constant controls, the
Lagrange-multiplier geodesic criterion, direct energy minimization within
a homotopy class, Hamiltonian shooting for periodic extremals, and a
min-max sweep driver on the horizontal loop space.
"""

from .config import RunConfig, load_config, make_rng, parse_config
from .errors import (ChartDomainError, ConfigError, ConstraintViolationError,
                     ContractionFailureError, DegenerateSolutionError,
                     HorloopError, LevelCollapseError, MeshFailureError,
                     NearSingularConstraintError, NonHorizontalVelocityError,
                     RankMismatchError, RestorationFailureError,
                     ShootingFailureError, SteeringFailureError,
                     UnsupportedOperationError)
from .extremals import (ExtremalState, GeodesicReport, extremal_flow,
                        extremal_to_loop, hamiltonian, lagrange_residual,
                        periodicity_residual, shoot_closed)
from .models import (Model, Point, frame_at, group_translate, heisenberg,
                     heisenberg_bracket_matrix, heisenberg_endpoint_exact,
                     make_model, reduce_mod_lattice)
from .paths import (Control, EndpointJacobians, HorizontalPath, adjoint_apply,
                    backward, concat_reverse, concatenate, endpoint_jacobians,
                    energy, integrate, minimal_control, path_csv_text,
                    resample, steer_local)
from .solvers import (Loop, SolveTrace, SolverConfig, Sweep,
                      contract_small_sweep, latitude_sweep, loop_residual,
                      minimize_in_class, minmax_sweep, project_gradient,
                      refine_critical_loop, restore_constraint,
                      rotating_sweep)

__version__ = "0.1.0"
