"""Finite-element solver and global-optimality certificates for semilinear
elliptic optimal control on the unit square."""

from .certificates import (CERTIFIED_GLOBAL, CERTIFIED_UNIQUE, INCONCLUSIVE,
                           CertificateParams, CertificateReport, certify_continuous_norm,
                           certify_discrete, certify_sign, check_supersolution,
                           continuous_threshold, discrete_threshold,
                           gagliardo_nirenberg_constant, make_certificate_params)
from .fem import (FeFunction, assemble_mass, assemble_stiffness, band_mass_matrix,
                  clamped_control_load, clamped_control_sq_norm, exact_lq_norm,
                  lumped_mass, lumped_q_norm, smooth_l2_product)
from .harness import (ResultRow, RunSpec, build_problem, load_solution, parse_config,
                      run_sweep, save_solution, serialize_config, write_csv)
from .mesh import Mesh, build_uniform_mesh, interpolate
from .nonlinearity import (Nonlinearity, estimate_growth_ratio, evaluate,
                           make_custom, make_exponential, make_power_law)
from .problems import (ProblemSpec, StateBounds, make_case_spec, target_reachable,
                       target_unreachable)
from .solvers import (KKTSolution, MultistartResult, ResidualRecord, SolveDiagnostics,
                      SolverError, kkt_residual, multistart_probe, objective,
                      solve_kkt, solve_state)

__version__ = "0.1.0"
