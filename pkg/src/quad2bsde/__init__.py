"""Quadratic second-order BSDEs on a trinomial lattice.

Backward dynamic programming over a finite volatility grid, with an
independent finite-difference PDE solver for cross-checks, risk-sensitive
control on top, and post-hoc BMO and a-priori diagnostics.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, ConvergenceError, DomainError, EvaluationError,
                     Quad2BsdeError, RangeError)
from .model import (ControlSet, GeneratorSpec, ProblemSpec, TerminalSpec, conjugate_hamiltonian,
                    make_generator, make_problem, make_terminal, pde_hamiltonian,
                    truncate_generator, validate_problem)
from .lattice import (Lattice, TransitionKernel, build_lattice, discrete_z, expectation,
                      forward_marginals, kernel_for, terminal_distribution)
from .qbsde import BsdeSolution, bsde_step, solve_bsde, solve_purely_quadratic
from .twobsde import (TwoBsdeSolution, expected_k, min_condition_gap, representation_check,
                      solve_2bsde, solve_2bsde_exponential, stationarity_experiment)
from .risk import (RiskSensitiveSolution, RiskSensitiveSpec, entropic_risk,
                   evaluate_fixed_control, solve_risk_sensitive)
from .pde import PdeSolution, cross_validate, feynman_kac_residual, solve_fnpde
from .diagnostics import (apriori_check, bmo_norm, bmo_report, diagnostic_rows,
                          doleans_moment_probe, energy_inequality_check, z_bmo_bound_check)

__all__ = [
    "__version__",
    "Quad2BsdeError", "ConfigurationError", "ConvergenceError", "DomainError",
    "EvaluationError", "RangeError",
    "ControlSet", "GeneratorSpec", "ProblemSpec", "TerminalSpec", "conjugate_hamiltonian",
    "make_generator", "make_problem", "make_terminal", "pde_hamiltonian",
    "truncate_generator", "validate_problem",
    "Lattice", "TransitionKernel", "build_lattice", "discrete_z", "expectation",
    "forward_marginals", "kernel_for", "terminal_distribution",
    "BsdeSolution", "bsde_step", "solve_bsde", "solve_purely_quadratic",
    "TwoBsdeSolution", "expected_k", "min_condition_gap", "representation_check",
    "solve_2bsde", "solve_2bsde_exponential", "stationarity_experiment",
    "RiskSensitiveSolution", "RiskSensitiveSpec", "entropic_risk", "evaluate_fixed_control",
    "solve_risk_sensitive",
    "PdeSolution", "cross_validate", "feynman_kac_residual", "solve_fnpde",
    "apriori_check", "bmo_norm", "bmo_report", "diagnostic_rows", "doleans_moment_probe",
    "energy_inequality_check", "z_bmo_bound_check",
]
