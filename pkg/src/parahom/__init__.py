"""Numerical toolkit for periodic parabolic homogenization.

Cell and dual correctors on the space-time torus, smoothing operators with
boundary-layer cutoffs, a finite-volume theta-scheme for the oscillating and
homogenized problems, the two-scale expansion with its weak error identity,
and a rate-study harness with CSV/JSON reporting.
"""

from __future__ import annotations

from .cell import CorrectorSet, homogenized_matrix, solve_cell_problem
from .coefficients import CoefficientField, constant, from_samples, laminate_1d, spacetime_sin
from .dual import DualCorrectorSet, solve_dual
from .errors import ParahomError
from .gridfn import DomainSpec, GridFunction
from .harness import RateReport, StudyConfig, fit_slope, load_config, run_rate_study
from .smooth import KOperator, SmoothingKernel, s_eps
from .solver import GridPolicy, IBVPProblem, solve_ibvp
from .spectral import CellGrid
from .twoscale import build_w_eps, grad_w_norm, verify_error_identity

__all__ = [
    "CellGrid", "CoefficientField", "CorrectorSet", "DomainSpec", "DualCorrectorSet",
    "GridFunction", "GridPolicy", "IBVPProblem", "KOperator", "ParahomError", "RateReport",
    "SmoothingKernel", "StudyConfig", "build_w_eps", "constant", "fit_slope", "from_samples",
    "grad_w_norm", "homogenized_matrix", "laminate_1d", "load_config", "run_rate_study",
    "s_eps", "solve_cell_problem", "solve_dual", "solve_ibvp", "spacetime_sin",
    "verify_error_identity",
]
__version__ = "0.1.0"
