"""Fokker-Planck equations for SDEs driven by Lévy noise.

The package builds the forward operator of ``dX = f(X, t) dt + sigma(X, t) dL``
for a scalar Lévy process ``L`` in either the Itô or the Marcus
interpretation, time-steps the resulting integro-differential equation on a
uniform grid, and cross-checks the result against Monte Carlo paths.
"""

__version__ = "0.1.0"

from .levy_core import (DiracAtOne, GaussianCompoundPoisson, InvalidParameter, LevyTriplet,
                        MomentDivergent, NullMeasure, SymmetricAlphaStable, series_coefficients,
                        validate_jump_measure)
from .grid import GridFunction, GridSpec, l1_distance, mass, negativity
from .model import Convention, SdeModel, SigmaVanishes
from .generator import (IntegralAdditive, Pushforward, Series, UnsupportedPolicy, apply_fpe_rhs,
                        apply_generator, adjoint_pairing_residual)
from .fpe_solver import (DensityTrajectory, Scheme, SolverConfig, StabilityViolation, solve_fpe,
                         solve_backward_kolmogorov)
from .marcus import FlowBlowup, lamperti, marcus_flow, solve_marcus_fpe
from .mc_oracle import EnsembleResult, empirical_density, simulate_paths
from .expr import ExpressionError, parse_expression
from .config import ConfigError, ScenarioConfig, load_config

__all__ = [
    "DiracAtOne", "GaussianCompoundPoisson", "InvalidParameter", "LevyTriplet", "MomentDivergent",
    "NullMeasure", "SymmetricAlphaStable", "series_coefficients", "validate_jump_measure",
    "GridFunction", "GridSpec", "l1_distance", "mass", "negativity",
    "Convention", "SdeModel", "SigmaVanishes",
    "IntegralAdditive", "Pushforward", "Series", "UnsupportedPolicy", "apply_fpe_rhs",
    "apply_generator", "adjoint_pairing_residual",
    "DensityTrajectory", "Scheme", "SolverConfig", "StabilityViolation", "solve_fpe",
    "solve_backward_kolmogorov",
    "FlowBlowup", "lamperti", "marcus_flow", "solve_marcus_fpe",
    "EnsembleResult", "empirical_density", "simulate_paths",
    "ExpressionError", "parse_expression", "ConfigError", "ScenarioConfig", "load_config",
]
