"""Numerical verification harness for weighted (Carleman-type) estimates of
ultraparabolic operators with a coupled linear drift."""

__version__ = "0.1.0"

from .carleman import (CarlemanParams, SeminormBundle, alpha_sweep, verify_global,
                       verify_identities, verify_lemma1, verify_lemma2, verify_local,
                       verify_solution_decay, weighted_seminorms)
from .coefficients import Coefficient
from .errors import (ConfigError, DimensionError, SimulationError, StateError, SupportError,
                     UltraCarlemanError, ValidationError)
from .linalg_core import DriftPair, c2_lower_bound, g_sup, kalman_matrix, numerical_rank
from .operator_model import Field, GridSpec, OperatorSpec, apply_P, apply_P_tilde
from .presets import drift_preset, operator_preset
from .report import VerificationReport

__all__ = [
    "CarlemanParams", "Coefficient", "ConfigError", "DimensionError", "DriftPair", "Field",
    "GridSpec", "OperatorSpec", "SeminormBundle", "SimulationError", "StateError",
    "SupportError", "UltraCarlemanError", "ValidationError", "VerificationReport",
    "alpha_sweep", "apply_P", "apply_P_tilde", "c2_lower_bound", "drift_preset", "g_sup",
    "kalman_matrix", "numerical_rank", "operator_preset", "verify_global",
    "verify_identities", "verify_lemma1", "verify_lemma2", "verify_local",
    "verify_solution_decay", "weighted_seminorms",
]
