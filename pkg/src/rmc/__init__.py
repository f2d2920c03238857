"""Continuous robust tracking control for uncertain MIMO systems.

Simulation of the closed loop ``x^(n) = h(X) + g(X) tau`` under a
continuous robust controller that knows only the sign pattern of the
input gain, together with numerical diagnostics for the quantities that
drive its stability argument (error cascade, input-gain factorization,
gain conditions, integral inequalities, Lyapunov-type energies).
"""

from .cascade import (CascadeCoefficients, cascade_coefficients,
                      compute_errors, filtered_error)
from .controller import (BoundEstimates, ControllerState, GainSet,
                         check_alpha, compose_K, control_input,
                         controller_state_derivative, minimal_C, validate_C,
                         zeta_L)
from .decomp import SduFactors, leading_minors, sdu_decompose, sign_matrix
from .exceptions import (ConfigError, NonFiniteStateError, PlantModelError,
                         RmcError, SingularMinorError)
from .plants import (PlantModel, ReferenceTrajectory, benchmark_reference,
                     constant_reference, scalar_toy_plant, toy_reference,
                     two_link_accel, two_link_as_plant)
from .simulator import (ClosedLoopState, TrajectoryLog, initial_state,
                        recompute_errors, run_closed_loop, run_scenario, step)
from .analysis import (Lemma2Report, ProofSeries, ProofSignals, check_lemma1,
                       clean_sample_mask, detected_gamma1, estimate_bounds,
                       lemma1_grid_search, lemma1_margin_series, lemma2_report,
                       L_and_P, lyapunov_V1, proof_signal_series,
                       proof_signals_at, splitting_residuals)
from .config import (ScenarioConfig, build_scenario, load_config,
                     parse_config_text, serialize_config)

__version__ = "0.1.0"

__all__ = [
    "BoundEstimates", "CascadeCoefficients", "ClosedLoopState", "ConfigError",
    "ControllerState", "GainSet", "Lemma2Report", "NonFiniteStateError",
    "PlantModel", "PlantModelError", "ProofSeries", "ProofSignals",
    "ReferenceTrajectory", "RmcError", "ScenarioConfig", "SduFactors",
    "SingularMinorError", "TrajectoryLog", "benchmark_reference",
    "build_scenario", "cascade_coefficients", "check_alpha", "check_lemma1",
    "clean_sample_mask", "compose_K", "compute_errors", "constant_reference",
    "control_input", "controller_state_derivative", "detected_gamma1",
    "estimate_bounds", "filtered_error", "initial_state", "L_and_P",
    "leading_minors", "lemma1_grid_search", "lemma1_margin_series",
    "lemma2_report", "load_config", "lyapunov_V1", "minimal_C",
    "parse_config_text", "proof_signal_series", "proof_signals_at",
    "recompute_errors", "run_closed_loop", "run_scenario", "scalar_toy_plant",
    "sdu_decompose", "serialize_config", "sign_matrix", "splitting_residuals",
    "step", "toy_reference", "two_link_accel", "two_link_as_plant",
    "validate_C", "zeta_L",
]
