"""Trajectory-based Hamiltonian learning with spread probe states."""

from .dataset import MeasurementDataset, generate_dataset, regenerate
from .fisher_schedule import (
    Schedule,
    classical_fisher,
    diagonalization_scan,
    empirical_cumulative_exponent,
    ensemble_cfi_curve,
    fisher_matrix,
    loglog_slope_fit,
    predicted_exponents,
)
from .harness import PRESETS, ExperimentConfig, sweep_alpha, sweep_spread
from .pauli_model import ModelHamiltonian, ParameterSpec, build_model, term_generators
from .quantum_sim import eig_hermitian, evolve, probability_derivatives, sample_spread_state
from .recovery import RecoveryConfig, RecoveryDivergence, run_recovery

__all__ = [
    "ExperimentConfig", "MeasurementDataset", "ModelHamiltonian", "PRESETS", "ParameterSpec",
    "RecoveryConfig", "RecoveryDivergence", "Schedule", "build_model", "classical_fisher",
    "diagonalization_scan", "eig_hermitian", "empirical_cumulative_exponent",
    "ensemble_cfi_curve", "evolve", "fisher_matrix", "generate_dataset", "loglog_slope_fit",
    "predicted_exponents", "probability_derivatives", "regenerate", "run_recovery",
    "sample_spread_state", "sweep_alpha", "sweep_spread", "term_generators",
]
