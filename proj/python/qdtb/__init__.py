"""Quantum-dot time-bin entanglement simulation and analysis."""

from ._qdtb import (
    ConfigError,
    ConvergenceError,
    DataError,
    blinking_factor,
    cavity_resonance,
    cavity_spectrum,
    concurrence,
    efficiency_budget,
    expected_counts,
    extraction_efficiency,
    fidelity_phi_plus,
    fit_lifetime,
    fit_rabi,
    g2_zero,
    hom_delay_scan,
    hom_five_peak,
    ideal_timebin_density,
    linear_reconstruct,
    project_to_physical,
    purity,
    reconstruct,
    setting_labels,
    simulate_counts,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
