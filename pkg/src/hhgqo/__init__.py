"""Quantum-optical model of high-harmonic generation in the perturbative regime."""

from .fock import DensityMatrix, FockState, ModeDims
from .model import ModelParams, PerturbativeAmplitudes, perturbative_amplitudes
from .observables import (
    CorrelationReport,
    cbs_ratio,
    coherence,
    correlation_report,
    gamma,
    log_negativity,
    mean_photon,
)

__all__ = [
    "CorrelationReport",
    "DensityMatrix",
    "FockState",
    "ModeDims",
    "ModelParams",
    "PerturbativeAmplitudes",
    "cbs_ratio",
    "coherence",
    "correlation_report",
    "gamma",
    "log_negativity",
    "mean_photon",
    "perturbative_amplitudes",
]
