"""Spatiotemporal intrinsic mode decomposition.

Multichannel signals are factored as ``X ~ B S`` where the columns of B are
unit spatial directions and the rows of S are intrinsic mode functions
``a(t) cos(theta(t))`` found by nonlinear matching pursuit.
"""

__version__ = "0.1.0"

from .baselines import fastica_factorize, suggest_guesses, svd_factorize, truncation_error
from .decomposition import DecompositionResult, StimdConfig, reconstruct, sphere_minimize, stimd_decompose
from .nmp import ImfComponent, NmpConfig, nmp_extract
from .prediction import PhaseDynamicsModel, fit_phase_dynamics, predict
from .signals import SignalMatrix
from .spectrum import SpectrumGrid, hilbert_spectrum, instantaneous_frequency
from .synth import align_and_score, generate_example
from .theta_space import PhaseFunction, ThetaSpaceConfig, envelope_solve, normalize_phase, project_to_V

__all__ = [
    "DecompositionResult",
    "ImfComponent",
    "NmpConfig",
    "PhaseDynamicsModel",
    "PhaseFunction",
    "SignalMatrix",
    "SpectrumGrid",
    "StimdConfig",
    "ThetaSpaceConfig",
    "align_and_score",
    "envelope_solve",
    "fastica_factorize",
    "fit_phase_dynamics",
    "generate_example",
    "hilbert_spectrum",
    "instantaneous_frequency",
    "nmp_extract",
    "normalize_phase",
    "predict",
    "project_to_V",
    "reconstruct",
    "sphere_minimize",
    "stimd_decompose",
    "suggest_guesses",
    "svd_factorize",
    "truncation_error",
]
