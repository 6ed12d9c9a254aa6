"""Echo-state property diagnostics for leaky reservoirs with non-smooth activations."""

from .activations import ActivationSpec, ConfigurationError, Family, apply_elementwise
from .analysis import codebook_stats, crowding_ratio, effective_gain, estimate_lipschitz
from .esp_harness import EspTestSpec, TrajectoryPairResult, enumerate_quantized_attractors, run_pair
from .reservoir import ReservoirConfig, ReservoirMatrices, build_reservoir, simulate, spectral_radius
from .sweep import PhaseDiagram, SweepGrid, emit, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec", "ConfigurationError", "Family", "apply_elementwise",
    "codebook_stats", "crowding_ratio", "effective_gain", "estimate_lipschitz",
    "EspTestSpec", "TrajectoryPairResult", "enumerate_quantized_attractors", "run_pair",
    "ReservoirConfig", "ReservoirMatrices", "build_reservoir", "simulate", "spectral_radius",
    "PhaseDiagram", "SweepGrid", "emit", "run_sweep",
]
