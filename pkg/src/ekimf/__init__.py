"""Ensemble Kalman inversion, its mean-field bridge system, and tools for
measuring how fast finite ensembles approach the mean-field limit."""

from .core import Ensemble, NoiseStream, SpdMatrix
from .eki import EkiRunConfig, ensemble_stats, run_eki
from .meanfield import GaussianDensity, gaussian_flow, run_coupled
from .model import ForwardModel, NonlinearPart, Prior

__version__ = "0.1.0"

__all__ = [
    "EkiRunConfig", "Ensemble", "ForwardModel", "GaussianDensity", "NoiseStream",
    "NonlinearPart", "Prior", "SpdMatrix", "ensemble_stats", "gaussian_flow",
    "run_coupled", "run_eki",
]
