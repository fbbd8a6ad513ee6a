"""Finite-length simulation and scaling-law prediction for SC-LDPC codes on the BEC."""

__version__ = "0.1.0"

from .ensemble import EnsembleParams, Kind, TannerGraph, sample_erasures, sample_graph
from .evolution import ScalingParams, de_threshold, estimate_nu_theta
from .montecarlo import ExperimentSpec, run_experiment
from .peeling import Outcome, peel
from .scaling import mu0, predict
from .window import FULL_BP, WindowConfig, run_frame, window_decode

__all__ = [
    "EnsembleParams", "Kind", "TannerGraph", "sample_graph", "sample_erasures",
    "ScalingParams", "de_threshold", "estimate_nu_theta",
    "ExperimentSpec", "run_experiment", "Outcome", "peel", "mu0", "predict",
    "FULL_BP", "WindowConfig", "run_frame", "window_decode",
]
